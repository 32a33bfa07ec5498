#pragma once

#include <array>
#include <string>
#include <utility>

#include "json.hpp"
#include "lorenz/interval.hpp"

namespace lorenz {

/// Constants of the concrete geometric Lorenz model.
///
/// The return map on V = [-r_plus, r_plus] x [-y_half, y_half] is, for x > 0,
///
///   f(x)   = r_plus * (b_slope * (x / r_plus)^(3/4) - 1)
///   g(x,y) = t_minus + c / (2 y_half + 1) * x * (y + y_half + 1)
///
/// extended to x = 0 by (r_minus, t_minus), and to x < 0 by odd symmetry.
/// The roof (return time) is r(x) = roof_base + roof_coeff * |ln|x||.
///
/// Values are exact rationals; r_plus must be a power of two and y_half a
/// dyadic so that every grid boundary over V is an exact dyadic.
struct ModelParams {
  mpq_class r_plus{1};
  mpq_class y_half{27};
  mpq_class b_slope = parse_rational("1.95");
  mpq_class c = parse_rational("0.6");
  mpq_class t_minus{2};
  mpq_class roof_base{1};
  mpq_class roof_coeff{1};

  static ModelParams defaults() { return {}; }

  // Structural requirements only; the F-properties are the validator's job.
  void check() const {
    if (r_plus <= 0 || !is_dyadic(r_plus) || mpz_popcount(r_plus.get_num().get_mpz_t()) != 1) {
      throw ConfigError("r_plus must be a positive power of two");
    }
    if (y_half <= 0 || !is_dyadic(y_half)) throw ConfigError("y_half must be a positive dyadic");
    if (roof_coeff <= 0) throw ConfigError("roof_coeff must be positive");
  }

  nlohmann::json to_json() const {
    auto str = [](const mpq_class& q) {
      if (is_dyadic(q)) return to_dyadic(q).to_decimal();
      return q.get_str();
    };
    return {{"r_plus", str(r_plus)},   {"y_half", str(y_half)},       {"b_slope", str(b_slope)},
            {"c", str(c)},             {"t_minus", str(t_minus)},     {"roof_base", str(roof_base)},
            {"roof_coeff", str(roof_coeff)}};
  }

  // Keys are optional (defaults apply); unknown keys are rejected. Values are
  // decimal strings ("0.6"), "m*2^e" strings, or "p/q" fractions.
  static ModelParams from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("model document must be a JSON object");
    ModelParams m;
    const std::array<std::pair<const char*, mpq_class ModelParams::*>, 7> fields{{
        {"r_plus", &ModelParams::r_plus},
        {"y_half", &ModelParams::y_half},
        {"b_slope", &ModelParams::b_slope},
        {"c", &ModelParams::c},
        {"t_minus", &ModelParams::t_minus},
        {"roof_base", &ModelParams::roof_base},
        {"roof_coeff", &ModelParams::roof_coeff},
    }};
    for (const auto& [key, value] : j.items()) {
      bool known = false;
      for (const auto& [name, member] : fields) {
        if (key != name) continue;
        known = true;
        if (!value.is_string()) throw ConfigError("model key '" + key + "' must be a decimal string");
        const std::string text = value.get<std::string>();
        if (text.find('/') != std::string::npos) {
          mpq_class q;
          if (q.set_str(text, 10) != 0 || q.get_den() == 0) throw ConfigError("malformed fraction: " + text);
          q.canonicalize();
          m.*member = q;
        } else {
          m.*member = parse_rational(text);
        }
      }
      if (!known) throw ConfigError("unknown model key '" + key + "'");
    }
    m.check();
    return m;
  }
};

enum class Side { plus, minus };

inline const char* to_string(Side s) { return s == Side::plus ? "plus" : "minus"; }

// Rectangle in the section plane.
struct Box {
  Interval x;
  Interval y;
  friend bool operator==(const Box&, const Box&) = default;
};

inline Box operator-(const Box& b) { return {-b.x, -b.y}; }

struct Point2 {
  Dyadic x;
  Dyadic y;
  friend bool operator==(const Point2&, const Point2&) = default;
};

/// The return map F = (f, g), its branch extensions F+ / F- to the singular
/// line D = {x = 0}, and the roof function, evaluated with outward rounding
/// at a fixed working precision.
class Model {
 public:
  explicit Model(ModelParams params = {}, Precision p = Precision(64)) : params_(std::move(params)), prec_(p) {
    params_.check();
    const Precision g = p + 8;
    r_plus_ = to_dyadic(params_.r_plus);
    r_plus_log2_ = r_plus_.exponent();
    y_half_ = to_dyadic(params_.y_half);
    b_ = Interval::enclose(params_.b_slope, g);
    c_ = Interval::enclose(params_.c, g);
    kappa_ = Interval::enclose(params_.c / (2 * params_.y_half + 1), g);
    t_minus_ = Interval::enclose(params_.t_minus, g).rounded_out(p + 1);
    base_ = Interval::enclose(params_.roof_base, g);
    coeff_ = Interval::enclose(params_.roof_coeff, g);
  }

  const ModelParams& params() const { return params_; }
  Precision precision() const { return prec_; }
  const Dyadic& r_plus() const { return r_plus_; }
  Dyadic r_minus() const { return -r_plus_; }
  const Dyadic& y_half() const { return y_half_; }
  const Interval& t_minus() const { return t_minus_; }
  Interval t_plus() const { return -t_minus_; }
  const Interval& kappa() const { return kappa_; }
  const Interval& c() const { return c_; }
  const Interval& b_slope() const { return b_; }

  // rho+ = (r-, t-) is where D lands under F+, rho- = (r+, t+) under F-.
  Box rho_plus() const { return {Interval(r_minus()), t_minus_}; }
  Box rho_minus() const { return {Interval(r_plus_), t_plus()}; }

  Box domain() const { return {Interval(r_minus(), r_plus_), Interval(-y_half_, y_half_)}; }
  Interval half_domain(Side s) const {
    return s == Side::plus ? Interval(Dyadic(), r_plus_) : Interval(r_minus(), Dyadic());
  }

  /// Enclosure of f+ at a point 0 <= x <= r_plus; f+(0) is the stored r-.
  Interval f_plus_point(const Dyadic& x) const {
    if (x.is_zero()) return Interval(r_minus());
    const Dyadic u = x.scaled(-r_plus_log2_);
    // sqrt amplifies errors by ~1/sqrt near 0: spend extra guard bits there.
    const long mag = u.magnitude_bits();
    const Precision g = prec_ + (8 + static_cast<int>(mag < 0 ? -mag : 0));
    const Interval u34 = sqrt(sqrt(Interval(u * u * u), g), g);
    const Interval v = mul(b_, u34, g) - Interval(Dyadic(1));
    return Interval(v.lo().scaled(r_plus_log2_), v.hi().scaled(r_plus_log2_)).rounded_out(prec_ + 1);
  }

  /// Monotone branch image f_side(x).
  Interval f_branch(Side side, const Interval& x) const {
    if (side == Side::minus) return -f_branch(Side::plus, -x);
    if (!half_domain(Side::plus).contains(x)) throw PreconditionError("domain", "f_branch: x outside the branch domain");
    if (x.is_point()) return f_plus_point(x.lo());
    return {f_plus_point(x.lo()).lo(), f_plus_point(x.hi()).hi()};
  }

  // kappa * x for 0 <= x, shared by every g evaluation in a grid column.
  Interval kappa_x(const Dyadic& x) const { return mul(kappa_, Interval(x), prec_ + 4); }

  // g+ lower bound at (x_lo, y_lo) and upper bound at (x_hi, y_hi), using
  // precomputed kappa*x enclosures. g+ is increasing in both arguments on V+.
  Dyadic g_plus_lower(const Interval& kx_lo, const Dyadic& y_lo) const {
    const Dyadic shift = y_lo + y_half_ + Dyadic(1);
    return (t_minus_.lo() + (kx_lo.lo() * shift).round_down(prec_.bits + 3)).round_down(prec_.bits + 1);
  }
  Dyadic g_plus_upper(const Interval& kx_hi, const Dyadic& y_hi) const {
    const Dyadic shift = y_hi + y_half_ + Dyadic(1);
    return (t_minus_.hi() + (kx_hi.hi() * shift).round_up(prec_.bits + 3)).round_up(prec_.bits + 1);
  }

  Interval g_branch(Side side, const Interval& x, const Interval& y) const {
    if (side == Side::minus) return -g_branch(Side::plus, -x, -y);
    if (!half_domain(Side::plus).contains(x)) throw PreconditionError("domain", "g_branch: x outside the branch domain");
    if (!Interval(-y_half_, y_half_).contains(y)) throw PreconditionError("domain", "g_branch: y outside [-y_half, y_half]");
    const Dyadic lo = x.lo().is_zero() ? t_minus_.lo() : g_plus_lower(kappa_x(x.lo()), y.lo());
    const Dyadic hi = x.hi().is_zero() ? t_minus_.hi() : g_plus_upper(kappa_x(x.hi()), y.hi());
    return {lo, hi};
  }

  /// F_side on box ∩ V^side.
  Box F_branch(Side side, const Box& box) const {
    const Interval half = half_domain(side);
    if (!half.intersects(box.x)) throw PreconditionError("domain", "F_branch: box misses the branch half-plane");
    const Interval x(max(box.x.lo(), half.lo()), min(box.x.hi(), half.hi()));
    return {f_branch(side, x), g_branch(side, x, box.y)};
  }

  // F at a single point, choosing the branch by the sign of x (x = 0 uses F+).
  Box F_point(const Dyadic& x, const Dyadic& y) const {
    const Side s = x.sign() < 0 ? Side::minus : Side::plus;
    return F_branch(s, {Interval(x), Interval(y)});
  }

  /// r(x) = base + C |ln|x||, singular on D.
  Interval roof(const Interval& x) const {
    if (x.contains_zero()) throw PreconditionError("singularity", "roof is singular on D (x = 0)");
    const Interval lnabs = ln(abs(x), prec_ + 2);
    return (base_ + mul(coeff_, abs(lnabs), prec_ + 2)).rounded_out(prec_ + 1);
  }

  /// Integral of r over [0, x] for 0 < x <= r_plus (closed form of the log).
  Interval roof_antiderivative(const Dyadic& x) const {
    if (x.sign() < 0) throw PreconditionError("domain", "roof_antiderivative needs x >= 0");
    if (x.is_zero()) return Interval(Dyadic());
    const Precision g = prec_ + 4;
    const Interval lx = ln(Interval(x), g);
    const Interval X(x);
    Interval log_part;  // integral of |ln t| over [0, x]
    if (x <= Dyadic(1)) {
      log_part = mul(X, Interval(Dyadic(1)) - lx, g);
    } else {
      log_part = mul(X, lx, g) - X + Interval(Dyadic(2));
    }
    return (mul(base_, X, g) + mul(coeff_, log_part, g)).rounded_out(prec_ + 1);
  }

  // Constants of the roof: r(r_plus) for r_plus = 1 is roof_base.
  const Interval& roof_base() const { return base_; }
  const Interval& roof_coeff() const { return coeff_; }

 private:
  ModelParams params_;
  Precision prec_;
  Dyadic r_plus_;
  long r_plus_log2_ = 0;
  Dyadic y_half_;
  Interval b_, c_, kappa_, t_minus_, base_, coeff_;
};

}  // namespace lorenz
