#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "lorenz/attractor.hpp"

namespace lorenz {

struct Point3 {
  Dyadic x, y, z;
  friend bool operator==(const Point3&, const Point3&) = default;
};

struct Box3 {
  Interval x, y, z;
  friend bool operator==(const Box3&, const Box3&) = default;
  bool contains(const Box3& o) const { return x.contains(o.x) && y.contains(o.y) && z.contains(o.z); }
};

/// Declared bounds of a vector field h on the band V x [27 - eps, 27 + eps]
/// (alpha, beta, sin theta) and on its validity region (Lipschitz constant,
/// logarithmic norm and speed bound used for the Euler error budget).
struct FieldBounds {
  Dyadic alpha_min;    // min |h| on the band
  Dyadic beta_max;     // max |h| on the band
  Dyadic sin_theta;    // lower bound of sin of the angle between h and the section
  Dyadic band_eps;     // half-height of the band on which the bounds hold
  Dyadic lipschitz;    // Lipschitz constant of h on the region
  Dyadic log_norm;     // upper bound of the logarithmic norm of Dh on the region
  Dyadic speed_max;    // max |h| on the region
  Box3 region;         // trajectories leaving this box raise an escape error
  Dyadic section_height = Dyadic(27);

  void check() const {
    if (alpha_min.sign() <= 0) throw ConfigError("field: alpha_min must be positive");
    if (beta_max < alpha_min) throw ConfigError("field: beta_max must be >= alpha_min");
    if (sin_theta.sign() <= 0 || sin_theta > Dyadic(1)) throw ConfigError("field: sin_theta must lie in (0, 1]");
    if (band_eps.sign() <= 0) throw ConfigError("field: band eps must be positive");
    if (lipschitz.sign() < 0 || speed_max < beta_max) throw ConfigError("field: inconsistent lipschitz/speed bounds");
  }
};

/// A field usable by the adapted Euler solver. `height` is the signed
/// coordinate transverse to the section (the section is height = 27), and
/// `landing` maps a state at the section back to section coordinates.
template <typename F>
concept VectorField = requires(const F& f, const Box3& b, Precision p) {
  { f.eval(b, p) } -> std::same_as<Box3>;
  { f.height(b) } -> std::same_as<Interval>;
  { f.landing(b) } -> std::same_as<Box>;
  { f.bounds() } -> std::convertible_to<const FieldBounds&>;
  { f.section_point(Dyadic(), Dyadic()) } -> std::same_as<Point3>;
  { f.name() } -> std::convertible_to<std::string>;
};

/// Circle testbed h = (0, z - 27, -(y - y0)): orbits are circles about
/// (y0, 27) in the (y, z) plane with period 2 pi.
class CircleField {
 public:
  explicit CircleField(Dyadic y0 = Dyadic(-20)) : y0_(std::move(y0)) {
    b_.alpha_min = Dyadic(20);
    b_.beta_max = Dyadic(50);
    b_.sin_theta = Dyadic(mpz_class(115), -7);  // 0.8984375 <= 0.9
    b_.band_eps = Dyadic(1);
    b_.lipschitz = Dyadic(1);
    b_.log_norm = Dyadic(0);
    b_.speed_max = Dyadic(80);
    b_.region = {Interval(-1, 1), Interval(y0_ - Dyadic(60), Dyadic(40)), Interval(Dyadic(27 - 60), Dyadic(27 + 60))};
    b_.check();
  }

  Box3 eval(const Box3& s, Precision) const { return {Interval(0), s.z - Interval(27), -(s.y - Interval(y0_))}; }
  Interval height(const Box3& s) const { return s.z; }
  Box landing(const Box3& s) const { return {s.x, s.y}; }
  const FieldBounds& bounds() const { return b_; }
  Point3 section_point(const Dyadic& x, const Dyadic& y) const {
    // The transverse speed at the section is y - y0; it must meet alpha_min.
    if (y - y0_ < b_.alpha_min) throw PreconditionError("circle field: start needs y >= y0 + alpha_min");
    return {x, y, Dyadic(27)};
  }
  std::string name() const { return "circle"; }
  const Dyadic& y0() const { return y0_; }

 private:
  Dyadic y0_;
  FieldBounds b_;
};

/// The suspension semiflow of the model written as a field on (x, y, s):
/// h = (0, 0, 1). The transverse height is 27 - s on the way down and
/// 27 + (roof(x) - s) on the way back, so the state re-enters the section
/// from above exactly when s reaches roof(x); landing applies F.
class ModelSuspensionField {
 public:
  explicit ModelSuspensionField(Model model) : model_(std::move(model)) {
    b_.alpha_min = Dyadic(1);
    b_.beta_max = Dyadic(1);
    b_.sin_theta = Dyadic(1);
    b_.band_eps = Dyadic(1);
    b_.lipschitz = Dyadic(0);
    b_.log_norm = Dyadic(0);
    b_.speed_max = Dyadic(1);
    const Box d = model_.domain();
    b_.region = {d.x, d.y, Interval(Dyadic(-1), Dyadic(1 << 20))};
    b_.check();
  }

  Box3 eval(const Box3&, Precision) const { return {Interval(0), Interval(0), Interval(1)}; }
  Interval height(const Box3& s) const {
    const Interval r = model_.roof(s.x);
    const Interval down = Interval(27) - s.z;
    const Interval up = Interval(27) + r - s.z;
    const Interval half(r.lo().scaled(-1), r.hi().scaled(-1));
    if (s.z.hi() < half.lo()) return down;
    if (s.z.lo() >= half.hi()) return up;
    return Interval::hull(down, up);
  }
  Box landing(const Box3& s) const {
    const Box b{s.x, s.y};
    if (s.x.lo().sign() >= 0) return model_.F_branch(Side::plus, b);
    if (s.x.hi().sign() <= 0) return model_.F_branch(Side::minus, b);
    throw PreconditionError("singularity", "landing: state meets the singular line");
  }
  const FieldBounds& bounds() const { return b_; }
  Point3 section_point(const Dyadic& x, const Dyadic& y) const {
    if (x.is_zero()) throw PreconditionError("singularity", "model suspension: x = 0 never returns");
    if (!model_.domain().x.contains(x) || !model_.domain().y.contains(y)) {
      throw PreconditionError("domain", "model suspension: start outside V");
    }
    return {x, y, Dyadic()};
  }
  std::string name() const { return "model-suspension"; }
  const Model& model() const { return model_; }

 private:
  Model model_;
  FieldBounds b_;
};

struct ReturnTimeResult {
  Dyadic time;          // detection time, |time - r(a)| <= eps
  Dyadic eps;
  Dyadic eps0;          // band height
  Dyadic delta;         // accepted step
  std::uint64_t steps = 0;
  int departure_band_iterates = 0;
  int return_band_iterates = 0;
  int restarts = 0;     // step halvings needed to meet the error budget
  double max_error = 0;  // certified radius of the last accepted iterate
  Box3 state;           // enclosure of the trajectory at detection
  Box landing;          // section point l(a) enclosure

  nlohmann::json to_json() const {
    auto iv = [](const Interval& v) { return nlohmann::json{{"lo", v.lo().to_decimal()}, {"hi", v.hi().to_decimal()}}; };
    return {{"time", time.to_decimal()},
            {"time_dyadic", time.to_string()},
            {"eps", eps.to_decimal()},
            {"eps0", eps0.to_string()},
            {"delta", delta.to_string()},
            {"steps", steps},
            {"departure_band_iterates", departure_band_iterates},
            {"return_band_iterates", return_band_iterates},
            {"restarts", restarts},
            {"max_error", max_error},
            {"landing", {{"x", iv(landing.x)}, {"y", iv(landing.y)}}}};
  }
};

namespace detail {

inline double up(double v) { return std::nextafter(v, std::numeric_limits<double>::infinity()); }
inline double up_of(const Dyadic& d) { return up(up(std::abs(d.to_double()))); }

// Largest dyadic of the form 2^e, e integer, that is <= q (q > 0).
inline Dyadic pow2_below(const mpq_class& q) {
  long e = 0;
  while (Dyadic::pow2(e).to_rational() > q) --e;
  while (Dyadic::pow2(e + 1).to_rational() <= q) ++e;
  return Dyadic::pow2(e);
}

// Euclidean norm bound of a box's magnitudes.
inline double norm_hi(const Box3& v) {
  auto m = [](const Interval& a) { return std::max(up_of(a.lo()), up_of(a.hi())); };
  const double s = up(up(m(v.x) * m(v.x)) + up(m(v.y) * m(v.y)) + up(m(v.z) * m(v.z)));
  return up(std::sqrt(s));
}
inline double radius_hi(const Box3& v) {
  auto r = [](const Interval& a) { return up_of(a.width().scaled(-1)); };
  return up(std::sqrt(up(up(r(v.x) * r(v.x)) + up(r(v.y) * r(v.y)) + up(r(v.z) * r(v.z)))));
}
inline Interval ball(const Dyadic& c, double r) {
  const Dyadic rr = from_double(up(r));
  return {c - rr, c + rr};
}

}  // namespace detail

/// First return time to the section by the adapted Euler method: band height
/// eps0 <= min(eps alpha sin(theta) / 2, band_eps), step delta <= eps0 / (2
/// beta), centres rounded to a dyadic grid, and a certified error radius
/// propagated with the declared log-norm and Lipschitz bounds. The first
/// iterate after departure whose height enclosure meets [27, 27 + eps0] with
/// (x, y) possibly in V is accepted; the step is halved whenever the error
/// radius exceeds eps0 / 2.
template <VectorField F>
ReturnTimeResult return_time(const F& field, const Point3& a, const Dyadic& eps, const Box& section_domain,
                             std::uint64_t max_steps = 200'000'000) {
  if (eps.sign() <= 0) throw PreconditionError("return_time: eps must be positive");
  const FieldBounds& fb = field.bounds();
  const Box3 start{Interval(a.x), Interval(a.y), Interval(a.z)};
  if (!(field.height(start) == Interval(fb.section_height))) throw PreconditionError("return_time: start is not on the section");
  if (!section_domain.x.contains(a.x) || !section_domain.y.contains(a.y)) {
    throw PreconditionError("return_time: start outside V");
  }
  const mpq_class e0q = eps.to_rational() * fb.alpha_min.to_rational() * fb.sin_theta.to_rational() / 2;
  const Dyadic eps0 = min(detail::pow2_below(e0q), detail::pow2_below(fb.band_eps.to_rational()));
  Dyadic delta = detail::pow2_below(eps0.to_rational() / (2 * fb.beta_max.to_rational()));
  const Dyadic h0 = fb.section_height;
  const Interval band_up(h0, h0 + eps0), band_down(h0 - eps0, h0);
  const double budget = eps0.to_double() / 2;
  const double L = detail::up_of(fb.lipschitz), mu = std::max(0.0, fb.log_norm.to_double());
  const long prec = std::max<long>(40, 24 - delta.exponent() + (eps.magnitude_bits() < 0 ? -eps.magnitude_bits() : 0));
  const Precision p(static_cast<int>(prec));

  for (int restart = 0; restart < 12; ++restart, delta = delta.scaled(-1)) {
    ReturnTimeResult res;
    res.eps = eps;
    res.eps0 = eps0;
    res.delta = delta;
    res.restarts = restart;
    const double d = delta.to_double();
    const double grow = detail::up(1 + detail::up(d * mu) + detail::up(d * mu * d * mu));
    const double lip_step = detail::up(1 + 2 * L * d);
    Point3 c = a;
    double err = 0;
    bool departed = false, over_budget = false;
    for (std::uint64_t k = 0; k < max_steps; ++k) {
      const Box3 cb{Interval(c.x), Interval(c.y), Interval(c.z)};
      const Box3 v = field.eval(cb, p);
      const double speed = detail::norm_hi(v);
      // Euler step from the centre.
      const Point3 exact{c.x + delta * v.x.mid(), c.y + delta * v.y.mid(), c.z + delta * v.z.mid()};
      const Point3 next{exact.x.round_down(p.bits), exact.y.round_down(p.bits), exact.z.round_down(p.bits)};
      const Box3 rounding{Interval(exact.x - next.x), Interval(exact.y - next.y), Interval(exact.z - next.z)};
      const double local_speed = detail::up(detail::up(speed + detail::up(L * err)) * lip_step);
      err = detail::up(detail::up(err * grow) + detail::up(d * d / 2 * L * local_speed));
      err = detail::up(err + detail::up(d * detail::radius_hi(v)) + detail::norm_hi(rounding) * 2);
      res.max_error = err;
      c = next;
      ++res.steps;
      if (err > budget) {
        over_budget = true;
        break;
      }
      const Box3 s{detail::ball(c.x, err), detail::ball(c.y, err), detail::ball(c.z, err)};
      if (!fb.region.contains(s)) throw PreconditionError("escape", "return_time: trajectory left the validity region");
      const Interval ht = field.height(s);
      const bool in_v = section_domain.x.intersects(s.x) && section_domain.y.intersects(s.y);
      if (!departed) {
        // Departure ends once the whole enclosure is below the lower band.
        if (band_down.contains(field.height(Box3{Interval(c.x), Interval(c.y), Interval(c.z)}).mid())) {
          ++res.departure_band_iterates;
        }
        if (ht.hi() < band_down.lo()) departed = true;
        continue;
      }
      if (in_v && ht.intersects(band_up)) {
        // Band speed check against the declared bounds.
        if (speed > detail::up(fb.beta_max.to_double() + L * err) * (1 + 1e-12)) {
          throw PreconditionError("bounds", "return_time: observed speed exceeds beta_max");
        }
        res.time = delta * Dyadic(static_cast<long>(k + 1));
        res.state = s;
        res.landing = field.landing(s);
        // Count the iterates whose centres pass through the band before
        // crossing the section (the solver looks ahead, the result is fixed).
        res.return_band_iterates = 0;
        Point3 c2 = c;
        for (int extra = 0; extra < 1 << 16; ++extra) {
          const Interval hc = field.height(Box3{Interval(c2.x), Interval(c2.y), Interval(c2.z)});
          if (hc.mid() < h0) break;
          if (band_up.contains(hc.mid())) ++res.return_band_iterates;
          const Box3 v2 = field.eval(Box3{Interval(c2.x), Interval(c2.y), Interval(c2.z)}, p);
          c2 = {(c2.x + delta * v2.x.mid()).round_down(p.bits), (c2.y + delta * v2.y.mid()).round_down(p.bits),
                (c2.z + delta * v2.z.mid()).round_down(p.bits)};
        }
        return res;
      }
    }
    if (!over_budget) throw ResourceError("return_time: step ceiling reached before the return");
  }
  throw ResourceError("return_time: error budget not met after 12 step halvings");
}

/// Landing point l(a) of the first return; its distance to the true landing
/// point is at most eps (1 + beta) plus the certified radius.
template <VectorField F>
Box poincare_from_flow(const F& field, const Point3& a, const Dyadic& eps, const Box& section_domain) {
  return return_time(field, a, eps, section_domain).landing;
}

/// Suspension of the outer cover: per cell a stack of s-slabs of height
/// 2^-m_s up to the roof enclosure over the cell's x-range, truncated at
/// s_max on cells touching D. The origin marker is always present.
class TubeCover {
 public:
  struct Column {
    std::uint32_t i, j;     // cell indices
    std::uint32_t slabs;    // number of slabs
    Dyadic s_top;           // roof enclosure hi or s_max
    bool truncated;
  };

  TubeCover() = default;
  TubeCover(Grid grid, int m_s, Dyadic s_max) : grid_(std::move(grid)), m_s_(m_s), s_max_(std::move(s_max)) {}

  bool has_origin_marker() const { return true; }
  const Grid& grid() const { return grid_; }
  int m_s() const { return m_s_; }
  const Dyadic& s_max() const { return s_max_; }
  const std::vector<Column>& columns() const { return cols_; }
  std::vector<Column>& mutable_columns() { return cols_; }

  std::uint64_t box_count() const {
    std::uint64_t n = 0;
    for (const Column& c : cols_) n += c.slabs;
    return n;
  }
  std::uint64_t truncated_count() const {
    std::uint64_t n = 0;
    for (const Column& c : cols_) n += c.truncated ? 1 : 0;
    return n;
  }
  Box3 box(const Column& c, std::uint32_t slab) const {
    const Box b = grid_.cell_box(c.i, c.j);
    const Dyadic h = Dyadic::pow2(-m_s_);
    return {b.x, b.y, Interval(h * Dyadic(static_cast<long>(slab)), h * Dyadic(static_cast<long>(slab + 1)))};
  }
  template <typename Fn>
  void for_each_box(Fn&& fn) const {
    for (const Column& c : cols_) {
      for (std::uint32_t s = 0; s < c.slabs; ++s) fn(c, s, box(c, s));
    }
  }

  // Membership of (x, y, s) in the union of the boxes.
  bool contains(const Dyadic& x, const Dyadic& y, const Dyadic& s) const {
    if (s.sign() < 0) return false;
    const Dyadic h = Dyadic::pow2(-m_s_);
    for (const Column& c : cols_) {
      const Box b = grid_.cell_box(c.i, c.j);
      if (b.x.contains(x) && b.y.contains(y) && s <= h * Dyadic(static_cast<long>(c.slabs))) return true;
    }
    return false;
  }

 private:
  Grid grid_;
  int m_s_ = 0;
  Dyadic s_max_;
  std::vector<Column> cols_;
};

inline TubeCover suspension_cover(const Model& model, const AttractorCertificate& cert, int m_s,
                                  const Dyadic& s_max = Dyadic(20)) {
  if (cert.outer.empty()) throw PreconditionError("suspension_cover: empty outer cover violates the rho invariant");
  if (m_s < 0 || m_s > 20) throw ConfigError("suspension_cover: m_s must be in [0, 20]");
  const Grid grid(model, cert.m);
  TubeCover tube(grid, m_s, s_max);
  const auto spans = cert.outer.spans();
  // Roof depends on the column only: one enclosure per column.
  auto parts = parallel_chunks(spans.size(), 1024, [&](std::size_t b, std::size_t e) {
    std::vector<TubeCover::Column> out;
    for (std::size_t t = b; t < e; ++t) {
      const auto& sp = spans[t];
      const Box cell = grid.cell_box(sp.col, 0);
      Dyadic top;
      bool trunc = false;
      if (cell.x.contains_zero()) {
        top = s_max;
        trunc = true;
      } else {
        top = model.roof(cell.x).hi();
        if (top > s_max) {
          top = s_max;
          trunc = true;
        }
      }
      const mpz_class slabs = top.ceil_scaled(m_s);
      for (std::uint32_t j = sp.begin; j < sp.end; ++j) {
        out.push_back({sp.col, j, static_cast<std::uint32_t>(slabs.get_ui()), top, trunc});
      }
    }
    return out;
  });
  for (auto& p : parts) {
    for (auto& c : p) tube.mutable_columns().push_back(std::move(c));
  }
  return tube;
}

struct SuspensionPoint {
  Dyadic x, y, s;
};

/// l(q) = (x, y): flowing back to s = 0 stays in the same fibre, so the
/// verdict is the section verdict at (x, y).
inline Verdict semidecide_outside_flow(AttractorCache& cache, const SuspensionPoint& q, int k) {
  const Model& model = cache.model();
  if (q.x.is_zero()) throw PreconditionError("singularity", "suspension point on the singular line");
  if (!model.domain().x.contains(q.x) || !model.domain().y.contains(q.y)) {
    throw PreconditionError("domain", "suspension point outside V");
  }
  if (q.s.sign() < 0 || q.s > model.roof(Interval(q.x)).hi()) {
    throw PreconditionError("domain", "suspension point above the roof");
  }
  return semidecide_outside_section(cache, {q.x, q.y}, k);
}

}  // namespace lorenz
