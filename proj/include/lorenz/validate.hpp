#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lorenz/model.hpp"

namespace lorenz {

struct ValidationItem {
  std::string id;        // e.g. "F-3.slope"
  std::string property;  // human-readable statement that was checked
  bool passed = false;
  std::optional<Interval> witness;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationItem> items;

  bool all_passed() const {
    for (const auto& it : items) {
      if (!it.passed) return false;
    }
    return true;
  }
  const ValidationItem* find(const std::string& id) const {
    for (const auto& it : items) {
      if (it.id == id) return &it;
    }
    return nullptr;
  }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& it : items) {
      nlohmann::json j{{"item", it.id}, {"property", it.property}, {"pass", it.passed}, {"detail", it.detail}};
      if (it.witness) {
        j["witness"] = {{"lo", it.witness->lo().to_string()},
                        {"hi", it.witness->hi().to_string()},
                        {"lo_decimal", it.witness->lo().to_decimal()},
                        {"hi_decimal", it.witness->hi().to_decimal()}};
      }
      arr.push_back(std::move(j));
    }
    return {{"all_pass", all_passed()}, {"items", std::move(arr)}};
  }
};

namespace detail {

// Lower / upper enclosure of f'(x) = (3/4) b (x / r_plus)^(-1/4) at a point x > 0.
inline Interval f_prime(const Model& model, const Dyadic& x, Precision p) {
  const Dyadic u = x.scaled(-model.r_plus().exponent());
  const long mag = u.magnitude_bits();
  const Precision g = p + (8 + static_cast<int>(mag < 0 ? -mag : 0));
  const Interval quarter = sqrt(sqrt(Interval(u), g), g);  // u^(1/4)
  const Interval three_quarter_b = mul(model.b_slope(), Interval(Dyadic(3, -2)), g);
  return div(three_quarter_b, quarter, g).rounded_out(p);
}

}  // namespace detail

/// Certifies properties F-1 .. F-5 of a model by exact rational checks on the
/// constants plus interval evaluation over a dyadic subdivision of
/// [2^-depth, r_plus] into 2^depth pieces. Never throws on a failed property:
/// failures are reported as items.
inline ValidationReport validate(const ModelParams& params, int depth, Precision p = Precision(64)) {
  if (depth < 1 || depth > 24) throw ConfigError("validate: depth must be in [1, 24]");
  ValidationReport rep;
  auto add = [&](std::string id, std::string prop, bool ok, std::optional<Interval> w, std::string detail) {
    rep.items.push_back({std::move(id), std::move(prop), ok, std::move(w), std::move(detail)});
  };

  const mpq_class& b = params.b_slope;
  const mpq_class& c = params.c;
  const mpq_class half(1, 2);
  const mpq_class t_abs = abs(params.t_minus);

  // Parameter invariants, exact in rationals.
  add("param.contraction", "0 < c and c^2 < 1/2 (c < 1/sqrt 2)", c > 0 && c * c < half,
      Interval::enclose(c, p), "c = " + c.get_str());
  add("param.slope", "(3 b_slope)^2 > 32 ((3/4) b_slope > sqrt 2)", 9 * b * b > 32,
      Interval::enclose(b * mpq_class(3, 4), p), "(3/4) b_slope = " + mpq_class(b * mpq_class(3, 4)).get_str());
  add("param.f_range", "0 < b_slope - 1 < 1 (0 < f(r+) < r+)", b - 1 > 0 && b - 1 < 1,
      Interval::enclose(b - 1, p), "");
  add("param.g_range", "|t_minus| + c <= y_half", t_abs + c <= params.y_half, Interval::enclose(t_abs + c, p), "");

  Model model;
  try {
    model = Model(params, p);
  } catch (const Error& e) {
    add("model.construct", "model constants are well formed", false, std::nullopt, e.what());
    return rep;
  }
  add("F-1", "x-coordinate of F(x, y) depends on x only", true, std::nullopt,
      "structural: f takes x alone as argument");

  const Dyadic rp = model.r_plus();
  const Dyadic start = rp.scaled(-depth);  // 2^-depth * r_plus
  const long pieces = 1L << depth;
  const Dyadic step = Dyadic(mpz_class(1), -depth) * (rp - start);
  auto knot = [&](long i) { return i == pieces ? rp : start + step * Dyadic(i); };

  // F-3: f' > sqrt 2 on every piece; f' decreasing so the minimum of a piece
  // sits at its right end.
  {
    bool ok = true;
    Interval worst;
    bool have = false;
    long bad_piece = -1;
    for (long i = 0; i < pieces; ++i) {
      const Interval d = detail::f_prime(model, knot(i + 1), p);
      const Interval sq = square(d, p);
      if (!(sq.lo() > Dyadic(2))) {
        if (ok) bad_piece = i;
        ok = false;
      }
      if (!have || d.lo() < worst.lo()) {
        worst = d;
        have = true;
      }
    }
    add("F-3.slope", "f'(x) > sqrt 2 on [2^-depth, r+] (interval proof per piece)", ok, worst,
        ok ? "min over pieces at x = r+" : "first failing piece " + std::to_string(bad_piece));
  }
  {
    const Interval near0 = detail::f_prime(model, start, p);
    const Interval at_end = detail::f_prime(model, rp, p);
    const bool ok = b > 0 && near0.lo() > at_end.hi();
    add("F-3.blowup", "f'(x) -> infinity monotonically as x -> 0+ (f'' = -(3/16) b x^(-5/4) < 0)", ok, near0,
        "witness: f'(2^-depth r+); exponent -1/4 < 0 gives the limit");
  }
  {
    const Interval fr = model.f_plus_point(rp);
    const Interval f0 = model.f_plus_point(start);
    const bool ok = fr.lo().sign() > 0 && fr.hi() < rp && f0.lo() > model.r_minus();
    add("F-3.range", "f((0, r+]) ⊆ (r-, r+) and 0 < f(r+) < r+", ok, fr,
        "f increasing from the limit r- (not attained) to f(r+)");
  }

  // F-4: dg/dy = kappa x in (0, kappa r+]; dg/dx = kappa (y + y_half + 1) in [kappa, c].
  {
    const mpq_class kappa = c / (2 * params.y_half + 1);
    bool ok = c > 0 && c * c < half && kappa * params.r_plus <= c;
    Interval hi_witness;
    for (long i = 0; i < pieces && ok; i += std::max(1L, pieces / 64)) {
      const Interval dy = mul(model.kappa(), Interval(knot(i), knot(i + 1)), p);
      if (!(dy.lo().sign() > 0) || dy.hi() > Interval::enclose(c, p).hi()) ok = false;
    }
    hi_witness = mul(model.kappa(), Interval(rp), p);
    add("F-4.fiber_contraction", "0 < dg/dy <= c < 1/sqrt 2 for x != 0", ok, hi_witness, "max at x = r+");
  }
  {
    const mpq_class kappa = c / (2 * params.y_half + 1);
    const bool ok = kappa > 0 && kappa * (2 * params.y_half + 1) <= c;
    add("F-4.x_derivative", "0 < dg/dx <= c", ok, Interval(Interval::enclose(kappa, p).lo(), Interval::enclose(c, p).hi()),
        "dg/dx = kappa (y + y_half + 1) over y in [-y_half, y_half]");
  }
  add("F-4.limit", "dg/dy -> 0 monotonically as x -> 0", model.kappa().positive(), mul(model.kappa(), Interval(start), p),
      "dg/dy = kappa x is linear in x; witness at x = 2^-depth r+");
  {
    const Interval img = model.g_branch(Side::plus, model.half_domain(Side::plus), Interval(-model.y_half(), model.y_half()));
    const bool ok = Interval(-model.y_half(), model.y_half()).contains(img);
    add("F-4.g_range", "g maps V into [-y_half, y_half]", ok, img, "image of V+ under g+");
  }

  // F-2: odd symmetry, bit-for-bit on sample boxes.
  {
    bool ok = true;
    const Dyadic yh = model.y_half();
    for (long i = 0; i < pieces && ok; i += std::max(1L, pieces / 32)) {
      for (int k = 0; k < 4 && ok; ++k) {
        const Dyadic y0 = -yh + yh * Dyadic(k, -1);
        const Box box{Interval(knot(i), knot(i + 1)), Interval(y0, y0 + yh.scaled(-1))};
        if (!(model.F_branch(Side::minus, -box) == -model.F_branch(Side::plus, box))) ok = false;
      }
    }
    add("F-2", "F(-x, -y) = -F(x, y) (bit-exact on sample boxes)", ok, std::nullopt, "structural: minus branch is the mirrored plus branch");
  }

  // F-5: stored extension values agree with the one-sided limits of the formulas.
  {
    // r+ (b * 0^(3/4) - 1) = -r+ and t- + kappa * 0 * (...) = t-.
    const bool ok = model.f_plus_point(Dyadic()) == Interval(model.r_minus()) &&
                    model.g_branch(Side::plus, Interval(Dyadic()), Interval(model.y_half())) == model.t_minus();
    const Interval near = model.f_plus_point(rp.scaled(-4 * depth));
    add("F-5", "lim_{x->0+} F(x, y) = (r-, t-) = rho+, lim_{x->0-} F = (r+, t+) = rho-", ok && near.lo() > model.r_minus(), near,
        "witness: f(2^-4depth r+) approaches r- from above");
  }
  return rep;
}

}  // namespace lorenz
