#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "lorenz/flow.hpp"

namespace lorenz {

// ---------------------------------------------------------------------------
// One-dimensional maps and Ulam's method.

/// Strictly monotone branch of a one-dimensional map on the closed interval
/// [lo, hi], given by an interval evaluator at dyadic points.
struct MonotoneBranch {
  Dyadic lo, hi;
  bool increasing = true;
  std::function<Interval(const Dyadic&)> eval;
};

/// Piecewise-monotone map of [lo, hi]; branch domains tile the interval.
struct IntervalMap {
  Dyadic lo, hi;
  std::vector<MonotoneBranch> branches;
};

inline IntervalMap model_interval_map(const Model& model) {
  IntervalMap map{model.r_minus(), model.r_plus(), {}};
  map.branches.push_back({model.r_minus(), Dyadic(), true, [model](const Dyadic& x) { return -model.f_plus_point(-x); }});
  map.branches.push_back({Dyadic(), model.r_plus(), true, [model](const Dyadic& x) { return model.f_plus_point(x); }});
  return map;
}

// x -> 2x mod 1 on [0, 1]; test harness only.
inline IntervalMap doubling_map() {
  IntervalMap map{Dyadic(0), Dyadic(1), {}};
  map.branches.push_back({Dyadic(0), Dyadic::pow2(-1), true, [](const Dyadic& x) { return Interval(x.scaled(1)); }});
  map.branches.push_back({Dyadic::pow2(-1), Dyadic(1), true, [](const Dyadic& x) { return Interval(x.scaled(1) - Dyadic(1)); }});
  return map;
}

/// Enclosure of the preimage of v on the branch, by bisection down to width
/// 2^-bits. A midpoint whose image is exactly v is returned as a point.
inline Interval branch_inverse(const MonotoneBranch& br, const Dyadic& v, int bits) {
  Dyadic a = br.lo, b = br.hi;
  const Dyadic stop = Dyadic::pow2(-bits);
  while (b - a > stop) {
    const Dyadic mid = (a + b).scaled(-1);
    const Interval fm = br.eval(mid);
    if (fm.is_point() && fm.lo() == v) return Interval(mid);
    const bool below = br.increasing ? fm.hi() < v : fm.lo() > v;
    const bool above = br.increasing ? fm.lo() > v : fm.hi() < v;
    if (below) {
      a = mid;
    } else if (above) {
      b = mid;
    } else {
      break;  // v lies inside the enclosure of f(mid): resolution reached
    }
  }
  return {a, b};
}

inline constexpr int kFixedBits = 60;
inline constexpr std::uint64_t kFixedOne = std::uint64_t{1} << kFixedBits;

/// Row-stochastic Ulam matrix in fixed point (units 2^-60); each row sums to
/// exactly 2^60.
struct UlamMatrix {
  struct Row {
    std::uint32_t first = 0;
    std::vector<std::uint64_t> entries;
  };
  int q = 0;
  std::vector<Row> rows;
};

inline UlamMatrix ulam_matrix(const IntervalMap& map, int q) {
  if (q < 1 || q > 24) throw ConfigError("ulam: q must be in [1, 24]");
  const std::uint32_t n = std::uint32_t{1} << q;
  const Dyadic w = (map.hi - map.lo).scaled(-q);
  UlamMatrix P;
  P.q = q;
  const mpq_class wq = w.to_rational();
  auto edge = [&](std::int64_t k) { return map.lo + w * Dyadic(static_cast<long>(k)); };
  // floor / ceil of (v - lo) / w and floor of len * 2^60 / w.
  auto ratio = [&](const Dyadic& v, bool up) {
    const mpq_class t = v.to_rational() / wq;
    mpz_class r;
    if (up) {
      mpz_cdiv_q(r.get_mpz_t(), t.get_num_mpz_t(), t.get_den_mpz_t());
    } else {
      mpz_fdiv_q(r.get_mpz_t(), t.get_num_mpz_t(), t.get_den_mpz_t());
    }
    return r;
  };
  auto parts = parallel_chunks(n, 64, [&](std::size_t b, std::size_t e) {
    std::vector<UlamMatrix::Row> rows;
    for (std::size_t i = b; i < e; ++i) {
      const Dyadic a0 = edge(static_cast<std::int64_t>(i)), a1 = edge(static_cast<std::int64_t>(i) + 1);
      const MonotoneBranch* br = nullptr;
      for (const auto& cand : map.branches) {
        if (cand.lo <= a0 && a1 <= cand.hi) br = &cand;
      }
      if (!br) throw PreconditionError("ulam: a cell straddles a branch boundary");
      Interval fa = br->eval(a0), fb = br->eval(a1);
      if (!br->increasing) std::swap(fa, fb);
      // Interior grid boundaries met by the image [fa, fb].
      const std::int64_t k0 = std::max<std::int64_t>(1, ratio(fa.lo() - map.lo, true).get_si());
      const std::int64_t k1 = std::min<std::int64_t>(n - 1, ratio(fb.hi() - map.lo, false).get_si());
      // Preimage points in increasing x order and the cell each piece maps to.
      std::vector<Dyadic> cuts{a0};
      std::vector<std::int64_t> target;
      if (k0 > k1) {
        target.push_back(std::clamp<std::int64_t>(ratio(fa.mid() - map.lo, false).get_si(), 0, n - 1));
      } else {
        std::vector<std::int64_t> ks;
        for (std::int64_t k = k0; k <= k1; ++k) ks.push_back(k);
        if (!br->increasing) std::reverse(ks.begin(), ks.end());
        target.push_back(br->increasing ? k0 - 1 : k1);
        for (std::int64_t k : ks) {
          const Interval x = branch_inverse(*br, edge(k), 62);
          cuts.push_back(min(max(x.mid(), cuts.back()), a1));
          target.push_back(br->increasing ? k : k - 1);
        }
      }
      cuts.push_back(a1);
      // Fixed-point fractions; the row residue goes to the largest entry.
      std::int64_t tmin = *std::min_element(target.begin(), target.end());
      std::int64_t tmax = *std::max_element(target.begin(), target.end());
      UlamMatrix::Row row;
      row.first = static_cast<std::uint32_t>(tmin);
      row.entries.assign(static_cast<std::size_t>(tmax - tmin + 1), 0);
      std::uint64_t sum = 0;
      for (std::size_t s = 0; s < target.size(); ++s) {
        const std::uint64_t v = ratio((cuts[s + 1] - cuts[s]).scaled(kFixedBits), false).get_ui();
        row.entries[static_cast<std::size_t>(target[s] - tmin)] += v;
        sum += v;
      }
      std::size_t big = 0;
      for (std::size_t s = 1; s < row.entries.size(); ++s) {
        if (row.entries[s] > row.entries[big]) big = s;
      }
      row.entries[big] += kFixedOne - sum;
      rows.push_back(std::move(row));
    }
    return rows;
  });
  for (auto& p : parts) {
    for (auto& r : p) P.rows.push_back(std::move(r));
  }
  return P;
}

/// One power-iteration step v -> v P in fixed point. The rounding residue is
/// distributed by largest fractional part (ties to the lower index), so the
/// total stays exactly 2^60.
inline std::vector<std::uint64_t> ulam_apply(const UlamMatrix& P, const std::vector<std::uint64_t>& v) {
  const std::size_t n = P.rows.size();
  std::vector<unsigned __int128> acc(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (v[i] == 0) continue;
    const auto& row = P.rows[i];
    for (std::size_t s = 0; s < row.entries.size(); ++s) {
      acc[row.first + s] += static_cast<unsigned __int128>(v[i]) * row.entries[s];
    }
  }
  std::vector<std::uint64_t> out(n);
  std::vector<std::pair<std::uint64_t, std::uint32_t>> frac;
  frac.reserve(n);
  std::uint64_t total = 0;
  const unsigned __int128 mask = (static_cast<unsigned __int128>(1) << kFixedBits) - 1;
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = static_cast<std::uint64_t>(acc[j] >> kFixedBits);
    total += out[j];
    const auto f = static_cast<std::uint64_t>(acc[j] & mask);
    if (f) frac.emplace_back(f, static_cast<std::uint32_t>(j));
  }
  std::uint64_t rest = kFixedOne - total;
  std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (std::size_t t = 0; t < frac.size() && rest > 0; ++t, --rest) ++out[frac[t].second];
  return out;
}

/// Piecewise-constant approximation of the a.c.i.m. on 2^q equal cells.
struct DensityApprox {
  int q = 0;
  Dyadic lo, hi;
  std::vector<std::uint64_t> weights;  // units 2^-60, exact total 2^60
  Dyadic sup_density;                  // max weight / cell width
  Dyadic cauchy_gap;                   // L1 size of the last power-iteration step
  int iterations = 0;

  std::size_t size() const { return weights.size(); }
  Dyadic cell_width() const { return (hi - lo).scaled(-q); }
  Dyadic edge(std::int64_t k) const { return lo + cell_width() * Dyadic(static_cast<long>(k)); }
  Dyadic weight(std::size_t i) const { return Dyadic(mpz_class(static_cast<unsigned long>(weights[i])), -kFixedBits); }
  Dyadic density(std::size_t i) const { return weight(i) * Dyadic::pow2(q) * div_up(Dyadic(1), hi - lo, 64); }

  nlohmann::json to_json() const {
    return {{"q", q},
            {"cells", weights.size()},
            {"sup_density", sup_density.to_decimal()},
            {"cauchy_gap", cauchy_gap.to_string()},
            {"iterations", iterations},
            {"weight_units", "2^-60"}};
  }
};

inline DensityApprox uniform_density(const Dyadic& lo, const Dyadic& hi, int q) {
  DensityApprox d;
  d.q = q;
  d.lo = lo;
  d.hi = hi;
  d.weights.assign(std::size_t{1} << q, kFixedOne >> q);
  d.sup_density = div_up(Dyadic(1), hi - lo, 64);
  return d;
}

inline DensityApprox ulam_acim(const IntervalMap& map, int q, const Dyadic& tol, int max_iterations = 100000) {
  if (q < 3) throw ConfigError("ulam_acim: q must be >= 3");
  if (tol.sign() <= 0) throw ConfigError("ulam_acim: tol must be positive");
  if (q > kFixedBits) throw ConfigError("ulam_acim: q too large for the fixed-point weights");
  const UlamMatrix P = ulam_matrix(map, q);
  DensityApprox d = uniform_density(map.lo, map.hi, q);
  for (int it = 1; it <= max_iterations; ++it) {
    std::vector<std::uint64_t> next = ulam_apply(P, d.weights);
    unsigned __int128 gap = 0;
    for (std::size_t i = 0; i < next.size(); ++i) gap += next[i] > d.weights[i] ? next[i] - d.weights[i] : d.weights[i] - next[i];
    d.weights = std::move(next);
    d.iterations = it;
    d.cauchy_gap = Dyadic(mpz_class(static_cast<unsigned long>(gap)), -kFixedBits);
    if (d.cauchy_gap <= tol) {
      std::uint64_t mx = *std::max_element(d.weights.begin(), d.weights.end());
      d.sup_density = Dyadic(mpz_class(static_cast<unsigned long>(mx)), -kFixedBits) * Dyadic::pow2(q) *
                      div_up(Dyadic(1), map.hi - map.lo, 64);
      return d;
    }
  }
  throw ResourceError("ulam_acim: power iteration did not reach tol within the iteration ceiling");
}

inline DensityApprox ulam_acim(const Model& model, int q, const Dyadic& tol) {
  return ulam_acim(model_interval_map(model), q, tol);
}

// ---------------------------------------------------------------------------
// Planar measures on the V grid.

/// Cell weights over the 2^(m+1) x 2^(m+1) grid as integers in units 2^-B;
/// the total is exactly 2^B.
class PlanarMeasure {
 public:
  using u128 = unsigned __int128;

  PlanarMeasure() = default;
  PlanarMeasure(int m, int bits) : m_(m), bits_(bits) {
    if (m > 12) throw ResourceError("planar measure: dense storage above m = 12 is not supported");
    if (bits > 120) throw ResourceError("planar measure: weight precision above 2^-120");
    w_.assign(static_cast<std::size_t>(side()) * side(), 0);
  }

  int m() const { return m_; }
  int bits() const { return bits_; }
  std::uint32_t side() const { return std::uint32_t{1} << (m_ + 1); }
  u128 raw(std::uint32_t i, std::uint32_t j) const { return w_[static_cast<std::size_t>(i) * side() + j]; }
  u128& raw(std::uint32_t i, std::uint32_t j) { return w_[static_cast<std::size_t>(i) * side() + j]; }
  const std::vector<u128>& data() const { return w_; }
  std::vector<u128>& data() { return w_; }

  static Dyadic to_dyadic_units(u128 v, int bits) {
    mpz_class z = static_cast<unsigned long>(v >> 64);
    z <<= 64;
    z += static_cast<unsigned long>(v);
    return Dyadic(z, -bits);
  }
  Dyadic weight(std::uint32_t i, std::uint32_t j) const { return to_dyadic_units(raw(i, j), bits_); }
  double weight_d(std::uint32_t i, std::uint32_t j) const { return std::ldexp(static_cast<double>(raw(i, j)), -bits_); }

  u128 total_raw() const {
    u128 t = 0;
    for (u128 v : w_) t += v;
    return t;
  }
  bool mass_is_one() const { return total_raw() == (static_cast<u128>(1) << bits_); }
  std::size_t support() const {
    return static_cast<std::size_t>(std::count_if(w_.begin(), w_.end(), [](u128 v) { return v != 0; }));
  }

  std::vector<u128> x_marginal() const {
    std::vector<u128> out(side(), 0);
    for (std::uint32_t i = 0; i < side(); ++i) {
      for (std::uint32_t j = 0; j < side(); ++j) out[i] += raw(i, j);
    }
    return out;
  }
  std::vector<u128> y_marginal() const {
    std::vector<u128> out(side(), 0);
    for (std::uint32_t i = 0; i < side(); ++i) {
      for (std::uint32_t j = 0; j < side(); ++j) out[j] += raw(i, j);
    }
    return out;
  }

  PlanarMeasure reflected() const {
    PlanarMeasure r(m_, bits_);
    const std::uint32_t n = side();
    for (std::uint32_t i = 0; i < n; ++i) {
      for (std::uint32_t j = 0; j < n; ++j) r.raw(n - 1 - i, n - 1 - j) = raw(i, j);
    }
    return r;
  }

  // L1 distance of the weights, as a double.
  static double l1(const PlanarMeasure& a, const PlanarMeasure& b) {
    if (a.m_ != b.m_ || a.bits_ != b.bits_) throw PreconditionError("l1: incompatible measures");
    long double s = 0;
    for (std::size_t t = 0; t < a.w_.size(); ++t) {
      const u128 x = a.w_[t], y = b.w_[t];
      s += static_cast<long double>(x > y ? x - y : y - x);
    }
    return static_cast<double>(std::ldexp(s, -a.bits_));
  }

  friend bool operator==(const PlanarMeasure& a, const PlanarMeasure& b) {
    return a.m_ == b.m_ && a.bits_ == b.bits_ && a.w_ == b.w_;
  }

 private:
  int m_ = 0;
  int bits_ = 0;
  std::vector<u128> w_;
};

/// nu = mu_f x (normalized Lebesgue in y) on the grid of resolution m.
inline PlanarMeasure product_measure(const DensityApprox& mu, int m) {
  const int cols_log = m + 1;
  int bits;
  if (cols_log >= mu.q) {
    bits = kFixedBits + (cols_log - mu.q) + cols_log;
  } else {
    bits = kFixedBits + cols_log;
  }
  PlanarMeasure nu(m, bits);
  const std::uint32_t n = nu.side();
  for (std::uint32_t i = 0; i < n; ++i) {
    PlanarMeasure::u128 col = 0;
    if (cols_log >= mu.q) {
      col = mu.weights[i >> (cols_log - mu.q)];
    } else {
      const std::uint32_t k = std::uint32_t{1} << (mu.q - cols_log);
      for (std::uint32_t s = 0; s < k; ++s) col += mu.weights[i * k + s];
    }
    for (std::uint32_t j = 0; j < n; ++j) nu.raw(i, j) = col;
  }
  return nu;
}

/// Push-forward of planar measures through the branch enclosures of F.
/// Each cell's mass spreads over the cells met by its image box in
/// proportion to the overlap area; flooring residues go to the cell holding
/// the box centre, so every step conserves mass exactly. Minus-side cells
/// are pushed as mirror images of plus-side cells.
class PushForward {
 public:
  PushForward(const Model& model, int m) : alpha_(model, m) {
    const Grid& g = alpha_.grid();
    const std::uint32_t n = g.side();
    x0_ = g.x_edge(0).to_double();
    y0_ = g.y_edge(0).to_double();
    w_ = g.cell_width().to_double();
    h_ = g.cell_height().to_double();
    yshift_ = (model.y_half() + Dyadic(1)).to_double();
    t_lo_ = model.t_minus().lo().to_double();
    t_hi_ = model.t_minus().hi().to_double();
    for (std::uint32_t c = 0; c <= n / 2; ++c) {
      const Dyadic x = g.cell_width() * Dyadic(static_cast<long>(c));
      const Interval f = model.f_plus_point(x);
      const Interval kx = model.kappa_x(x);
      flo_.push_back(static_cast<long double>(f.lo().to_double()));
      fhi_.push_back(static_cast<long double>(f.hi().to_double()));
      kxlo_.push_back(static_cast<long double>(kx.lo().to_double()));
      kxhi_.push_back(static_cast<long double>(kx.hi().to_double()));
    }
  }

  const Grid& grid() const { return alpha_.grid(); }

  struct Share {
    std::uint32_t i, j;
    PlanarMeasure::u128 amount;
  };

  // Distribution of mass W from plus-half cell (c from x = 0, row j), in
  // global target indices.
  void spread_plus(std::uint32_t c, std::uint32_t j, PlanarMeasure::u128 W, std::vector<Share>& out) const {
    const std::uint32_t n = grid().side();
    const long double xl = flo_[c], xh = fhi_[c + 1];
    const long double yb = y0_ + static_cast<long double>(j) * h_, ye = y0_ + static_cast<long double>(j + 1) * h_;
    const long double yl = c == 0 ? t_lo_ : t_lo_ + kxlo_[c] * (yb + yshift_);
    const long double yh = t_hi_ + kxhi_[c + 1] * (ye + yshift_);
    auto idx = [&](long double v, long double o, long double s) {
      const long double t = std::floor((v - o) / s);
      return static_cast<std::int64_t>(std::clamp<long double>(t, 0, n - 1));
    };
    const std::int64_t i0 = idx(xl, x0_, w_), i1 = idx(xh, x0_, w_);
    const std::int64_t j0 = idx(yl, y0_, h_), j1 = idx(yh, y0_, h_);
    const std::int64_t ci = idx((xl + xh) / 2, x0_, w_), cj = idx((yl + yh) / 2, y0_, h_);
    const long double bw = xh - xl, bh = yh - yl;
    PlanarMeasure::u128 given = 0;
    const long double Wd = static_cast<long double>(W);
    const std::size_t start = out.size();
    for (std::int64_t a = i0; a <= i1; ++a) {
      long double fx = 1;
      if (i1 > i0 && bw > 0) {
        const long double lo = std::max(xl, x0_ + a * w_), hi = std::min(xh, x0_ + (a + 1) * w_);
        fx = std::max<long double>(0, hi - lo) / bw;
      }
      for (std::int64_t b = j0; b <= j1; ++b) {
        long double fy = 1;
        if (j1 > j0 && bh > 0) {
          const long double lo = std::max(yl, y0_ + b * h_), hi = std::min(yh, y0_ + (b + 1) * h_);
          fy = std::max<long double>(0, hi - lo) / bh;
        }
        PlanarMeasure::u128 amt = static_cast<PlanarMeasure::u128>(std::floor(Wd * fx * fy));
        if (amt > W - given) amt = W - given;
        given += amt;
        if (amt) out.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), amt});
      }
    }
    if (given < W) {
      // Residue to the centre cell (merge with an existing share if present).
      for (std::size_t t = start; t < out.size(); ++t) {
        if (out[t].i == ci && out[t].j == cj) {
          out[t].amount += W - given;
          return;
        }
      }
      out.push_back({static_cast<std::uint32_t>(ci), static_cast<std::uint32_t>(cj), W - given});
    }
  }

  PlanarMeasure step(const PlanarMeasure& mu) const {
    if (mu.m() != grid().m()) throw PreconditionError("pushforward: resolution mismatch");
    const std::uint32_t n = grid().side(), half = n / 2;
    auto parts = parallel_chunks(n, 16, [&](std::size_t b, std::size_t e) {
      std::vector<Share> out;
      std::vector<Share> tmp;
      for (std::size_t ii = b; ii < e; ++ii) {
        const auto i = static_cast<std::uint32_t>(ii);
        for (std::uint32_t j = 0; j < n; ++j) {
          const PlanarMeasure::u128 W = mu.raw(i, j);
          if (!W) continue;
          if (i >= half) {
            spread_plus(i - half, j, W, out);
          } else {
            tmp.clear();
            spread_plus(half - 1 - i, n - 1 - j, W, tmp);
            for (const Share& s : tmp) out.push_back({n - 1 - s.i, n - 1 - s.j, s.amount});
          }
        }
      }
      return out;
    });
    PlanarMeasure next(mu.m(), mu.bits());
    for (const auto& p : parts) {
      for (const Share& s : p) next.raw(s.i, s.j) += s.amount;
    }
    return next;
  }

 private:
  AlphaMap alpha_;
  long double x0_, y0_, w_, h_, yshift_, t_lo_, t_hi_;
  std::vector<long double> flo_, fhi_, kxlo_, kxhi_;
};

inline PlanarMeasure pushforward(const Model& model, const PlanarMeasure& mu, int steps) {
  if (steps < 0) throw PreconditionError("pushforward: steps must be >= 0");
  if (steps == 0) return mu;
  const PushForward F(model, mu.m());
  PlanarMeasure cur = F.step(mu);
  for (int s = 1; s < steps; ++s) cur = F.step(cur);
  return cur;
}

/// Transport proxy for W1 between grid measures: the 1-D W1 distance of the
/// x-marginals plus, per column, the L1 distance of the normalized
/// cumulative y-profiles weighted by the mean column mass. When the column
/// masses agree this is the cost of moving mass along columns, an upper
/// bound for W1 in the L1 metric. Used to measure decay rates.
inline double w1_proxy(const Grid& grid, const PlanarMeasure& a, const PlanarMeasure& b) {
  if (a.m() != b.m() || a.bits() != b.bits()) throw PreconditionError("w1_proxy: incompatible measures");
  const std::uint32_t n = a.side();
  const long double w = grid.cell_width().to_double(), h = grid.cell_height().to_double();
  const long double unit = std::ldexp(1.0L, -a.bits());
  long double x_part = 0, y_part = 0;
  __int128 cum_x = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    unsigned __int128 ma = 0, mb = 0;
    for (std::uint32_t j = 0; j < n; ++j) {
      ma += a.raw(i, j);
      mb += b.raw(i, j);
    }
    cum_x += static_cast<__int128>(ma) - static_cast<__int128>(mb);
    if (i + 1 < n) x_part += std::fabs(static_cast<long double>(cum_x)) * unit * w;
    if (!ma || !mb) continue;
    const long double la = static_cast<long double>(ma), lb = static_cast<long double>(mb);
    unsigned __int128 ca = 0, cb = 0;
    long double col = 0;
    for (std::uint32_t j = 0; j + 1 < n; ++j) {
      ca += a.raw(i, j);
      cb += b.raw(i, j);
      col += std::fabs(static_cast<long double>(ca) / la - static_cast<long double>(cb) / lb);
    }
    y_part += col * h * (la + lb) / 2 * unit;
  }
  return static_cast<double>(x_part + y_part);
}

struct SectionMeasure {
  PlanarMeasure mu;
  DensityApprox acim;
  int k = 0;
  int n = 0;
  int m = 0;
  Interval rate_constant;  // 4 y_half c^n / (1 - c)

  nlohmann::json to_json() const {
    return {{"k", k},
            {"n", n},
            {"m", m},
            {"rate_constant", {{"lo", rate_constant.lo().to_decimal()}, {"hi", rate_constant.hi().to_decimal()}}},
            {"rate_note", "declared constant 4*y_half*c^n/(1-c), cross-checked empirically"},
            {"support_cells", mu.support()},
            {"weight_units", "2^-" + std::to_string(mu.bits())},
            {"mass_exact_one", mu.mass_is_one()},
            {"acim", acim.to_json()}};
  }
};

/// Smallest m with cell diagonal <= 2^-(k+1).
inline int measure_m(const ModelParams& p, int k) { return stopping_m(p, k - 1); }

inline SectionMeasure section_physical_measure(const Model& model, int k, int q = 10,
                                               const Dyadic& tol = Dyadic::pow2(-30)) {
  if (k < 1) throw PreconditionError("section_physical_measure: k must be >= 1");
  SectionMeasure s;
  s.k = k;
  s.n = stopping_n(model.params(), k);
  s.m = measure_m(model.params(), k);
  s.rate_constant = Interval::enclose(hausdorff_tail(model.params(), s.n), Precision(64));
  s.acim = ulam_acim(model, q, tol);
  s.mu = pushforward(model, product_measure(s.acim, s.m), s.n);
  return s;
}

// ---------------------------------------------------------------------------
// Roof integral.

/// Integral of the roof against mu_f: exact antiderivatives on the part of
/// each cell with |x| >= eps_cut, plus [0, M (C eps (ln(1/eps) + 1) + eps
/// roof_base)] per side for |x| < eps_cut.
inline Interval roof_integral(const Model& model, const DensityApprox& mu, const Dyadic& eps_cut) {
  if (eps_cut.sign() <= 0 || !(eps_cut < model.r_plus()) || eps_cut > Dyadic(1)) {
    throw PreconditionError("domain", "roof_integral: eps_cut must lie in (0, min(r+, 1))");
  }
  const Precision p = model.precision();
  const Dyadic w = mu.cell_width();
  const Dyadic inv_w = div_up(Dyadic(1), w, 64);
  if (!(inv_w * w == Dyadic(1))) throw PreconditionError("roof_integral: cell width must be a power of two");
  Interval sum(0);
  auto part = [&](const Dyadic& a, const Dyadic& b) {
    // Integral of the roof over [a, b] ⊆ [eps, r+].
    return model.roof_antiderivative(b) - model.roof_antiderivative(a);
  };
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (mu.weights[i] == 0) continue;
    const Dyadic a = mu.edge(static_cast<std::int64_t>(i)), b = mu.edge(static_cast<std::int64_t>(i) + 1);
    Interval piece(0);
    if (b > eps_cut) piece = part(max(a, eps_cut), b);
    if (a < -eps_cut) piece = piece + part(max(-b, eps_cut), -a);
    if (piece == Interval(0)) continue;
    const Dyadic dens = mu.weight(i) * inv_w;
    sum = sum + mul(Interval(dens), piece, p + 8);
  }
  const Interval L = ln(Interval(div_down(Dyadic(1), eps_cut, 64), div_up(Dyadic(1), eps_cut, 64)), p + 8);
  const Interval tail_one = mul(model.roof_coeff(), mul(Interval(eps_cut), L + Interval(1), p + 8), p + 8) +
                            mul(Interval(eps_cut), model.roof_base(), p + 8);
  const Interval tail = mul(Interval(mu.sup_density), tail_one, p + 8);
  return Interval(sum.lo(), sum.hi() + tail.hi().scaled(1)).rounded_out(p);
}

// ---------------------------------------------------------------------------
// Observables.

/// Observable phi(x, y, s) with an interval evaluator, a Lipschitz bound on
/// V x [0, s], a growth bound |phi| <= b0 + b1 s, and the closed form of
/// its s-integral over [0, r] for (x, y) in a box.
struct Observable {
  std::string name;
  std::function<Interval(const Box3&, Precision)> eval;
  std::function<Interval(const Box&, const Interval&, Precision)> s_integral;
  Dyadic lipschitz;
  Dyadic b0, b1;
  bool nonnegative = false;
};

inline Observable make_observable(const std::string& name, const Model& model) {
  Observable o;
  o.name = name;
  const Dyadic yh = model.y_half();
  if (name == "one") {
    o.eval = [](const Box3&, Precision) { return Interval(1); };
    o.s_integral = [](const Box&, const Interval& r, Precision) { return r; };
    o.lipschitz = Dyadic(0);
    o.b0 = Dyadic(1);
    o.nonnegative = true;
  } else if (name == "x") {
    o.eval = [](const Box3& b, Precision) { return b.x; };
    o.s_integral = [](const Box& b, const Interval& r, Precision p) { return mul(b.x, r, p); };
    o.lipschitz = Dyadic(1);
    o.b0 = model.r_plus();
  } else if (name == "x2") {
    o.eval = [](const Box3& b, Precision p) { return square(b.x, p); };
    o.s_integral = [](const Box& b, const Interval& r, Precision p) { return mul(square(b.x, p), r, p); };
    o.lipschitz = model.r_plus().scaled(1);
    o.b0 = model.r_plus() * model.r_plus();
    o.nonnegative = true;
  } else if (name == "y") {
    o.eval = [](const Box3& b, Precision) { return b.y; };
    o.s_integral = [](const Box& b, const Interval& r, Precision p) { return mul(b.y, r, p); };
    o.lipschitz = Dyadic(1);
    o.b0 = yh;
  } else if (name == "s") {
    o.eval = [](const Box3& b, Precision) { return b.z; };
    o.s_integral = [](const Box&, const Interval& r, Precision p) {
      const Interval r2 = square(r, p);
      return Interval(r2.lo().scaled(-1), r2.hi().scaled(-1));
    };
    o.lipschitz = Dyadic(1);
    o.b1 = Dyadic(1);
    o.nonnegative = true;
  } else if (name == "hat") {
    // max(0, 1 - 2|x| / r+): piecewise-linear bump centred on D.
    const Dyadic rp = model.r_plus();
    auto hat = [rp](const Interval& x) {
      const Interval ax = abs(x);
      const Dyadic lo = max(Dyadic(0), Dyadic(1) - ax.hi().scaled(1) * div_up(Dyadic(1), rp, 64));
      const Dyadic hi = max(Dyadic(0), Dyadic(1) - ax.lo().scaled(1) * div_down(Dyadic(1), rp, 64));
      return Interval(min(lo, hi), hi);
    };
    o.eval = [hat](const Box3& b, Precision) { return hat(b.x); };
    o.s_integral = [hat](const Box& b, const Interval& r, Precision p) { return mul(hat(b.x), r, p); };
    o.lipschitz = div_up(Dyadic(2), rp, 64);
    o.b0 = Dyadic(1);
    o.nonnegative = true;
  } else {
    throw ConfigError("unknown observable '" + name + "' (one, x, x2, y, s, hat)");
  }
  return o;
}

/// Integral of a section observable (s = 0) against a planar measure:
/// sum of weight x phi(cell centre), widened by Lip(phi) x cell radius.
inline Interval integrate_observable(const Grid& grid, const PlanarMeasure& mu, const Observable& phi,
                                     Precision p = Precision(64)) {
  const std::uint32_t n = mu.side();
  Interval sum(0);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < n; ++j) {
      if (!mu.raw(i, j)) continue;
      const Point2 c = grid.cell_centre(i, j);
      const Interval v = phi.eval(Box3{Interval(c.x), Interval(c.y), Interval(0)}, p);
      sum = sum + mul(Interval(mu.weight(i, j)), v, p + 16);
    }
  }
  const Dyadic radius = sqrt(Interval(grid.diagonal_squared()), p).hi().scaled(-1);
  const Dyadic widen = phi.lipschitz * radius;
  return Interval(sum.lo() - widen, sum.hi() + widen).rounded_out(p);
}

/// mu* = (mu_F x Lebesgue in s under the roof) / Z with Z = integral of the
/// roof against mu_F, evaluated from mu_F's own x-marginal so that the
/// total mass interval contains 1.
struct PhysicalMeasure {
  SectionMeasure section;
  Interval Z;
  Interval normalization;  // enclosure of the total suspension mass
  std::vector<Interval> column_roof_mean;  // (1/w) integral of r over each column; empty interval on D
  std::vector<bool> touches_D;

  nlohmann::json to_json() const {
    auto iv = [](const Interval& v) { return nlohmann::json{{"lo", v.lo().to_decimal()}, {"hi", v.hi().to_decimal()}}; };
    nlohmann::json j = section.to_json();
    j["Z"] = iv(Z);
    j["normalization"] = iv(normalization);
    return j;
  }
};

namespace detail {

// Closed forms on [0, e] for r(x) = a + C ln(1/x): integrals of r and r^2.
inline std::pair<Interval, Interval> roof_moments_near_D(const Model& model, const Dyadic& e, Precision p) {
  const Interval a = model.roof_base(), C = model.roof_coeff();
  const Interval L = -ln(Interval(e), p);
  const Interval E(e);
  const Interval one(1), two(2);
  const Interval Lp1 = L + one;
  const Interval r1 = mul(E, a + mul(C, Lp1, p), p);
  const Interval inner = square(a, p) + mul(mul(two, a, p), mul(C, Lp1, p), p) +
                         mul(square(C, p), square(L, p) + mul(two, L, p) + two, p);
  const Interval r2 = mul(E, inner, p);
  return {r1, r2};
}

}  // namespace detail

/// Suspends a section measure under the roof.
inline PhysicalMeasure suspend(const Model& model, SectionMeasure section) {
  PhysicalMeasure pm;
  pm.section = std::move(section);
  const Grid grid(model, pm.section.m);
  const Precision p = model.precision() + 16;
  const std::uint32_t n = grid.side();
  const auto marg = pm.section.mu.x_marginal();
  const Dyadic w = grid.cell_width();
  const Dyadic inv_w = div_up(Dyadic(1), w, 64);
  pm.column_roof_mean.resize(n);
  pm.touches_D.assign(n, false);
  Interval Z(0);
  for (std::uint32_t i = 0; i < n; ++i) {
    const Dyadic a = grid.x_edge(i), b = grid.x_edge(i + 1);
    Interval integral;
    if (a.sign() >= 0) {
      integral = model.roof_antiderivative(b) - model.roof_antiderivative(a);
    } else {
      integral = model.roof_antiderivative(-a) - model.roof_antiderivative(-b);
    }
    pm.touches_D[i] = a.is_zero() || b.is_zero();
    pm.column_roof_mean[i] = mul(integral, Interval(inv_w), p);
    if (marg[i] == 0) continue;
    Z = Z + mul(Interval(PlanarMeasure::to_dyadic_units(marg[i], pm.section.mu.bits())), pm.column_roof_mean[i], p);
  }
  pm.Z = Z.rounded_out(model.precision());
  pm.normalization = div(Z, pm.Z, model.precision());
  return pm;
}

inline PhysicalMeasure physical_measure(const Model& model, int k, int q = 10, const Dyadic& tol = Dyadic::pow2(-30)) {
  return suspend(model, section_physical_measure(model, k, q, tol));
}

/// Integral of phi against mu*: per cell the weight times the column mean of
/// the s-integral, divided by Z. On columns touching D the s-integral is
/// bounded through |phi| <= b0 + b1 s and the closed-form roof moments.
inline Interval integrate_observable(const Model& model, const PhysicalMeasure& pm, const Observable& phi) {
  const Grid grid(model, pm.section.m);
  const Precision p = model.precision() + 16;
  const PlanarMeasure& mu = pm.section.mu;
  const std::uint32_t n = mu.side();
  const Dyadic w = grid.cell_width();
  const auto [m1, m2] = detail::roof_moments_near_D(model, w, p);
  const Interval inv_w(div_down(Dyadic(1), w, 64));
  // Column mean of b0 r + b1 r^2 / 2 over [0, w].
  const Interval bound_D =
      mul(mul(Interval(phi.b0), m1, p) + mul(Interval(phi.b1.scaled(-1)), m2, p), inv_w, p);
  Interval sum(0);
  for (std::uint32_t i = 0; i < n; ++i) {
    Interval roof;
    bool have_roof = false;
    for (std::uint32_t j = 0; j < n; ++j) {
      const PlanarMeasure::u128 raw = mu.raw(i, j);
      if (!raw) continue;
      const Interval wt(mu.weight(i, j));
      Interval v;
      if (pm.touches_D[i]) {
        v = phi.nonnegative ? Interval(Dyadic(0), bound_D.hi()) : Interval(-bound_D.hi(), bound_D.hi());
      } else {
        const Box cell = grid.cell_box(i, j);
        if (!have_roof) {
          roof = model.roof(cell.x);
          have_roof = true;
        }
        v = phi.s_integral(cell, roof, p);
      }
      sum = sum + mul(wt, v, p);
    }
  }
  return div(sum, pm.Z, model.precision());
}

/// Weight of the suspension box (cell (i, j), slab [s0, s1]) under mu*; the
/// slab is clipped to the roof enclosure midpoint of the cell.
inline Interval suspension_box_weight(const Model& model, const PhysicalMeasure& pm, std::uint32_t i, std::uint32_t j,
                                      const Dyadic& s0, const Dyadic& s1) {
  const Grid grid(model, pm.section.m);
  if (pm.touches_D[i]) throw PreconditionError("singularity", "suspension box weight: the roof is unbounded on D");
  const Interval r = model.roof(grid.cell_box(i, j).x);
  const Dyadic top = r.mid();
  const Dyadic len = max(Dyadic(0), min(s1, top) - min(s0, top));
  const Interval frac = div(Interval(len), Interval(top), model.precision());
  return div(mul(Interval(pm.section.mu.weight(i, j)), frac, model.precision() + 8), pm.Z, model.precision());
}

// ---------------------------------------------------------------------------
// Birkhoff averages along the suspension semiflow.

struct BirkhoffResult {
  Dyadic average;   // (integral of phi over [0, T]) / T
  Dyadic integral;
  Dyadic horizon;
  std::uint64_t section_hits = 0;

  nlohmann::json to_json() const {
    return {{"average", average.to_decimal()},
            {"average_double", average.to_double()},
            {"integral", integral.to_string()},
            {"horizon", horizon.to_decimal()},
            {"section_hits", section_hits},
            {"certified", false}};
  }
};

// Rounds |v| down to the 2^-bits grid keeping the sign, so mirrored orbits
// stay mirrored.
inline Dyadic round_magnitude(const Dyadic& v, long bits) {
  return v.sign() < 0 ? -(-v).round_down(bits) : v.round_down(bits);
}

/// Time average of phi along the semiflow from (x, y, s): unit speed in s
/// under the roof, F applied at each roof crossing through point enclosures
/// (midpoints kept). Segment lengths are dyadic, so phi = 1 averages to 1.
inline BirkhoffResult birkhoff_average(const Model& model, const SuspensionPoint& start, const Dyadic& T,
                                       const Observable& phi) {
  if (T.sign() <= 0) throw PreconditionError("birkhoff: horizon T must be positive");
  if (start.x.is_zero()) throw PreconditionError("singularity", "birkhoff: start on the singular line");
  const Precision p = model.precision();
  Dyadic x = start.x, y = start.y, s = start.s;
  Dyadic roof = model.roof(Interval(x)).mid();
  if (s.sign() < 0 || s > roof) throw PreconditionError("domain", "birkhoff: start above the roof");
  BirkhoffResult res;
  res.horizon = T;
  Dyadic elapsed, total;
  auto seg = [&](const Dyadic& from, const Dyadic& to) {
    const Box b{Interval(x), Interval(y)};
    if (phi.name == "one") return to - from;
    const Interval hi = phi.s_integral(b, Interval(to), p);
    const Interval lo = phi.s_integral(b, Interval(from), p);
    return (hi - lo).mid();
  };
  for (;;) {
    const Dyadic left = T - elapsed;
    const Dyadic len = roof - s;
    if (len >= left) {
      total += seg(s, s + left);
      elapsed = T;
      break;
    }
    total += seg(s, roof);
    elapsed += len;
    const Box next = model.F_point(x, y);
    if (next.x.contains_zero()) {
      throw PreconditionError("singularity", "birkhoff: iterate enclosure meets x = 0; rerun at higher precision");
    }
    x = round_magnitude(next.x.mid(), p.bits);
    y = round_magnitude(next.y.mid(), p.bits);
    s = Dyadic();
    roof = model.roof(Interval(x)).mid().round_down(p.bits);
    ++res.section_hits;
  }
  res.integral = total;
  res.average = total == T ? Dyadic(1) : div_down(total, T, p.bits);
  return res;
}

}  // namespace lorenz
