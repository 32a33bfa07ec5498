#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "json.hpp"
#include "lorenz/cellset.hpp"

namespace lorenz {

/// One alpha-step K -> F+(K ∩ V+) ∪ F-(K ∩ V-) ∪ {rho+, rho-} on a fixed
/// grid. f and kappa*x are cached at the column boundaries of V+, and the
/// minus branch is evaluated as the mirror image of the plus branch, so the
/// result is exactly symmetric whenever K is.
class AlphaMap {
 public:
  AlphaMap(const Model& model, int m) : model_(model), grid_(model, m) {
    const std::uint32_t half = grid_.side() / 2;
    f_.reserve(half + 1);
    kx_.reserve(half + 1);
    for (std::uint32_t t = 0; t <= half; ++t) {
      const Dyadic x = grid_.cell_width() * Dyadic(static_cast<long>(t));
      f_.push_back(model_.f_plus_point(x));
      kx_.push_back(model_.kappa_x(x));
    }
  }

  const Grid& grid() const { return grid_; }
  const Model& model() const { return model_; }

  /// Image box of the plus-half block [x_c, x_{c+1}] x [y_b, y_e] (c counted
  /// from x = 0, rows in global indices).
  Box plus_image(std::uint32_t c, std::uint32_t b, std::uint32_t e) const {
    const Interval x(f_[c].lo(), f_[c + 1].hi());
    const Dyadic lo = c == 0 ? model_.t_minus().lo() : model_.g_plus_lower(kx_[c], grid_.y_edge(b));
    const Dyadic hi = model_.g_plus_upper(kx_[c + 1], grid_.y_edge(e));
    return {x, Interval(lo, hi)};
  }

  // Image box of the run [b, e) in global column i, on the branch of its half.
  Box run_image(std::uint32_t i, std::uint32_t b, std::uint32_t e) const {
    const std::uint32_t n = grid_.side(), half = n / 2;
    if (i >= half) return plus_image(i - half, b, e);
    return -plus_image(half - 1 - i, n - e, n - b);
  }

  void mark(const Box& box, std::vector<CellSet::Span>& out) const {
    std::int64_t c0 = 0, c1 = -1, r0 = 0, r1 = -1;
    if (!grid_.columns(box.x, c0, c1) || !grid_.rows(box.y, r0, r1)) return;
    for (std::int64_t c = c0; c <= c1; ++c) {
      out.push_back({static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(r0), static_cast<std::uint32_t>(r1 + 1)});
    }
  }

  CellSet step(const CellSet& k) const {
    if (k.m() != grid_.m()) throw PreconditionError("alpha_step: resolution mismatch");
    const std::uint32_t n = grid_.side();
    auto chunks = parallel_chunks(n, 256, [&](std::size_t b, std::size_t e) {
      std::vector<CellSet::Span> out;
      for (std::size_t i = b; i < e; ++i) {
        const auto col = static_cast<std::uint32_t>(i);
        for (const CellSet::Run* r = k.col_begin(col); r != k.col_end(col); ++r) {
          mark(run_image(col, r->begin, r->end), out);
        }
      }
      return out;
    });
    std::vector<CellSet::Span> all;
    std::size_t total = 2;
    for (const auto& c : chunks) total += c.size();
    all.reserve(total);
    for (auto& c : chunks) all.insert(all.end(), c.begin(), c.end());
    mark(model_.rho_plus(), all);
    mark(model_.rho_minus(), all);
    return CellSet::from_spans(grid_.m(), std::move(all));
  }

 private:
  Model model_;
  Grid grid_;
  std::vector<Interval> f_;
  std::vector<Interval> kx_;
};

inline constexpr std::uint64_t default_cell_ceiling = 50'000'000;

/// A_0 = V, A_{j+1} = alpha(A_j), returned for j = 0..n.
inline std::vector<CellSet> iterate_An_all(const AlphaMap& alpha, int n,
                                           std::uint64_t ceiling = default_cell_ceiling) {
  if (n < 0) throw PreconditionError("iterate_An: n must be >= 0");
  std::vector<CellSet> out;
  out.push_back(CellSet::full(alpha.grid().m()));
  for (int j = 0; j < n; ++j) {
    out.push_back(alpha.step(out.back()));
    if (out.back().size() > ceiling) throw ResourceError("iterate_An: cell count exceeds the ceiling");
  }
  return out;
}

inline CellSet iterate_An(const AlphaMap& alpha, int n, std::uint64_t ceiling = default_cell_ceiling) {
  if (n < 0) throw PreconditionError("iterate_An: n must be >= 0");
  const std::uint64_t full = static_cast<std::uint64_t>(alpha.grid().side()) * alpha.grid().side();
  if (n == 0 && full > ceiling) throw ResourceError("iterate_An: cell count exceeds the ceiling");
  CellSet k = CellSet::full(alpha.grid().m());
  for (int j = 0; j < n; ++j) {
    k = alpha.step(k);
    if (k.size() > ceiling) throw ResourceError("iterate_An: cell count exceeds the ceiling");
  }
  return k;
}

// 4 y_half c^n / (1 - c): the summed per-step Hausdorff bound from step n on.
inline mpq_class hausdorff_tail(const ModelParams& p, int n) {
  mpq_class cn = 1;
  for (int i = 0; i < n; ++i) cn *= p.c;
  return 4 * p.y_half * cn / (1 - p.c);
}

/// Smallest n with 4 y_half c^n / (1 - c) <= 2^-(k+1), by exact comparison.
inline int stopping_n(const ModelParams& p, int k) {
  const mpq_class target(mpz_class(1), mpz_class(1) << (k + 1));
  for (int n = 0; n < 10000; ++n) {
    if (hausdorff_tail(p, n) <= target) return n;
  }
  throw ResourceError("stopping rule: no n below 10000");
}

/// Smallest m with cell diagonal <= 2^-(k+2).
inline int stopping_m(const ModelParams& p, int k) {
  const mpq_class d2 = p.r_plus * p.r_plus + p.y_half * p.y_half;
  for (int m = 1; m <= 15; ++m) {
    const mpq_class lhs = d2 / mpq_class(mpz_class(1) << (2 * m));
    const mpq_class rhs(mpz_class(1), mpz_class(1) << (2 * (k + 2)));
    if (lhs <= rhs) return m;
  }
  throw ResourceError("stopping rule: cell resolution above m = 15 required");
}

// Closed-cell membership of a point in a cover.
inline bool cover_contains(const Grid& grid, const CellSet& cover, const Dyadic& x, const Dyadic& y) {
  std::int64_t c0, c1, r0, r1;
  if (!grid.columns(Interval(x), c0, c1) || !grid.rows(Interval(y), r0, r1)) return false;
  for (std::int64_t c = c0; c <= c1; ++c) {
    for (std::int64_t r = r0; r <= r1; ++r) {
      if (cover.contains(static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(r))) return true;
    }
  }
  return false;
}

struct InnerSamples {
  std::vector<Point2> points;
  Dyadic x_spacing;
  Dyadic y_spacing;
  Dyadic max_width;        // widest orbit enclosure that was kept
  std::uint64_t dropped = 0;  // orbits whose enclosure met D or grew too wide
  std::uint64_t snapped = 0;  // midpoints moved into the cover
};

/// Orbit samples F^n(z) for z on a dyadic grid over V \ D, evaluated as
/// interval boxes and reported by their midpoints, followed by rho+ and
/// rho-. x_shift > 0 refines the x-grid by 2^-x_shift. When a cover is
/// given, a midpoint outside it is moved to the nearest point of the orbit
/// box inside a cover cell (the exact orbit point lies in both).
inline InnerSamples inner_samples(const Model& model, int n, int k, int x_shift = 0, const Grid* grid = nullptr,
                                  const CellSet* cover = nullptr) {
  if (n < 0 || k < 1) throw PreconditionError("inner_samples: need n >= 0 and k >= 1");
  const ModelParams& p = model.params();
  const mpq_class s = mpq_class(1 - p.c) / mpq_class(mpz_class(1) << (k + 2));
  // Largest power of two <= s.
  long e = 0;
  while (mpq_class(mpz_class(1) << e) <= s) ++e;
  while (Dyadic::pow2(e).to_rational() > s) --e;
  const long ex = e - x_shift;
  // Fiber contraction: F^n moves y-distances by at most (kappa r+)^n <= c^n.
  const mpq_class lip = p.c / (2 * p.y_half + 1) * p.r_plus;
  mpq_class shrink = 1;
  for (int i = 0; i < n; ++i) shrink *= lip;
  int ty = 0;
  while (shrink * 2 * p.y_half / mpq_class(mpz_class(1) << ty) > Dyadic::pow2(ex).to_rational()) ++ty;

  InnerSamples out;
  out.x_spacing = Dyadic::pow2(ex);
  out.y_spacing = model.y_half().scaled(1 - ty);
  const Dyadic width_cap = Dyadic::pow2(-(k + 2));
  const long nx = model.r_plus().scaled(1).floor_scaled(-ex).get_si();
  const long ny = 1L << ty;
  struct Sample {
    bool kept = false, snapped = false, dropped = false;
    Point2 pt;
    Dyadic width;
  };
  const std::size_t total = static_cast<std::size_t>(nx + 1) * static_cast<std::size_t>(ny + 1);
  auto chunks = parallel_chunks(total, 512, [&](std::size_t b, std::size_t e2) {
    std::vector<Sample> res;
    res.reserve(e2 - b);
    for (std::size_t t = b; t < e2; ++t) {
      Sample smp;
      const long ix = static_cast<long>(t / (ny + 1)), iy = static_cast<long>(t % (ny + 1));
      const Dyadic x0 = model.r_minus() + out.x_spacing * Dyadic(ix);
      if (x0.is_zero()) {
        res.push_back(smp);
        continue;
      }
      const Dyadic y0 = -model.y_half() + out.y_spacing * Dyadic(iy);
      Box box{Interval(x0), Interval(y0)};
      bool ok = true;
      for (int step = 0; step < n && ok; ++step) {
        if (box.x.lo().sign() >= 0) {
          box = model.F_branch(Side::plus, box);
        } else if (box.x.hi().sign() <= 0) {
          box = model.F_branch(Side::minus, box);
        } else {
          ok = false;
        }
      }
      if (ok) {
        const Dyadic wd = max(box.x.width(), box.y.width());
        if (wd > width_cap) ok = false;
        smp.width = wd;
      }
      smp.dropped = !ok;
      if (ok) {
        smp.kept = true;
        smp.pt = {box.x.mid(), box.y.mid()};
        if (cover && !cover_contains(*grid, *cover, smp.pt.x, smp.pt.y)) {
          std::int64_t c0, c1, r0, r1;
          bool found = false;
          if (grid->columns(box.x, c0, c1) && grid->rows(box.y, r0, r1)) {
            for (std::int64_t c = c0; c <= c1 && !found; ++c) {
              for (std::int64_t r = r0; r <= r1 && !found; ++r) {
                if (!cover->contains(static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(r))) continue;
                const Box cell = grid->cell_box(static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(r));
                smp.pt = {min(max(smp.pt.x, max(cell.x.lo(), box.x.lo())), min(cell.x.hi(), box.x.hi())),
                          min(max(smp.pt.y, max(cell.y.lo(), box.y.lo())), min(cell.y.hi(), box.y.hi()))};
                found = true;
              }
            }
          }
          if (!found) throw CertificateError("inner_samples: orbit enclosure misses the outer cover");
          smp.snapped = true;
        }
      }
      res.push_back(smp);
    }
    return res;
  });
  for (const auto& c : chunks) {
    for (const Sample& smp : c) {
      if (smp.dropped) ++out.dropped;
      if (!smp.kept) continue;
      out.points.push_back(smp.pt);
      out.max_width = max(out.max_width, smp.width);
      if (smp.snapped) ++out.snapped;
    }
  }
  const Box rp = model.rho_plus(), rm = model.rho_minus();
  out.points.push_back({rp.x.mid(), rp.y.mid()});
  out.points.push_back({rm.x.mid(), rm.y.mid()});
  return out;
}

struct AttractorCertificate {
  int k = 0;
  int n = 0;
  int m = 0;
  Dyadic bound;              // 2^-k
  CellSet outer;
  std::vector<Point2> inner;
  Interval inner_outer;      // hausdorff(inner points, outer cover)
  Interval tail;             // 4 y_half c^n / (1 - c)
  Dyadic inner_width;        // widest orbit enclosure among inner samples
  Dyadic x_spacing, y_spacing;
  std::uint64_t snapped = 0;
  std::uint64_t dropped = 0;
  int refinements = 0;

  nlohmann::json to_json() const {
    auto iv = [](const Interval& v) {
      return nlohmann::json{{"lo", v.lo().to_string()}, {"hi", v.hi().to_string()},
                            {"lo_decimal", v.lo().to_decimal()}, {"hi_decimal", v.hi().to_decimal()}};
    };
    return {{"k", k},
            {"n", n},
            {"m", m},
            {"bound", bound.to_string()},
            {"bound_decimal", bound.to_decimal()},
            {"stopping_rule", "smallest n with 4*y_half*c^n/(1-c) <= 2^-(k+1); smallest m with cell diagonal <= 2^-(k+2)"},
            {"tail_bound", iv(tail)},
            {"hausdorff_inner_outer", iv(inner_outer)},
            {"inner_enclosure_width", inner_width.to_string()},
            {"inner_x_spacing", x_spacing.to_string()},
            {"inner_y_spacing", y_spacing.to_string()},
            {"refinements", refinements},
            {"counts",
             {{"outer_cells", outer.size()},
              {"outer_runs", outer.run_count()},
              {"inner_points", inner.size()},
              {"snapped", snapped},
              {"dropped", dropped}}}};
  }
};

/// Outer cover A_n at resolution m plus inner orbit samples, with the
/// two-sided bound checked as hausdorff(inner, outer) <= 2^-k.
inline AttractorCertificate compute_attractor(const Model& model, int k, std::uint64_t ceiling = default_cell_ceiling) {
  if (k < 1) throw PreconditionError("compute_attractor: k must be >= 1");
  AttractorCertificate cert;
  cert.k = k;
  cert.n = stopping_n(model.params(), k);
  cert.m = stopping_m(model.params(), k);
  cert.bound = Dyadic::pow2(-k);
  cert.tail = Interval::enclose(hausdorff_tail(model.params(), cert.n), Precision(64));
  const AlphaMap alpha(model, cert.m);
  cert.outer = iterate_An(alpha, cert.n, ceiling);
  for (int shift = 0; shift <= 3; ++shift) {
    InnerSamples s = inner_samples(model, cert.n, k, shift, &alpha.grid(), &cert.outer);
    cert.inner_outer = hausdorff_points(alpha.grid(), s.points, cert.outer);
    cert.inner = std::move(s.points);
    cert.inner_width = s.max_width;
    cert.x_spacing = s.x_spacing;
    cert.y_spacing = s.y_spacing;
    cert.snapped = s.snapped;
    cert.dropped = s.dropped;
    cert.refinements = shift;
    if (cert.inner_outer.hi() <= cert.bound) return cert;
  }
  throw CertificateError("compute_attractor: inner samples do not reach 2^-k density in the outer cover");
}

enum class Verdict { outside, unknown_at_k };

inline const char* to_string(Verdict v) { return v == Verdict::outside ? "outside" : "unknown_at_k"; }

/// Caches certificates per level so repeated semi-decisions are cheap.
class AttractorCache {
 public:
  explicit AttractorCache(Model model) : model_(std::move(model)) {}

  const AttractorCertificate& at(int k) {
    std::lock_guard lock(mu_);
    auto it = certs_.find(k);
    if (it == certs_.end()) it = certs_.emplace(k, std::make_unique<AttractorCertificate>(compute_attractor(model_, k))).first;
    return *it->second;
  }
  const Model& model() const { return model_; }

 private:
  Model model_;
  std::mutex mu_;
  std::map<int, std::unique_ptr<AttractorCertificate>> certs_;
};

/// "outside" iff q misses the closed outer cover at some level j <= k. Each
/// cover contains A, so the verdict is sound, and it persists as k grows.
inline Verdict semidecide_outside_section(AttractorCache& cache, const Point2& q, int k) {
  const Model& model = cache.model();
  if (!model.domain().x.contains(q.x) || !model.domain().y.contains(q.y)) {
    throw PreconditionError("semidecide_outside_section: q outside V");
  }
  for (int j = 1; j <= k; ++j) {
    const AttractorCertificate& c = cache.at(j);
    const Grid grid(model, c.m);
    if (!cover_contains(grid, c.outer, q.x, q.y)) return Verdict::outside;
  }
  return Verdict::unknown_at_k;
}

}  // namespace lorenz
