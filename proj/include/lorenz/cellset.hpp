#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <tuple>
#include <vector>

#include "lorenz/model.hpp"
#include "lorenz/parallel.hpp"

namespace lorenz {

/// Uniform dyadic grid over V at resolution m: 2^(m+1) columns of width
/// r_plus 2^-m and 2^(m+1) rows of height y_half 2^-m. Cell (i, j) is the
/// closed rectangle [x_i, x_{i+1}] x [y_j, y_{j+1}].
class Grid {
 public:
  Grid() = default;
  Grid(const Model& model, int m) : m_(m), r_plus_(model.r_plus()), y_half_(model.y_half()) {
    if (m < 1 || m > 15) throw ConfigError("grid resolution m must be in [1, 15]");
    side_ = std::uint32_t{1} << (m + 1);
    w_ = r_plus_.scaled(-m);
    h_ = y_half_.scaled(-m);
    // h = Y 2^e with Y odd; row lookup divides by Y exactly.
    y_odd_ = h_.mantissa();
    y_exp_ = h_.exponent();
  }

  int m() const { return m_; }
  std::uint32_t side() const { return side_; }
  const Dyadic& cell_width() const { return w_; }
  const Dyadic& cell_height() const { return h_; }

  Dyadic x_edge(std::int64_t i) const { return -r_plus_ + w_ * Dyadic(static_cast<long>(i)); }
  Dyadic y_edge(std::int64_t j) const { return -y_half_ + h_ * Dyadic(static_cast<long>(j)); }
  Box cell_box(std::uint32_t i, std::uint32_t j) const {
    return {Interval(x_edge(i), x_edge(i + 1)), Interval(y_edge(j), y_edge(j + 1))};
  }
  Point2 cell_centre(std::uint32_t i, std::uint32_t j) const {
    return {(x_edge(i) + x_edge(i + 1)).scaled(-1), (y_edge(j) + y_edge(j + 1)).scaled(-1)};
  }

  // Squared cell diagonal, exact.
  Dyadic diagonal_squared() const { return w_ * w_ + h_ * h_; }

  /// Columns [first, last] of every closed cell meeting the closed x-interval,
  /// clamped to the grid. Returns false when the interval misses the grid.
  bool columns(const Interval& x, std::int64_t& first, std::int64_t& last) const {
    return index_range(x.lo() + r_plus_, x.hi() + r_plus_, false, first, last);
  }
  bool rows(const Interval& y, std::int64_t& first, std::int64_t& last) const {
    return index_range(y.lo() + y_half_, y.hi() + y_half_, true, first, last);
  }

 private:
  // floor / ceil of offset / cell size for a nonnegative-or-not dyadic offset.
  mpz_class scaled_floor(const Dyadic& off, bool rows) const {
    if (!rows) return off.floor_scaled(m_ - r_plus_.exponent());
    return div_floor(off, false);
  }
  mpz_class scaled_ceil(const Dyadic& off, bool rows) const {
    if (!rows) return off.ceil_scaled(m_ - r_plus_.exponent());
    return div_floor(off, true);
  }
  // floor or ceil of off / h with h = y_odd 2^y_exp.
  mpz_class div_floor(const Dyadic& off, bool ceil) const {
    // off / h = off.mantissa * 2^(off.exp - y_exp) / y_odd
    mpz_class num = off.mantissa(), den = y_odd_;
    const long e = off.exponent() - y_exp_;
    if (e >= 0) {
      mpz_mul_2exp(num.get_mpz_t(), num.get_mpz_t(), static_cast<mp_bitcnt_t>(e));
    } else {
      mpz_mul_2exp(den.get_mpz_t(), den.get_mpz_t(), static_cast<mp_bitcnt_t>(-e));
    }
    mpz_class q;
    if (ceil) {
      mpz_cdiv_q(q.get_mpz_t(), num.get_mpz_t(), den.get_mpz_t());
    } else {
      mpz_fdiv_q(q.get_mpz_t(), num.get_mpz_t(), den.get_mpz_t());
    }
    return q;
  }
  bool index_range(const Dyadic& lo_off, const Dyadic& hi_off, bool rows, std::int64_t& first,
                   std::int64_t& last) const {
    // cell k = [k, k+1] (in cell units) meets [u, v] iff k <= v and k + 1 >= u.
    const mpz_class lo = scaled_ceil(lo_off, rows) - 1;
    const mpz_class hi = scaled_floor(hi_off, rows);
    const mpz_class top = static_cast<long>(side_) - 1;
    const mpz_class a = lo < 0 ? mpz_class(0) : lo;
    const mpz_class b = hi > top ? top : hi;
    if (a > b) return false;
    first = a.get_si();
    last = b.get_si();
    return true;
  }

  int m_ = 0;
  std::uint32_t side_ = 0;
  Dyadic r_plus_, y_half_, w_, h_;
  mpz_class y_odd_;
  long y_exp_ = 0;
};

/// Finite set of grid cells, stored per column as sorted, disjoint,
/// non-adjacent runs of rows. The representation is canonical, so equality
/// of sets is equality of the arrays.
class CellSet {
 public:
  struct Run {
    std::uint32_t begin;  // first row
    std::uint32_t end;    // one past the last row
    friend bool operator==(const Run&, const Run&) = default;
  };
  struct Span {
    std::uint32_t col;
    std::uint32_t begin;
    std::uint32_t end;
    friend auto operator<=>(const Span&, const Span&) = default;
  };

  CellSet() = default;
  explicit CellSet(int m) : m_(m), offsets_((std::size_t{1} << (m + 1)) + 1, 0) {}

  static CellSet full(int m) {
    CellSet s(m);
    const std::uint32_t n = s.side();
    s.runs_.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      s.runs_.push_back({0, n});
      s.offsets_[i + 1] = i + 1;
    }
    return s;
  }

  // Canonicalizes an arbitrary multiset of row spans.
  static CellSet from_spans(int m, std::vector<Span> spans) {
    CellSet s(m);
    std::sort(spans.begin(), spans.end());
    const std::uint32_t n = s.side();
    std::size_t k = 0;
    for (std::uint32_t col = 0; col < n; ++col) {
      while (k < spans.size() && spans[k].col == col) {
        Run r{spans[k].begin, spans[k].end};
        ++k;
        while (k < spans.size() && spans[k].col == col && spans[k].begin <= r.end) {
          r.end = std::max(r.end, spans[k].end);
          ++k;
        }
        if (r.begin < r.end) s.runs_.push_back(r);
      }
      s.offsets_[col + 1] = s.runs_.size();
    }
    return s;
  }

  int m() const { return m_; }
  std::uint32_t side() const { return std::uint32_t{1} << (m_ + 1); }
  bool empty() const { return runs_.empty(); }
  std::size_t run_count() const { return runs_.size(); }

  std::uint64_t size() const {
    std::uint64_t n = 0;
    for (const Run& r : runs_) n += r.end - r.begin;
    return n;
  }

  // Runs of column i as a [first, last) pointer range.
  const Run* col_begin(std::uint32_t i) const { return runs_.data() + offsets_[i]; }
  const Run* col_end(std::uint32_t i) const { return runs_.data() + offsets_[i + 1]; }

  bool contains(std::uint32_t i, std::uint32_t j) const {
    if (i >= side() || j >= side()) return false;
    const Run* e = col_end(i);
    const Run* it = std::upper_bound(col_begin(i), e, j, [](std::uint32_t v, const Run& r) { return v < r.end; });
    return it != e && it->begin <= j;
  }

  // Distance in rows from j to the nearest cell of column i, or -1 if the
  // column is empty.
  std::int64_t nearest_row_gap(std::uint32_t i, std::uint32_t j) const {
    const Run* b = col_begin(i);
    const Run* e = col_end(i);
    if (b == e) return -1;
    const Run* it = std::upper_bound(b, e, j, [](std::uint32_t v, const Run& r) { return v < r.end; });
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    if (it != e) best = it->begin <= j ? 0 : static_cast<std::int64_t>(it->begin) - j;
    if (it != b) best = std::min<std::int64_t>(best, static_cast<std::int64_t>(j) - (it - 1)->end + 1);
    return best;
  }

  // Sorted list of (i, j) indices.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> cells() const {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    out.reserve(size());
    for (std::uint32_t i = 0; i < side(); ++i) {
      for (const Run* r = col_begin(i); r != col_end(i); ++r) {
        for (std::uint32_t j = r->begin; j < r->end; ++j) out.emplace_back(i, j);
      }
    }
    return out;
  }

  template <typename Fn>
  void for_each_cell(Fn&& fn) const {
    for (std::uint32_t i = 0; i < side(); ++i) {
      for (const Run* r = col_begin(i); r != col_end(i); ++r) {
        for (std::uint32_t j = r->begin; j < r->end; ++j) fn(i, j);
      }
    }
  }

  std::vector<Span> spans() const {
    std::vector<Span> out;
    out.reserve(runs_.size());
    for (std::uint32_t i = 0; i < side(); ++i) {
      for (const Run* r = col_begin(i); r != col_end(i); ++r) out.push_back({i, r->begin, r->end});
    }
    return out;
  }

  /// Image under the point reflection (i, j) -> (N-1-i, N-1-j).
  CellSet reflected() const {
    const std::uint32_t n = side();
    std::vector<Span> sp;
    sp.reserve(runs_.size());
    for (std::uint32_t i = 0; i < n; ++i) {
      for (const Run* r = col_begin(i); r != col_end(i); ++r) sp.push_back({n - 1 - i, n - r->end, n - r->begin});
    }
    return from_spans(m_, std::move(sp));
  }
  bool symmetric() const { return *this == reflected(); }

  /// Union with the 8-neighbourhood ring of every cell.
  CellSet inflated() const {
    const std::uint32_t n = side();
    std::vector<Span> sp;
    sp.reserve(runs_.size() * 3);
    for (std::uint32_t i = 0; i < n; ++i) {
      for (const Run* r = col_begin(i); r != col_end(i); ++r) {
        const std::uint32_t b = r->begin == 0 ? 0 : r->begin - 1;
        const std::uint32_t e = std::min(n, r->end + 1);
        for (std::int64_t d = -1; d <= 1; ++d) {
          const std::int64_t c = static_cast<std::int64_t>(i) + d;
          if (c >= 0 && c < n) sp.push_back({static_cast<std::uint32_t>(c), b, e});
        }
      }
    }
    return from_spans(m_, std::move(sp));
  }

  /// The cells of resolution m-1 whose region meets this set's region
  /// interior-wise (each fine cell maps to its parent).
  CellSet coarsened() const {
    if (m_ <= 1) throw PreconditionError("coarsened: resolution too small");
    std::vector<Span> sp;
    sp.reserve(runs_.size());
    for (const Span& s : spans()) sp.push_back({s.col / 2, s.begin / 2, (s.end + 1) / 2});
    return from_spans(m_ - 1, std::move(sp));
  }

  bool subset_of(const CellSet& o) const {
    if (o.m_ != m_) throw PreconditionError("subset_of: resolutions differ");
    for (std::uint32_t i = 0; i < side(); ++i) {
      const Run* ob = o.col_begin(i);
      const Run* oe = o.col_end(i);
      for (const Run* r = col_begin(i); r != col_end(i); ++r) {
        const Run* it = std::upper_bound(ob, oe, r->begin, [](std::uint32_t v, const Run& q) { return v < q.end; });
        if (it == oe || it->begin > r->begin || it->end < r->end) return false;
      }
    }
    return true;
  }

  friend bool operator==(const CellSet& a, const CellSet& b) {
    return a.m_ == b.m_ && a.offsets_ == b.offsets_ && a.runs_ == b.runs_;
  }

 private:
  int m_ = 0;
  std::vector<std::uint64_t> offsets_;
  std::vector<Run> runs_;
};

namespace detail {

// Squared distances between cells in units u: (a w/2)^2 + (b h/2)^2 =
// (a^2 X + b^2 Y) u with integers X, Y.
struct HalfCellMetric {
  unsigned __int128 X = 0, Y = 0;
  Dyadic unit;

  explicit HalfCellMetric(const Grid& g) {
    const Dyadic hw = g.cell_width().scaled(-1), hh = g.cell_height().scaled(-1);
    const Dyadic x2 = hw * hw, y2 = hh * hh;
    const long e = std::min(x2.exponent(), y2.exponent());
    unit = Dyadic::pow2(e);
    X = to_u128(x2.mantissa() << static_cast<mp_bitcnt_t>(x2.exponent() - e));
    Y = to_u128(y2.mantissa() << static_cast<mp_bitcnt_t>(y2.exponent() - e));
  }
  static unsigned __int128 to_u128(const mpz_class& v) {
    if (mpz_sizeinbase(v.get_mpz_t(), 2) > 60) throw ResourceError("cell metric constants too large");
    return static_cast<unsigned __int128>(v.get_ui());
  }
  unsigned __int128 key(std::int64_t a, std::int64_t b) const {
    const auto ua = static_cast<unsigned __int128>(a < 0 ? -a : a);
    const auto ub = static_cast<unsigned __int128>(b < 0 ? -b : b);
    return ua * ua * X + ub * ub * Y;
  }
  Dyadic value(unsigned __int128 k) const {
    mpz_class z;
    const auto hi = static_cast<unsigned long>(k >> 64), lo = static_cast<unsigned long>(k);
    z = hi;
    z <<= 64;
    z += lo;
    return Dyadic(z, 0) * unit;
  }
};

// For every cell A of `from`: L_A = min over B in `to` of |centre_A - B|^2
// and U_A = min over B of max_{a in A} |a - B|^2, in half-cell key units.
// Returns (max_A L_A, max_A U_A).
inline std::pair<unsigned __int128, unsigned __int128> directed_keys(const CellSet& from, const CellSet& to,
                                                                      const HalfCellMetric& metric) {
  const std::uint32_t n = from.side();
  std::vector<std::uint32_t> nonempty;
  for (std::uint32_t i = 0; i < n; ++i) {
    if (to.col_begin(i) != to.col_end(i)) nonempty.push_back(i);
  }
  using Pair = std::pair<unsigned __int128, unsigned __int128>;
  const auto parts = parallel_chunks(n, 64, [&](std::size_t b, std::size_t e) {
    Pair acc{0, 0};
    for (std::size_t i = b; i < e; ++i) {
      const std::uint32_t col = static_cast<std::uint32_t>(i);
      for (const CellSet::Run* r = from.col_begin(col); r != from.col_end(col); ++r) {
        for (std::uint32_t j = r->begin; j < r->end; ++j) {
          const auto none = std::numeric_limits<unsigned __int128>::max();
          unsigned __int128 lo = none, up = none;
          // Scan non-empty target columns outward from col.
          const auto mid = std::lower_bound(nonempty.begin(), nonempty.end(), col);
          auto right = mid;
          auto left = mid;
          bool go_r = true, go_l = true;
          while (go_r || go_l) {
            if (go_r) {
              if (right == nonempty.end()) {
                go_r = false;
              } else {
                const std::int64_t d = static_cast<std::int64_t>(*right) - col;
                const std::int64_t lx = d == 0 ? 0 : 2 * d - 1;
                if (metric.key(lx, 0) >= lo && metric.key(2 * d, 0) >= up) {
                  go_r = false;
                } else {
                  const std::int64_t g = to.nearest_row_gap(*right, j);
                  const std::int64_t ly = g == 0 ? 0 : 2 * g - 1;
                  lo = std::min(lo, metric.key(lx, ly));
                  up = std::min(up, metric.key(2 * d, 2 * g));
                  ++right;
                }
              }
            }
            if (go_l) {
              if (left == nonempty.begin()) {
                go_l = false;
              } else {
                const std::uint32_t c = *(left - 1);
                const std::int64_t d = static_cast<std::int64_t>(col) - c;
                const std::int64_t lx = 2 * d - 1;
                if (metric.key(lx, 0) >= lo && metric.key(2 * d, 0) >= up) {
                  go_l = false;
                } else {
                  const std::int64_t g = to.nearest_row_gap(c, j);
                  const std::int64_t ly = g == 0 ? 0 : 2 * g - 1;
                  lo = std::min(lo, metric.key(lx, ly));
                  up = std::min(up, metric.key(2 * d, 2 * g));
                  --left;
                }
              }
            }
          }
          acc.first = std::max(acc.first, lo);
          acc.second = std::max(acc.second, up);
        }
      }
    }
    return acc;
  });
  Pair out{0, 0};
  for (const Pair& p : parts) {
    out.first = std::max(out.first, p.first);
    out.second = std::max(out.second, p.second);
  }
  return out;
}

}  // namespace detail

/// Enclosure of the Hausdorff distance between the unions of two cell sets
/// of the same resolution. Width is at most about one cell diagonal.
inline Interval hausdorff(const Grid& grid, const CellSet& a, const CellSet& b, Precision p = Precision(64)) {
  if (a.m() != b.m() || a.m() != grid.m()) throw PreconditionError("hausdorff: resolutions differ");
  if (a.empty() || b.empty()) throw PreconditionError("hausdorff: empty cell set");
  if (a == b) return Interval(Dyadic());
  const detail::HalfCellMetric metric(grid);
  const auto ab = detail::directed_keys(a, b, metric);
  const auto ba = detail::directed_keys(b, a, metric);
  const Interval lo2(metric.value(std::max(ab.first, ba.first)));
  const Interval hi2(metric.value(std::max(ab.second, ba.second)));
  return {sqrt(lo2, p).lo(), sqrt(hi2, p).hi()};
}

/// Hausdorff distance between a finite point set and the union of a cell
/// set, evaluated in double precision with an explicit relative slack. Points
/// outside every cell contribute their distance to the nearest cell.
inline Interval hausdorff_points(const Grid& grid, const std::vector<Point2>& pts, const CellSet& cells) {
  if (pts.empty() || cells.empty()) throw PreconditionError("hausdorff_points: empty input");
  const double w = grid.cell_width().to_double(), h = grid.cell_height().to_double();
  const double x0 = grid.x_edge(0).to_double(), y0 = grid.y_edge(0).to_double();
  const std::uint32_t n = grid.side();
  // Bucket points on a coarse grid of B x B cells.
  const std::uint32_t B = 16;
  const std::uint32_t nb = (n + B - 1) / B;
  std::vector<std::vector<std::pair<double, double>>> buckets(static_cast<std::size_t>(nb) * nb);
  double far_pt = 0;  // max over points of distance to the cell union
  auto clampi = [&](double v) {
    const auto k = static_cast<std::int64_t>(std::floor(v));
    return static_cast<std::uint32_t>(std::clamp<std::int64_t>(k, 0, n - 1));
  };
  for (const Point2& q : pts) {
    const double px = q.x.to_double(), py = q.y.to_double();
    const std::uint32_t ci = clampi((px - x0) / w), cj = clampi((py - y0) / h);
    buckets[static_cast<std::size_t>(ci / B) * nb + cj / B].emplace_back(px, py);
    if (!cells.contains(ci, cj)) {
      // Nearest cell by ring search in cell units (rare: points sit in cells).
      double best = std::numeric_limits<double>::infinity();
      for (std::int64_t r = 0; r < n; ++r) {
        const double ring = std::min((r > 0 ? (r - 1) * w : 0.0), (r > 0 ? (r - 1) * h : 0.0));
        if (ring > best) break;
        for (std::int64_t di = -r; di <= r; ++di) {
          const std::int64_t i = static_cast<std::int64_t>(ci) + di;
          if (i < 0 || i >= n) continue;
          for (std::int64_t dj = -r; dj <= r; ++dj) {
            if (std::max(std::abs(di), std::abs(dj)) != r) continue;
            const std::int64_t j = static_cast<std::int64_t>(cj) + dj;
            if (j < 0 || j >= n || !cells.contains(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j))) continue;
            const double cx = std::clamp(px, x0 + i * w, x0 + (i + 1) * w);
            const double cy = std::clamp(py, y0 + j * h, y0 + (j + 1) * h);
            best = std::min(best, std::hypot(px - cx, py - cy));
          }
        }
      }
      far_pt = std::max(far_pt, best);
    }
  }
  const double half_diag = 0.5 * std::hypot(w, h);
  const double bw = B * w, bh = B * h;
  // For every cell: distance from its centre to the nearest point.
  const auto parts = parallel_chunks(n, 64, [&](std::size_t b, std::size_t e) {
    double worst_lo = 0, worst_hi = 0;
    for (std::size_t i = b; i < e; ++i) {
      const auto col = static_cast<std::uint32_t>(i);
      for (const CellSet::Run* r = cells.col_begin(col); r != cells.col_end(col); ++r) {
        for (std::uint32_t j = r->begin; j < r->end; ++j) {
          const double cx = x0 + (col + 0.5) * w, cy = y0 + (j + 0.5) * h;
          const std::int64_t bi = col / B, bj = j / B;
          double best = std::numeric_limits<double>::infinity();
          for (std::int64_t rr = 0; rr < nb; ++rr) {
            // Points in ring rr are at least (rr - 1) buckets away.
            const double ring = rr > 0 ? std::min((rr - 1) * bw, (rr - 1) * bh) : 0.0;
            if (ring > best) break;
            for (std::int64_t di = -rr; di <= rr; ++di) {
              const std::int64_t ii = bi + di;
              if (ii < 0 || ii >= nb) continue;
              for (std::int64_t dj = -rr; dj <= rr; ++dj) {
                if (std::max(std::abs(di), std::abs(dj)) != rr) continue;
                const std::int64_t jj = bj + dj;
                if (jj < 0 || jj >= nb) continue;
                for (const auto& [px, py] : buckets[static_cast<std::size_t>(ii) * nb + jj]) {
                  best = std::min(best, std::hypot(px - cx, py - cy));
                }
              }
            }
          }
          worst_lo = std::max(worst_lo, best - half_diag);
          worst_hi = std::max(worst_hi, best + half_diag);
        }
      }
    }
    return std::pair<double, double>{worst_lo, worst_hi};
  });
  double lo = far_pt, hi = far_pt;
  for (const auto& [l, u] : parts) {
    lo = std::max(lo, l);
    hi = std::max(hi, u);
  }
  const double slack = 1e-12 * (1 + hi);
  return {from_double(std::max(0.0, lo - slack)).round_down(60), from_double(hi + slack).round_up(60)};
}

}  // namespace lorenz
