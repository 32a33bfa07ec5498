#pragma once

#include <map>
#include <mutex>
#include <ostream>
#include <utility>

#include "lorenz/dyadic.hpp"

namespace lorenz {

/// Closed interval [lo, hi] with dyadic endpoints.
///
/// Every operation below rounds outward: the true image set is contained in
/// the result, and each primitive adds at most 2^{-p+1} to the width of the
/// exact image (p = Precision::bits). Operations are pure and bit-reproducible.
class Interval {
 public:
  Interval() = default;
  Interval(Dyadic point) : lo_(point), hi_(std::move(point)) {}  // NOLINT(implicit)
  Interval(long point) : Interval(Dyadic(point)) {}              // NOLINT(implicit)
  Interval(int point) : Interval(Dyadic(point)) {}               // NOLINT(implicit)
  Interval(Dyadic lo, Dyadic hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
    if (hi_ < lo_) throw PreconditionError("interval with lo > hi");
  }

  // Tightest enclosure of a rational on the grid 2^-p.
  static Interval enclose(const mpq_class& q, Precision p) {
    if (is_dyadic(q)) return Interval(to_dyadic(q));
    return Interval(rational_down(q, p.bits), rational_up(q, p.bits));
  }
  static Interval hull(const Interval& a, const Interval& b) {
    return Interval(min(a.lo_, b.lo_), max(a.hi_, b.hi_));
  }

  const Dyadic& lo() const { return lo_; }
  const Dyadic& hi() const { return hi_; }
  Dyadic width() const { return hi_ - lo_; }
  Dyadic mid() const { return (lo_ + hi_).scaled(-1); }
  bool is_point() const { return lo_ == hi_; }
  bool contains(const Dyadic& x) const { return lo_ <= x && x <= hi_; }
  bool contains(const Interval& o) const { return lo_ <= o.lo_ && o.hi_ <= hi_; }
  bool contains_zero() const { return lo_.sign() <= 0 && hi_.sign() >= 0; }
  bool intersects(const Interval& o) const { return lo_ <= o.hi_ && o.lo_ <= hi_; }
  bool positive() const { return lo_.sign() > 0; }
  bool negative() const { return hi_.sign() < 0; }

  Interval rounded_out(Precision p) const { return {lo_.round_down(p.bits), hi_.round_up(p.bits)}; }

  friend bool operator==(const Interval& a, const Interval& b) = default;

 private:
  Dyadic lo_;
  Dyadic hi_;
};

inline std::ostream& operator<<(std::ostream& os, const Interval& a) {
  return os << '[' << a.lo() << ", " << a.hi() << ']';
}

// ---------------------------------------------------------------------------
// Exact operations (sums and negation need no rounding).

inline Interval operator-(const Interval& a) { return {-a.hi(), -a.lo()}; }
inline Interval operator+(const Interval& a, const Interval& b) { return {a.lo() + b.lo(), a.hi() + b.hi()}; }
inline Interval operator-(const Interval& a, const Interval& b) { return {a.lo() - b.hi(), a.hi() - b.lo()}; }

inline Interval exact_mul(const Interval& a, const Interval& b) {
  if (a.lo().sign() >= 0 && b.lo().sign() >= 0) return {a.lo() * b.lo(), a.hi() * b.hi()};
  const Dyadic c1 = a.lo() * b.lo(), c2 = a.lo() * b.hi(), c3 = a.hi() * b.lo(), c4 = a.hi() * b.hi();
  return {min(min(c1, c2), min(c3, c4)), max(max(c1, c2), max(c3, c4))};
}

inline Interval min(const Interval& a, const Interval& b) { return {min(a.lo(), b.lo()), min(a.hi(), b.hi())}; }
inline Interval max(const Interval& a, const Interval& b) { return {max(a.lo(), b.lo()), max(a.hi(), b.hi())}; }

// ---------------------------------------------------------------------------
// Rounded primitives.

enum class ArithOp { add, sub, mul, neg, min, max };

inline Interval mul(const Interval& a, const Interval& b, Precision p) { return exact_mul(a, b).rounded_out(p); }

inline Interval arith(ArithOp op, const Interval& a, const Interval& b, Precision p) {
  switch (op) {
    case ArithOp::add: return (a + b).rounded_out(p);
    case ArithOp::sub: return (a - b).rounded_out(p);
    case ArithOp::mul: return mul(a, b, p);
    case ArithOp::neg: return -a;
    case ArithOp::min: return min(a, b);
    case ArithOp::max: return max(a, b);
  }
  return a;
}

inline Interval div(const Interval& a, const Interval& b, Precision p) {
  if (b.contains_zero()) throw PreconditionError("domain", "interval division by an interval containing 0");
  const long g = p.bits;
  const Dyadic* const num[2] = {&a.lo(), &a.hi()};
  const Dyadic* const den[2] = {&b.lo(), &b.hi()};
  Dyadic lo, hi;
  bool first = true;
  for (const Dyadic* x : num) {
    for (const Dyadic* y : den) {
      Dyadic d = div_down(*x, *y, g), u = div_up(*x, *y, g);
      if (first || d < lo) lo = d;
      if (first || hi < u) hi = u;
      first = false;
    }
  }
  return {lo, hi};
}

namespace detail {

// floor(sqrt(x)) on the grid 2^-q, x >= 0.
inline Dyadic sqrt_down(const Dyadic& x, long q) {
  mpz_class n = x.floor_scaled(2 * q), r;
  mpz_sqrt(r.get_mpz_t(), n.get_mpz_t());
  return Dyadic(r, -q);
}
inline Dyadic sqrt_up(const Dyadic& x, long q) {
  mpz_class n = x.ceil_scaled(2 * q), r;
  mpz_sqrt(r.get_mpz_t(), n.get_mpz_t());
  if (r * r < n) ++r;
  return Dyadic(r, -q);
}

}  // namespace detail

inline Interval sqrt(const Interval& a, Precision p) {
  if (a.lo().sign() < 0) throw PreconditionError("domain", "sqrt of an interval with negative lower end");
  // Grid 2^-(p+1): flooring the radicand and the root each cost <= 2^-(p+1).
  const long q = p.bits + 1;
  return {detail::sqrt_down(a.lo(), q), detail::sqrt_up(a.hi(), q)};
}

namespace detail {

// Enclosure of 2*artanh(z) = ln((1+z)/(1-z)) for z in [zlo, zhi] ⊆ [0, 1/3],
// on the grid 2^-g. Terms are positive, so down/up rounding of every term
// gives lower/upper partial sums; the tail after N terms is bounded by
// z^(2N+1) / ((2N+1)(1 - z^2)) <= (5/4) z^(2N+1) / (2N+1), valid for z up to
// a few ulps above 1/3.
inline Interval two_artanh(const Dyadic& zlo, const Dyadic& zhi, long g) {
  const long terms = g / 3 + 2;  // (1/3)^(2N+1) < 2^-(3.17 N)
  auto partial = [&](const Dyadic& z, bool up) {
    const Dyadic z2 = up ? (z * z).round_up(g) : (z * z).round_down(g);
    Dyadic power = z, sum;
    for (long i = 0; i < terms; ++i) {
      const Dyadic denom(2 * i + 1);
      sum += up ? div_up(power, denom, g) : div_down(power, denom, g);
      power = up ? (power * z2).round_up(g) : (power * z2).round_down(g);
    }
    if (up) {
      // power now bounds z^(2N+1) from above.
      sum += div_up(power * Dyadic(5), Dyadic(4 * (2 * terms + 1)), g);
    }
    return sum;
  };
  return {partial(zlo, false).scaled(1), partial(zhi, true).scaled(1)};
}

// ln 2 = 2 artanh(1/3), cached per grid.
inline Interval ln2(long g) {
  static std::mutex mu;
  static std::map<long, Interval> cache;
  std::lock_guard lock(mu);
  if (auto it = cache.find(g); it != cache.end()) return it->second;
  const Dyadic one(1), three(3);
  Interval v = two_artanh(div_down(one, three, g), div_up(one, three, g), g);
  cache.emplace(g, v);
  return v;
}

// Enclosure of ln(x) for a positive dyadic point x, on the grid 2^-g.
inline Interval ln_point(const Dyadic& x, long g) {
  // x = 2^k * y with y in [1, 2)
  const long k = x.magnitude_bits() - 1;
  const Dyadic y = x.scaled(-k);
  Interval lny(Dyadic(0));
  if (y != Dyadic(1)) {
    const Dyadic num = y - Dyadic(1), den = y + Dyadic(1);
    lny = two_artanh(div_down(num, den, g), div_up(num, den, g), g);
  }
  if (k == 0) return lny;
  const Interval l2 = ln2(g);
  const Dyadic kk(k);
  const Interval kl2 = k > 0 ? Interval(kk * l2.lo(), kk * l2.hi()) : Interval(kk * l2.hi(), kk * l2.lo());
  return kl2 + lny;
}

}  // namespace detail

inline Interval ln(const Interval& a, Precision p) {
  if (a.lo().sign() <= 0) throw PreconditionError("domain", "ln of an interval not bounded away from 0");
  // Guard bits keep the series error far below the final 2^-(p+1) rounding.
  const long g = p.bits + 24;
  const Precision out(p.bits + 1);
  const Dyadic lo = detail::ln_point(a.lo(), g).lo().round_down(out.bits);
  const Dyadic hi = (a.is_point() ? detail::ln_point(a.lo(), g) : detail::ln_point(a.hi(), g)).hi().round_up(out.bits);
  return {lo, hi};
}

inline Interval abs(const Interval& a) {
  if (a.lo().sign() >= 0) return a;
  if (a.hi().sign() <= 0) return -a;
  return {Dyadic(), max(-a.lo(), a.hi())};
}

// Square with exact lower bound 0 when a straddles 0.
inline Interval square(const Interval& a, Precision p) {
  const Interval m = abs(a);
  return mul(m, m, p);
}

}  // namespace lorenz
