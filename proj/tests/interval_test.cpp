#include <gtest/gtest.h>

#include <random>

#include "lorenz/interval.hpp"

using namespace lorenz;

namespace {

// Bracket [v - 10^-40, v + 10^-40] around a 42-digit oracle value.
Interval oracle(const char* digits) {
  const mpq_class v = parse_rational(digits);
  const mpq_class slack = parse_rational("1e-40");
  return {rational_down(v - slack, 140), rational_up(v + slack, 140)};
}

Dyadic random_dyadic(std::mt19937_64& rng, long lo_int, long hi_int) {
  std::uniform_int_distribution<long> m(lo_int << 20, hi_int << 20);
  return Dyadic(mpz_class(m(rng)), -20);
}

Interval random_interval(std::mt19937_64& rng, long lo_int, long hi_int) {
  Dyadic a = random_dyadic(rng, lo_int, hi_int), b = random_dyadic(rng, lo_int, hi_int);
  if (b < a) std::swap(a, b);
  return {a, b};
}

Dyadic random_point(std::mt19937_64& rng, const Interval& a) {
  std::uniform_int_distribution<int> t(0, 1 << 16);
  return a.lo() + (a.width() * Dyadic(mpz_class(t(rng)), -16));
}

}  // namespace

TEST(Dyadic, Canonical) {
  const Dyadic d(mpz_class(12), 0);
  EXPECT_EQ(d.mantissa(), 3);
  EXPECT_EQ(d.exponent(), 2);
  EXPECT_EQ(Dyadic(mpz_class(0), 7).exponent(), 0);
  EXPECT_EQ(Dyadic(mpz_class(3), -2).to_string(), "3*2^-2");
  EXPECT_EQ(Dyadic(mpz_class(3), -2).to_decimal(), "0.75");
  EXPECT_EQ(Dyadic(mpz_class(-5), 1).to_string(), "-10");
  EXPECT_EQ(parse_dyadic("3*2^-2"), Dyadic(mpz_class(3), -2));
  EXPECT_EQ(parse_dyadic("-0.375"), Dyadic(mpz_class(-3), -3));
  EXPECT_THROW(parse_dyadic("0.1"), ConfigError);
}

TEST(Dyadic, Rounding) {
  const Dyadic third_down = div_down(Dyadic(1), Dyadic(3), 10);
  const Dyadic third_up = div_up(Dyadic(1), Dyadic(3), 10);
  EXPECT_EQ(third_up - third_down, Dyadic::pow2(-10));
  EXPECT_LT(third_down.to_rational(), mpq_class(1, 3));
  EXPECT_GT(third_up.to_rational(), mpq_class(1, 3));
  EXPECT_EQ(Dyadic(mpz_class(-7), -3).round_down(1), Dyadic(mpz_class(-1), 0));
  EXPECT_EQ(Dyadic(mpz_class(-7), -3).round_up(1), Dyadic(mpz_class(-1), -1));
}

TEST(Interval, Examples) {
  const Precision p(53);
  EXPECT_EQ(arith(ArithOp::add, Interval(1), Interval(2), p), Interval(3));
  EXPECT_EQ(arith(ArithOp::mul, Interval(-1, 2), Interval(3), p), Interval(-3, 6));
  const Interval a(Dyadic::pow2(-2), Dyadic::pow2(-1));
  EXPECT_EQ(arith(ArithOp::neg, a, a, p), Interval(-Dyadic::pow2(-1), -Dyadic::pow2(-2)));
  EXPECT_EQ(-(-a), a);
  EXPECT_THROW(Interval(2, 1), PreconditionError);
}

TEST(Interval, SqrtExamples) {
  EXPECT_EQ(sqrt(Interval(4), Precision(20)), Interval(2));
  EXPECT_EQ(sqrt(Interval(0), Precision(20)), Interval(0));
  const Interval r2 = sqrt(Interval(2), Precision(20));
  EXPECT_TRUE(r2.contains(oracle("1.414213562373095048801688724209698078570")));
  EXPECT_LE(r2.width(), Dyadic::pow2(-19));
  EXPECT_THROW(sqrt(Interval(-1, 1), Precision(20)), PreconditionError);
}

TEST(Interval, LnExamples) {
  EXPECT_EQ(ln(Interval(1), Precision(30)), Interval(0));
  const Interval l2 = ln(Interval(2), Precision(30));
  EXPECT_TRUE(l2.contains(oracle("0.693147180559945309417232121458176568075500")));
  EXPECT_LE(l2.width(), Dyadic::pow2(-29));
  // e enclosed by its series partial sums: sum_{i<30} 1/i! plus tail < 2/30!.
  mpq_class e = 0, term = 1;
  for (int i = 0; i < 30; ++i) {
    e += term;
    term /= i + 1;
  }
  const Interval e_box(rational_down(e, 90), rational_up(e + 2 * term, 90));
  EXPECT_TRUE(ln(e_box, Precision(60)).contains(Dyadic(1)));
  EXPECT_THROW(ln(Interval(0, 1), Precision(30)), PreconditionError);
  // Large and tiny arguments go through the argument reduction.
  const Interval l2o = oracle("0.693147180559945309417232121458176568075500");
  EXPECT_TRUE(ln(Interval(Dyadic::pow2(40)), Precision(40)).contains(Interval(40 * l2o.lo(), 40 * l2o.hi())));
  EXPECT_TRUE(ln(Interval(Dyadic::pow2(-40)), Precision(40)).contains(Interval(-40 * l2o.hi(), -40 * l2o.lo())));
}

TEST(Interval, RandomContainment) {
  std::mt19937_64 rng(20261016);
  const Precision p(24);
  const Dyadic slack = Dyadic::pow2(-p.bits + 1);
  const ArithOp ops[] = {ArithOp::add, ArithOp::sub, ArithOp::mul, ArithOp::neg, ArithOp::min, ArithOp::max};
  for (ArithOp op : ops) {
    for (int t = 0; t < 10000; ++t) {
      const Interval a = random_interval(rng, -8, 8), b = random_interval(rng, -8, 8);
      const Interval r = arith(op, a, b, p);
      const Dyadic x = random_point(rng, a), y = random_point(rng, b);
      Dyadic v;
      switch (op) {
        case ArithOp::add: v = x + y; break;
        case ArithOp::sub: v = x - y; break;
        case ArithOp::mul: v = x * y; break;
        case ArithOp::neg: v = -x; break;
        case ArithOp::min: v = min(x, y); break;
        case ArithOp::max: v = max(x, y); break;
      }
      ASSERT_TRUE(r.contains(v)) << "op " << static_cast<int>(op) << " " << a << " " << b;
      if (op == ArithOp::mul) {
        ASSERT_LE(r.width(), exact_mul(a, b).width() + slack);
        // Refinement monotonicity: sub-boxes map inside the padded image.
        const Interval a2(x, max(x, a.hi())), b2(y, max(y, b.hi()));
        const Interval r2 = arith(op, a2, b2, p);
        ASSERT_TRUE(Interval(r.lo() - slack, r.hi() + slack).contains(r2));
      }
    }
  }
}

TEST(Interval, RandomSqrtLn) {
  std::mt19937_64 rng(7);
  const Precision p(30);
  const Dyadic slack = Dyadic::pow2(-p.bits + 1);
  for (int t = 0; t < 10000; ++t) {
    const Interval a = random_interval(rng, 0, 64);
    const Dyadic x = random_point(rng, a);
    const Interval s = sqrt(a, p);
    // x in [lo^2, hi^2] certifies sqrt(x) in s.
    ASSERT_LE(s.lo() * s.lo(), x);
    ASSERT_GE(s.hi() * s.hi(), x);
    const Interval exact_hull = sqrt(a, Precision(p.bits + 30));
    ASSERT_LE(s.width(), exact_hull.width() + slack);
  }
  for (int t = 0; t < 10000; ++t) {
    Interval a = random_interval(rng, 0, 64);
    if (a.lo().is_zero()) a = Interval(Dyadic::pow2(-20), a.hi() + Dyadic::pow2(-20));
    const Dyadic x = random_point(rng, a);
    const Interval l = ln(a, p);
    // Containment via a high-precision point enclosure of ln(x).
    const Interval lx = ln(Interval(x), Precision(p.bits + 20));
    ASSERT_TRUE(l.contains(lx)) << a;
    const Interval tight = ln(a, Precision(p.bits + 30));
    ASSERT_LE(l.width(), tight.width() + slack);
    // Increasing precision never widens beyond the slack.
    ASSERT_LE(ln(a, Precision(p.bits + 8)).width(), l.width() + slack);
  }
}
