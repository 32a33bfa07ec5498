#include <gtest/gtest.h>

#include "lorenz/validate.hpp"

using namespace lorenz;

namespace {

Interval oracle(const char* digits) {
  const mpq_class v = parse_rational(digits);
  const mpq_class slack = parse_rational("1e-40");
  return {rational_down(v - slack, 140), rational_up(v + slack, 140)};
}

Interval enc(const char* decimal, int p = 120) { return Interval::enclose(parse_rational(decimal), Precision(p)); }

}  // namespace

TEST(Model, FBranch) {
  const Model m;
  const int p = m.precision().bits;
  EXPECT_TRUE(m.f_branch(Side::plus, Interval(1)).contains(enc("0.95")));
  EXPECT_EQ(m.f_branch(Side::plus, Interval(0)), Interval(-1));
  const Interval f_half = m.f_branch(Side::plus, Interval(Dyadic::pow2(-1)));
  EXPECT_TRUE(f_half.contains(oracle("0.159476937127653040049562471296464017410648")));
  EXPECT_LE(f_half.width(), Dyadic::pow2(-p + 2));
  EXPECT_THROW(m.f_branch(Side::plus, Interval(-1, 1)), PreconditionError);
  EXPECT_THROW(m.f_branch(Side::minus, Interval(0, 1)), PreconditionError);
  // Monotone tightness.
  const Interval x(Dyadic::pow2(-3), Dyadic(mpz_class(3), -2));
  const Interval fx = m.f_branch(Side::plus, x);
  EXPECT_EQ(fx.lo(), m.f_plus_point(x.lo()).lo());
  EXPECT_EQ(fx.hi(), m.f_plus_point(x.hi()).hi());
}

TEST(Model, GBranch) {
  const Model m;
  for (int y : {-27, 0, 13, 27}) EXPECT_EQ(m.g_branch(Side::plus, Interval(0), Interval(y)), m.t_minus());
  EXPECT_TRUE(m.g_branch(Side::plus, Interval(1), Interval(27)).contains(enc("2.6")));
  EXPECT_TRUE(m.g_branch(Side::minus, Interval(-1), Interval(-27)).contains(enc("-2.6")));
  EXPECT_THROW(m.g_branch(Side::plus, Interval(1), Interval(28)), PreconditionError);
}

TEST(Model, FBranchBoxes) {
  const Model m;
  const Box d = m.F_branch(Side::plus, {Interval(0), Interval(-27, 27)});
  EXPECT_EQ(d, m.rho_plus());
  EXPECT_EQ(d.x, Interval(-1));
  EXPECT_EQ(d.y, Interval(2));
  const Box b = m.F_branch(Side::plus, {Interval(1), Interval(27)});
  EXPECT_TRUE(b.x.contains(enc("0.95")));
  EXPECT_TRUE(b.y.contains(enc("2.6")));
  // -g(1, -27) = -(2 + 0.6/55).
  const Box c = m.F_branch(Side::minus, {Interval(-1), Interval(27)});
  EXPECT_TRUE(c.x.contains(enc("-0.95")));
  EXPECT_TRUE(c.y.contains(Interval::enclose(-(2 + mpq_class(6, 550)), Precision(120))));
  EXPECT_THROW(m.F_branch(Side::plus, {Interval(-1, -Dyadic::pow2(-3)), Interval(0)}), PreconditionError);
}

TEST(Model, OddSymmetryBitExact) {
  const Model m;
  for (int i = 0; i < 64; ++i) {
    for (int j = -4; j < 4; ++j) {
      const Box box{Interval(Dyadic(mpz_class(i), -6), Dyadic(mpz_class(i + 1), -6)),
                    Interval(Dyadic(mpz_class(27 * j), -2), Dyadic(mpz_class(27 * (j + 1)), -2))};
      ASSERT_EQ(m.F_branch(Side::minus, -box), -m.F_branch(Side::plus, box));
    }
  }
}

TEST(Model, FiberContraction) {
  const Model m;
  const Dyadic c = m.c().hi();
  for (int i = 1; i <= 16; ++i) {
    const Interval x(Dyadic(mpz_class(i), -4));
    for (int y1 = -27; y1 <= 27; y1 += 9) {
      for (int y2 = -27; y2 <= 27; y2 += 7) {
        const Dyadic g1 = m.g_branch(Side::plus, x, Interval(y1)).mid();
        const Dyadic g2 = m.g_branch(Side::plus, x, Interval(y2)).mid();
        ASSERT_LE(abs(g1 - g2), c * abs(Dyadic(y1 - y2)) + Dyadic::pow2(-50));
      }
    }
  }
}

TEST(Model, Roof) {
  const Model m;
  EXPECT_EQ(m.roof(Interval(1)), Interval(1));
  const Interval r = m.roof(Interval(Dyadic::pow2(-1)));
  EXPECT_TRUE(r.contains(oracle("1.693147180559945309417232121458176568075500")));
  EXPECT_EQ(m.roof(Interval(-Dyadic::pow2(-1))), r);
  EXPECT_THROW(m.roof(Interval(-1, 1)), PreconditionError);
  // Lipschitz in log with C = 1.
  for (int i = 1; i < 32; ++i) {
    for (int j = i + 1; j <= 32; j += 3) {
      const Interval xi(Dyadic(mpz_class(i), -5)), xj(Dyadic(mpz_class(j), -5));
      const Interval d = m.roof(xi) - m.roof(xj);
      const Interval l = ln(xj, Precision(64)) - ln(xi, Precision(64));
      ASSERT_LE(abs(d).lo(), abs(l).hi() + Dyadic::pow2(-60));
    }
  }
  // Closed-form antiderivative: integral of 1 + |ln x| over [0, 1] is 2.
  EXPECT_TRUE(m.roof_antiderivative(Dyadic(1)).contains(Dyadic(2)));
}

TEST(ModelParams, Json) {
  const ModelParams d = ModelParams::from_json(nlohmann::json::object());
  EXPECT_EQ(d.c, mpq_class(3, 5));
  const ModelParams q = ModelParams::from_json({{"c", "1/2"}, {"b_slope", "1.9"}});
  EXPECT_EQ(q.c, mpq_class(1, 2));
  EXPECT_THROW(ModelParams::from_json({{"bogus", "1"}}), ConfigError);
  EXPECT_THROW(ModelParams::from_json({{"c", 0.6}}), ConfigError);
  EXPECT_THROW(ModelParams::from_json({{"r_plus", "3"}}), ConfigError);
}

TEST(Validate, Defaults) {
  const ValidationReport rep = validate(ModelParams{}, 10);
  for (const auto& it : rep.items) EXPECT_TRUE(it.passed) << it.id << ": " << it.detail;
  const auto* slope = rep.find("F-3.slope");
  ASSERT_NE(slope, nullptr);
  ASSERT_TRUE(slope->witness.has_value());
  EXPECT_TRUE(slope->witness->contains(enc("1.4625")));
  EXPECT_TRUE(rep.to_json()["all_pass"].get<bool>());
}

TEST(Validate, Mutations) {
  ModelParams slow;
  slow.b_slope = parse_rational("1.2");
  const ValidationReport a = validate(slow, 10);
  EXPECT_FALSE(a.find("F-3.slope")->passed);
  EXPECT_FALSE(a.find("param.slope")->passed);
  EXPECT_FALSE(a.all_passed());

  ModelParams loose;
  loose.c = parse_rational("0.8");
  const ValidationReport b = validate(loose, 10);
  EXPECT_FALSE(b.find("param.contraction")->passed);
  EXPECT_FALSE(b.find("F-4.fiber_contraction")->passed);
  EXPECT_TRUE(b.find("F-3.slope")->passed);
}
