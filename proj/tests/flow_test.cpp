#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lorenz/flow.hpp"

using namespace lorenz;

namespace {

const Model& model() {
  static const Model m;
  return m;
}

const Dyadic eps = Dyadic::pow2(-10);

}  // namespace

TEST(ReturnTime, CircleTestbed) {
  const CircleField circle;
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<long> xs(-256, 256), ys(0, 27 * 256);
  for (int t = 0; t < 3; ++t) {
    const Dyadic x(mpz_class(xs(rng)), -8), y(mpz_class(ys(rng)), -8);
    const ReturnTimeResult r = return_time(circle, circle.section_point(x, y), eps, model().domain());
    EXPECT_LE(std::abs(r.time.to_double() - 2 * M_PI), eps.to_double()) << y;
    // Step bound and band passages.
    EXPECT_LE(r.delta * Dyadic(2) * circle.bounds().beta_max, r.eps0);
    EXPECT_GE(r.departure_band_iterates, 2);
    EXPECT_GE(r.return_band_iterates, 2);
    EXPECT_LE(r.max_error, r.eps0.to_double() / 2);
    // Closed orbit: the landing point is the start.
    const double tol = eps.to_double() * (1 + circle.bounds().beta_max.to_double()) + r.max_error;
    EXPECT_LE(std::abs(r.landing.x.mid().to_double() - x.to_double()), tol);
    EXPECT_LE(std::abs(r.landing.y.mid().to_double() - y.to_double()), tol);
  }
}

TEST(ReturnTime, ModelSuspensionTestbed) {
  const ModelSuspensionField field(model());
  for (const char* xs : {"0.25", "0.5", "0.75"}) {
    const Dyadic x = parse_dyadic(xs);
    const ReturnTimeResult r = return_time(field, field.section_point(x, Dyadic(0)), eps, model().domain());
    const Interval roof = model().roof(Interval(x));
    EXPECT_LE(abs(r.time - roof.lo()), eps) << xs;
    EXPECT_LE(abs(r.time - roof.hi()), eps) << xs;
    EXPECT_GE(r.departure_band_iterates, 2);
    EXPECT_GE(r.return_band_iterates, 2);
  }
  const Box land = poincare_from_flow(field, field.section_point(Dyadic::pow2(-1), Dyadic(0)), eps, model().domain());
  const Box f = model().F_point(Dyadic::pow2(-1), Dyadic(0));
  EXPECT_TRUE(land.x.contains(f.x));
  EXPECT_TRUE(land.y.contains(f.y));
}

TEST(ReturnTime, EpsScaling) {
  const ModelSuspensionField field(model());
  const Point3 a = field.section_point(Dyadic::pow2(-1), Dyadic(3));
  const ReturnTimeResult r1 = return_time(field, a, eps, model().domain());
  const ReturnTimeResult r2 = return_time(field, a, eps.scaled(1), model().domain());
  EXPECT_EQ(r2.eps0, r1.eps0.scaled(1));
  EXPECT_EQ(r2.delta, r1.delta.scaled(1));
  EXPECT_LE(r1.steps, 2 * r2.steps + 2);
  EXPECT_GE(r1.steps + 2, 2 * r2.steps);
}

TEST(ReturnTime, Preconditions) {
  const ModelSuspensionField field(model());
  const Point3 a = field.section_point(Dyadic::pow2(-1), Dyadic(0));
  EXPECT_THROW(return_time(field, a, Dyadic(0), model().domain()), PreconditionError);
  EXPECT_THROW(return_time(field, a, Dyadic(-1), model().domain()), PreconditionError);
  EXPECT_THROW(field.section_point(Dyadic(0), Dyadic(0)), PreconditionError);
  const CircleField circle;
  EXPECT_THROW(return_time(circle, Point3{Dyadic(0), Dyadic(1), Dyadic(26)}, eps, model().domain()), PreconditionError);
  // Below y0 + alpha_min the declared transversality bound does not hold.
  EXPECT_THROW(circle.section_point(Dyadic(0), Dyadic(-10)), PreconditionError);
}

TEST(Suspension, Cover) {
  const AttractorCertificate cert = compute_attractor(model(), 2);
  const TubeCover tube = suspension_cover(model(), cert, 4);
  EXPECT_TRUE(tube.has_origin_marker());
  EXPECT_GT(tube.box_count(), 0u);
  EXPECT_GT(tube.truncated_count(), 0u);  // rho cells never touch D, but cells at x = 0 do
  const Grid& g = tube.grid();
  const Dyadic w = g.cell_width();
  for (const auto& c : tube.columns()) {
    const Box b = g.cell_box(c.i, c.j);
    if (b.x.lo() == Dyadic::pow2(-1)) {
      // Roof over [0.5, 0.5 + w] peaks at 0.5: 1 + ln 2.
      EXPECT_GE(c.s_top.to_double(), 1.6931);
      EXPECT_LE(c.s_top.to_double(), 1.6932);
      EXPECT_FALSE(c.truncated);
    }
    if (b.x.contains_zero()) {
      EXPECT_TRUE(c.truncated);
    }
  }
  (void)w;
  // Every inner sample under its roof is covered.
  for (std::size_t t = 0; t < cert.inner.size(); t += 37) {
    const Point2& p = cert.inner[t];
    if (p.x.is_zero()) continue;
    const Dyadic top = model().roof(Interval(p.x)).lo();
    EXPECT_TRUE(tube.contains(p.x, p.y, Dyadic(0)));
    EXPECT_TRUE(tube.contains(p.x, p.y, min(top, tube.s_max())));
  }
  AttractorCertificate empty = cert;
  empty.outer = CellSet(cert.m);
  EXPECT_THROW(suspension_cover(model(), empty, 4), PreconditionError);
}

TEST(Suspension, SemiDecision) {
  AttractorCache cache{Model()};
  const SuspensionPoint rho{Dyadic(-1), Dyadic(2), Dyadic(0)};
  for (int k = 1; k <= 2; ++k) EXPECT_EQ(semidecide_outside_flow(cache, rho, k), Verdict::unknown_at_k);
  const SuspensionPoint far{Dyadic::pow2(-1), Dyadic(20), Dyadic(1)};
  EXPECT_EQ(semidecide_outside_flow(cache, far, 2), Verdict::outside);
  EXPECT_THROW(semidecide_outside_flow(cache, {Dyadic::pow2(-1), Dyadic(0), Dyadic(5)}, 1), PreconditionError);
}
