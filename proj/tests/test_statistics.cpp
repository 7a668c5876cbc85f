#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <tuple>
#include <vector>

#include "abc/decompositions.hpp"
#include "abc/hopf_geometry.hpp"
#include "abc/sphere_maps.hpp"
#include "abc/statistics.hpp"

using namespace abc;

namespace {

PartialDecomposition one_segment(int qp, double c, double s2, double lo, double hi) {
  PartialDecomposition d;
  d.q = qp;
  d.spec = GridSpec{1, 1, s2, s2};
  GridPoint g;
  g.c = c;
  g.xi = std::asin(std::sqrt(s2));
  g.segments.push_back({lo, hi});
  d.grid.push_back(g);
  return d;
}

// Length of {t in [a, b] : t in [t1_lo, t1_hi), (c - s t) mod 1 in [u, v)} for
// the line theta2 = c - s theta1, solved exactly per integer shift.
double line_cell_length(double a, double b, double s, double c, double t1_lo, double t1_hi,
                        double u, double v) {
  const double lo = std::max(a, t1_lo), hi = std::min(b, t1_hi);
  if (hi <= lo) return 0.0;
  double total = 0.0;
  for (int j = -3; j <= 3; ++j) {
    const double x = (c + j - v) / s, y = (c + j - u) / s;
    total += std::max(0.0, std::min(hi, y) - std::max(lo, x));
  }
  return total;
}

double oracle_worst_deviation(int q, double eps, const Segment& seg) {
  const double s = 1.0 - 1.0 / seg.q;
  const double s2 = std::sin(seg.xi) * std::sin(seg.xi);
  double worst = 0.0;
  for (const Cell& b : cells(q))
    for (MarginSign sign : {MarginSign::Plus, MarginSign::Minus}) {
      const double d = (sign == MarginSign::Plus ? 1.0 : -1.0) * eps / (16.0 * q);
      const double t1_lo = b.k / double(q) - d, t1_hi = (b.k + 1) / double(q) + d;
      const double t2_lo = b.l / double(q) - d, t2_hi = (b.l + 1) / double(q) + d;
      const double r_lo = b.m / double(q) - d, r_hi = (b.m + 1) / double(q) + d;
      const double mu = (t1_hi - t1_lo) * (t2_hi - t2_lo) * (r_hi - r_lo);
      double ratio = 0.0;
      if (s2 >= r_lo && s2 < r_hi)
        ratio = line_cell_length(seg.theta1_lo, seg.theta1_hi, s, seg.c, t1_lo, t1_hi, t2_lo,
                                 t2_hi) /
                seg.length();
      worst = std::max(worst, std::abs(ratio - mu));
    }
  return worst;
}

ProductSet random_box(std::uint64_t i) {
  const HopfPoint r = sample_point_at(404, 2, i);
  ProductSet s;
  s.theta1 = {r.theta1, 0.05 + 0.4 * r.theta2};
  s.theta2 = {r.theta2, 0.05 + 0.4 * r.theta1};
  const double lo = 0.5 * std::sin(r.xi) * std::sin(r.xi);
  s.xi = {XiInterval::from_sin2(lo, lo + 0.3)};
  return s;
}

}  // namespace

TEST(Birkhoff, IdentityGivesIndicator) {
  const ProductSet box = random_box(0);
  const auto pred = [&](const HopfPoint& p) { return box.contains(p); };
  HopfPoint inside{box.theta1.lo + 0.01, box.theta2.lo + 0.01, box.xi[0].lo + 0.01};
  ASSERT_TRUE(box.contains(inside));
  EXPECT_EQ(birkhoff_average(MapExpr::identity(), inside, pred, 1000), 1.0);
  const HopfPoint outside = rotate(0.5L, inside);
  EXPECT_EQ(birkhoff_average(MapExpr::identity(), outside, pred, 1), box.contains(outside) ? 1.0 : 0.0);
  EXPECT_THROW(birkhoff_average(MapExpr::identity(), inside, pred, 0), std::invalid_argument);
}

TEST(Birkhoff, RationalRotationCountsExactly) {
  constexpr int qp = 40;
  const MapExpr f = MapExpr::rotation(RationalRotation::make(7, qp));
  const HopfPoint x{0.5 / qp, 0.5 / qp, 0.7};
  const auto pred = [](const HopfPoint& p) { return p.theta1 >= 0.25 && p.theta1 < 0.55; };
  // the orbit visits (j + 1/2) / 40 once per period
  int count = 0;
  for (int j = 0; j < qp; ++j)
    if (2 * j + 1 >= 20 && 2 * j + 1 < 44) ++count;
  EXPECT_EQ(birkhoff_average(f, x, pred, qp), count / double(qp));
  EXPECT_EQ(birkhoff_average(f, x, pred, 1000 * qp), count / double(qp));

  // a truncated last period matches direct iteration
  constexpr std::int64_t n = 5 * qp + 13;
  int direct = 0;
  HopfPoint z = x;
  for (std::int64_t k = 0; k < n; ++k) {
    direct += pred(z);
    z = rotate(RationalRotation::make(7, qp), z);
  }
  EXPECT_NEAR(birkhoff_average(f, x, pred, n), direct / double(n), 1e-14);
}

TEST(Birkhoff, ValuesStayInUnitInterval) {
  const MapExpr f = MapExpr::compose(MapExpr::rotation(0.1234567L), MapExpr::twist(4, 0.01L));
  const ProductSet box = random_box(3);
  for (const HopfPoint& x : sample_points(8, 0, 20)) {
    const double v = birkhoff_average(f, x, [&](const HopfPoint& p) { return box.contains(p); }, 500);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(StratifiedStarts, RequiresCubeAndFillsStrata) {
  EXPECT_THROW(stratified_starts(10, 1), std::invalid_argument);
  const std::vector<HopfPoint> s = stratified_starts(27, 1);
  ASSERT_EQ(s.size(), 27u);
  std::vector<int> seen(27, 0);
  for (const HopfPoint& p : s) {
    const int a = int(p.theta1 * 3), b = int(p.theta2 * 3), c = int(std::pow(std::sin(p.xi), 2) * 3);
    ++seen[(a * 3 + b) * 3 + c];
  }
  EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
}

TEST(ApproxErgodic, IdentityAndRotationFail) {
  const std::vector<HopfPoint> starts = stratified_starts(8, 2);
  const ErgodicityReport id = check_approx_ergodic(MapExpr::identity(), 16, 0.1, 100, starts);
  EXPECT_FALSE(id.pass);
  // the cell holding a start is hit every time
  EXPECT_GT(id.worst_deviation, 0.99);
  EXPECT_NEAR(id.threshold, 3 * 0.1 / 4096.0, 1e-18);

  const ErgodicityReport rot =
      check_approx_ergodic(MapExpr::rotation(RationalRotation::make(1, 1000)), 16, 0.1, 1000, starts);
  EXPECT_FALSE(rot.pass);
  EXPECT_GT(rot.worst_deviation, 10 * rot.threshold);
  EXPECT_FALSE(rot.scope.empty());
}

TEST(ApproxErgodic, Deterministic) {
  const MapExpr f = MapExpr::compose(MapExpr::rotation(0.31L), MapExpr::twist(4, 0.001L));
  const std::vector<HopfPoint> starts = stratified_starts(8, 5);
  const ErgodicityReport a = check_approx_ergodic(f, 16, 0.1, 200, starts);
  const ErgodicityReport b = check_approx_ergodic(f, 16, 0.1, 200, starts);
  EXPECT_EQ(a.worst_deviation, b.worst_deviation);
  EXPECT_EQ(a.worst_start, b.worst_start);
}

TEST(ApproxMixing, RejectsCoarseQuadrature) {
  const PartialDecomposition d = one_segment(32, 0.3, 0.5, 0.1, 0.1001);
  EXPECT_THROW(check_approx_mixing(MapExpr::identity(), MapExpr::identity(), 16, 32, 0.1, 1, d, 99),
               std::invalid_argument);
}

TEST(ApproxMixing, IdentityMatchesExactIntersection) {
  const double eps = 0.1;
  for (const auto& [c, s2, lo, hi] : {std::tuple{0.3, 0.5, 0.1, 0.9}, std::tuple{0.77, 0.23, 0.2, 0.35},
                                      std::tuple{0.05, 0.81, 0.61, 0.62}}) {
    const PartialDecomposition d = one_segment(32, c, s2, lo, hi);
    const MixingReport rep =
        check_approx_mixing(MapExpr::identity(), MapExpr::identity(), 16, 32, eps, 3, d, 4000);
    const double oracle = oracle_worst_deviation(16, eps, d.segment(0, 0));
    EXPECT_NEAR(rep.worst_deviation, oracle, rep.quadrature_bound) << c << " " << s2;
    ASSERT_EQ(rep.rows.size(), 1u);
    EXPECT_NEAR(rep.threshold, 30 * eps / 4096.0, 1e-18);
  }
}

TEST(ApproxMixing, RefinementStaysWithinQuadratureBound) {
  const PartialDecomposition d = one_segment(32, 0.41, 0.37, 0.05, 0.95);
  const MapExpr F = MapExpr::rotation(0.173L);
  const MixingReport a = check_approx_mixing(F, MapExpr::identity(), 16, 32, 0.1, 5, d, 1000);
  const MixingReport b = check_approx_mixing(F, MapExpr::identity(), 16, 32, 0.1, 5, d, 2000);
  EXPECT_LE(std::abs(a.worst_deviation - b.worst_deviation), 2 * a.quadrature_bound);
}

TEST(WkMix, SegmentInsideCellGivesClosedForm) {
  const Cell b{16, 4, 5, 6};
  // a short piece of the line through the center of b
  const double t1 = 4.5 / 16, t2 = 5.5 / 16, s = 1.0 - 1.0 / 32;
  const double c = t2 + s * t1;
  const PartialDecomposition d = one_segment(32, c, 6.5 / 16, t1 - 0.001, t1 + 0.001);
  const double mu = 1.0 / 4096.0;
  const WkMixReport rep =
      check_wkmix_condition(MapExpr::identity(), MapExpr::identity(), 0, d, {b}, 0.5, 200);
  EXPECT_NEAR(rep.worst_relative, (1.0 - mu) / mu, 1e-9);
  EXPECT_FALSE(rep.pass);

  const WkMixReport other =
      check_wkmix_condition(MapExpr::identity(), MapExpr::identity(), 0, d, {Cell{16, 1, 1, 1}}, 0.5, 200);
  EXPECT_NEAR(other.worst_relative, 1.0, 1e-12);
}

TEST(Correlation, ZeroLagAndDisjointIdentity) {
  std::vector<std::pair<ProductSet, ProductSet>> pairs;
  for (std::uint64_t i = 0; i < 10; ++i) pairs.push_back({random_box(i), random_box(i)});
  ProductSet left, right;
  left.theta1 = {0.0, 0.4};
  left.theta2 = {0.0, 1.0};
  left.xi = {XiInterval::from_sin2(0.0, 1.0)};
  right = left;
  right.theta1 = {0.5, 0.4};
  pairs.push_back({left, right});

  const CorrelationTable t = correlation_table(MapExpr::identity(), pairs, {0, 1}, 100'000, 17);
  ASSERT_EQ(t.rows.size(), 2 * pairs.size());
  for (const CorrelationRow& r : t.rows) {
    const double mu_a = normalized(product_measure(pairs[r.a_id].first));
    if (r.a_id + 1 < pairs.size()) {
      EXPECT_LE(std::abs(r.defect - (mu_a - mu_a * mu_a)), 4 * r.std_error + 1e-12);
    } else {
      EXPECT_EQ(r.joint, 0.0);
      EXPECT_NEAR(r.defect, 0.16, 1e-12);
    }
  }
  EXPECT_THROW(correlation_table(MapExpr::identity(), pairs, {0}, 1, 1), std::invalid_argument);
}
