#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "abc/decompositions.hpp"
#include "abc/sphere_maps.hpp"
#include "abc/stretching.hpp"

using namespace abc;

namespace {

// dist(q m p~ / q~, 1/2 mod 1) <= 1/q~, scanned directly.
std::int64_t brute_m_tilde(int q, std::int64_t p, std::int64_t qt) {
  for (std::int64_t m = qt; m <= 2 * qt; ++m) {
    __int128 r = (static_cast<__int128>(q) * m * p) % qt;
    if (r < 0) r += qt;
    const __int128 gap = 2 * r - qt;  // 2 q~ (r/q~ - 1/2)
    if (gap >= -2 && gap <= 2) return m;
  }
  return -1;
}

// One grid point at rho = 0.5; the q~ search stops at the first approximant
// so only conclusions i) to iii) are certified, which is all these tests use.
const BuildResult& small_build() {
  static const BuildResult r = [] {
    BuildConfig cfg;
    cfg.rho = 0.5;
    cfg.grid = GridSpec{1, 1, 0.5, 0.52};
    cfg.q_tilde_max = cfg.q_tilde0;
    return build_stretch_certified_decomposition(cfg);
  }();
  return r;
}

}  // namespace

TEST(SelectMTilde, MatchesBruteForce) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::int64_t> qd(1000, 10000);
  int done = 0;
  while (done < 50) {
    const std::int64_t qt = qd(rng);
    if (qt % 16 == 0) continue;
    const std::int64_t p = std::uniform_int_distribution<std::int64_t>(1, qt - 1)(rng);
    if (std::gcd(p, qt) != 1) continue;
    const std::int64_t expect = brute_m_tilde(16, p, qt);
    if (expect < 0) {
      // gcd(16, q~) > 2 can leave 1/2 out of reach even though 16 does not divide q~.
      EXPECT_THROW(select_m_tilde(16, {p, qt}), SelectionError) << p << '/' << qt;
      continue;
    }
    const std::int64_t m = select_m_tilde(16, {p, qt});
    EXPECT_EQ(m, expect) << p << '/' << qt;
    EXPECT_GE(m, qt);
    EXPECT_LE(m, 2 * qt);
    ++done;
  }
}

TEST(SelectMTilde, UnreachableResidueThrows) {
  // q~ = 16 * 63: q m p~ mod q~ is a multiple of 16 and 2r - q~ = 16 (2i - 63) never
  // gets within 2 of zero.
  EXPECT_EQ(brute_m_tilde(16, 5, 1008), -1);
  EXPECT_THROW(select_m_tilde(16, {5, 1008}), SelectionError);
}

TEST(StretchProfile, ZeroAmplitudeIsLinear) {
  const RationalRotation w{376, 2001};
  const StretchParams sp{16, 0.3, 0.8, 0.0L, w, select_m_tilde(16, w)};
  const StretchProfile pr = stretch_profile(sp);
  const double shift = static_cast<double>(w.multiple(sp.m_tilde));
  for (double t : {0.0, 0.123, 0.77}) {
    EXPECT_NEAR(pr.f1(t), t + shift, 1e-15);
    EXPECT_NEAR(pr.f2(t), (1.0 / 16 - 1.0) * t + 0.3 + shift, 1e-15);
  }
  const Segment I{16, 0.3, 0.8, 0.4, 0.4 + 1.0 / 4096};
  const DiagonalProximity dp = diagonal_proximity(sp, I);
  EXPECT_LE(dp.sup_defect, 2.0 / 4096);
  EXPECT_TRUE(dp.pass);
}

TEST(StretchProfile, DerivativesAndBounds) {
  const BuildResult& b = small_build();
  const StretchParams sp = b.params(0.0, b.eta.grid[0].xi);
  const StretchProfile pr = stretch_profile(sp);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double sig = 0.0;
  for (int i = 0; i < 10000; ++i) sig = std::max(sig, std::abs(pr.sigma(u(rng))));
  EXPECT_LE(sig, 2.0);

  // Central differences on a 1e-9 step relative to the q^2-scale oscillation.
  const double h = 1e-9;
  double e1 = 0.0, e2 = 0.0, scale1 = 0.0, scale2 = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double t = u(rng);
    e1 = std::max(e1, std::abs((pr.f2(t + h) - pr.f2(t - h)) / (2 * h) - pr.f2_prime(t)));
    e2 = std::max(e2, std::abs((pr.f2_prime(t + h) - pr.f2_prime(t - h)) / (2 * h) - pr.f2_second(t)));
    scale1 = std::max(scale1, std::abs(pr.f2_prime(t)));
    scale2 = std::max(scale2, std::abs(pr.f2_second(t)));
  }
  EXPECT_LE(e1, 1e-5 * scale1);
  EXPECT_LE(e2, 1e-5 * scale2);

  for (int k = 0; k < 200; ++k) {
    const double lo = u(rng), hi = lo + 1e-4 * u(rng);
    const auto bd = pr.f2_bounds(lo, hi);
    double mn = INFINITY, mx = -INFINITY, spp = 0.0;
    for (int i = 0; i <= 2000; ++i) {
      const double t = lo + (hi - lo) * i / 2000.0;
      mn = std::min(mn, pr.f2_prime(t));
      mx = std::max(mx, pr.f2_prime(t));
      spp = std::max(spp, std::abs(pr.f2_second(t)));
    }
    const double tol = 1e-9 * std::max(1.0, bd.fp_sup_abs());
    EXPECT_LE(bd.fp_min, mn + tol);
    EXPECT_GE(bd.fp_max, mx - tol);
    EXPECT_GE(bd.fpp_sup * (1 + 1e-9), spp);
    // Tight: dense sampling gets within a small fraction of the exact range.
    EXPECT_LE(mn - bd.fp_min, 1e-3 * (bd.fp_max - bd.fp_min) + tol);
    EXPECT_LE(bd.fp_max - mx, 1e-3 * (bd.fp_max - bd.fp_min) + tol);
  }
}

TEST(StretchProfile, InvertF2OnSegments) {
  const BuildResult& b = small_build();
  const StretchProfile pr = stretch_profile(b.params(b.eta.grid[0].c, b.eta.grid[0].xi));
  double worst = 0.0;
  for (std::size_t s = 0; s < b.eta.grid[0].segments.size(); s += 37) {
    const Interval iv = b.eta.grid[0].segments[s];
    for (double f : {0.1, 0.5, 0.9}) {
      const double t = iv.lo + f * iv.length();
      worst = std::max(worst, std::abs(pr.invert_f2(pr.f2(t), iv.lo, iv.hi) - t));
    }
  }
  EXPECT_LE(worst, 1e-13);
}

TEST(StretchProfile, MatchesConjugatedRotation) {
  const BuildResult& b = small_build();
  const GridPoint& g = b.eta.grid[0];
  const StretchParams sp = b.params(g.c, g.xi);
  const StretchProfile pr = stretch_profile(sp);
  double worst = 0.0;
  for (std::size_t s = 0; s < g.segments.size(); s += 61) {
    const Segment seg = b.eta.segment(0, s);
    for (int i = 0; i < 100; ++i) {
      const double t = seg.theta1_lo + seg.length() * (i + 0.5) / 100.0;
      const HopfPoint x = seg.point_at(t);
      const HopfPoint y = conjugated_rotation(sp.q, sp.A, sp.omega_tilde, sp.m_tilde, x);
      const auto [f1, f2] = profile_eval(pr, t);
      worst = std::max({worst, std::abs(wrap_signed(f1 - y.theta1)), std::abs(wrap_signed(f2 - y.theta2))});
    }
  }
  EXPECT_LE(worst, 1e-9);
}

TEST(UniformStretch, LinearFunctionIsExact) {
  ScalarFunction f;
  f.f = [](double t) { return 3.0 * t + 1.0; };
  f.df = [](double) { return 3.0; };
  f.d2f = [](double) { return 0.0; };
  const StretchReport r = check_uniform_stretch(f, {0.2, 0.7}, 0.01, 1.0, 100, 4);
  EXPECT_EQ(r.ratio, 0.0);
  EXPECT_NEAR(r.image_length, 1.5, 1e-15);
  EXPECT_LE(r.direct_worst, 1e-9);
  EXPECT_TRUE(r.pass());
}

TEST(UniformStretch, SineOverHalfTurnIsNotMonotone) {
  ScalarFunction f;
  f.f = [](double t) { return std::sin(t); };
  f.df = [](double t) { return std::cos(t); };
  f.d2f = [](double t) { return -std::sin(t); };
  EXPECT_THROW(check_uniform_stretch(f, {0.0, kPi}, 0.1, 0.1, 10), MonotonicityError);
}

TEST(Builder, CertifiedSegmentsHoldEveryInequality) {
  const BuildResult& b = small_build();
  ASSERT_TRUE(b.conclusion[0] && b.conclusion[1] && b.conclusion[2]);
  EXPECT_GE(b.omega_tilde.q, 2001);
  EXPECT_NE(b.omega_tilde.q % 16, 0);
  EXPECT_EQ(b.m_tilde, select_m_tilde(16, b.omega_tilde));
  const ValidationReport v = validate_partial_decomposition(b.eta);
  EXPECT_TRUE(v.pass);
  const int q = b.eta.q;
  for (std::size_t gi = 0; gi < b.eta.grid.size(); ++gi) {
    const GridPoint& g = b.eta.grid[gi];
    const StretchProfile pr = stretch_profile(b.params(g.c, g.xi));
    const ExcludedSet M{q, g.c};
    for (std::size_t s = 0; s < g.segments.size(); ++s) {
      const Interval iv = g.segments[s];
      ASSERT_NEAR(std::abs(pr.f2(iv.hi) - pr.f2(iv.lo)), 1.0, 1e-9);
      ASSERT_LE(iv.length(), 1.0 / (q * q * q));
      // Endpoints may sit on the boundary of the closed set M.
      for (int i = 1; i < 16; ++i) ASSERT_FALSE(M.contains(iv.lo + iv.length() * i / 16.0));
      if (s % 16 == 0) {
        const StretchReport r = check_uniform_stretch(f2_function(pr), iv, 0.5, 1.0, 100, s);
        ASSERT_TRUE(r.pass()) << s;
      }
      const DiagonalProximity dp = diagonal_proximity(b.params(g.c, g.xi), b.eta.segment(gi, s));
      ASSERT_TRUE(dp.pass) << dp.sup_defect;
    }
  }
}

TEST(Partition, TilesTheImage) {
  const BuildResult& b = small_build();
  const GridPoint& g = b.eta.grid[0];
  const StretchParams sp = b.params(g.c, g.xi);
  const RationalRotation ap{3, 16};
  for (std::size_t s = 0; s < g.segments.size(); s += 503) {
    const Segment seg = b.eta.segment(0, s);
    const PartitionJ pj = build_partition_J(seg, sp, ap);
    ASSERT_EQ(pj.cells.size(), 16u);
    EXPECT_EQ(pj.cells.size() * pj.cell_length(), 1.0);
    std::vector<Interval> pieces;
    for (const PartitionCell& c : pj.cells) {
      const double center = wrap01(c.theta2_lo + 0.5 * pj.cell_length());
      const double expect = wrap01(pj.z0_theta1 + static_cast<double>(ap.multiple(c.k)) + pj.c_tilde);
      EXPECT_LE(std::abs(wrap_signed(center - expect)), 1e-12);
      pieces.insert(pieces.end(), c.preimage.begin(), c.preimage.end());
    }
    std::sort(pieces.begin(), pieces.end(), [](const Interval& a, const Interval& c) { return a.lo < c.lo; });
    double total = 0.0;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      total += pieces[i].length();
      if (i > 0) EXPECT_GE(pieces[i].lo, pieces[i - 1].hi - 1e-15);
    }
    EXPECT_NEAR(total, seg.length(), 1e-10);
  }
  const Segment whole{16, g.c, g.xi, 0.0, 1.0};
  EXPECT_THROW(build_partition_J(whole, sp, ap), MonotonicityError);
}

TEST(Partition, ClassificationBookkeeping) {
  const BuildResult& b = small_build();
  const GridPoint& g = b.eta.grid[0];
  const PartitionJ pj = build_partition_J(b.eta.segment(0, 100), b.params(g.c, g.xi), {3, 16});
  // sin^2 of the grid point is about 0.51, far from the cell's [1/16, 2/16).
  const JClassification far = classify_J(pj, MapExpr::identity(), Cell{16, 5, 5, 1}, 0.1, MarginSign::Plus);
  EXPECT_TRUE(far.inside.empty());
  EXPECT_NEAR(far.weight_outside, 1.0, 1e-12);
  for (const Cell& c : {Cell{16, 4, 6, 8}, Cell{16, 9, 2, 8}})
    for (MarginSign s : {MarginSign::Plus, MarginSign::Minus}) {
      const JClassification j = classify_J(pj, MapExpr::mix(0.1L), c, 0.1, s);
      EXPECT_NEAR(j.weight_inside + j.weight_outside + j.weight_boundary, 1.0, 1e-12);
      EXPECT_EQ(j.inside.size() + j.outside.size() + j.boundary.size(), 16u);
    }
}
