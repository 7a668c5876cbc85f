// Acceptance runner: `acceptance N` checks criterion N, `acceptance` checks all.
// Prints one "criterion N: PASS|FAIL ..." line per criterion; exit status is the
// number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "abc/abc_driver.hpp"
#include "abc/decompositions.hpp"
#include "abc/hopf_geometry.hpp"
#include "abc/sphere_maps.hpp"
#include "abc/statistics.hpp"
#include "abc/stretching.hpp"

using namespace abc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  double seconds;  // runtime limit
  std::function<Outcome()> run;
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

double coord_gap(const HopfPoint& a, const HopfPoint& b) {
  return std::max({std::abs(wrap_signed(a.theta1 - b.theta1)),
                   std::abs(wrap_signed(a.theta2 - b.theta2)), std::abs(a.xi - b.xi)});
}

// K = 1 where r1^{q(q+1)} r2^{q^2} peaks.
long double peak_A(int q) {
  return std::exp(-log_amplitude(q, std::asin(std::sqrt((q + 1.0) / (2.0 * q + 1.0)))));
}

std::int64_t brute_m_tilde(int q, std::int64_t p, std::int64_t qt) {
  for (std::int64_t m = qt; m <= 2 * qt; ++m) {
    __int128 r = (static_cast<__int128>(q) * m * p) % qt;
    if (r < 0) r += qt;
    const __int128 gap = 2 * r - qt;
    if (gap >= -2 && gap <= 2) return m;
  }
  return -1;
}

// One grid point at rho = 0.5 with the q~ search stopped at q~ = 2001.
BuildResult small_build() {
  BuildConfig cfg;
  cfg.rho = 0.5;
  cfg.grid = GridSpec{1, 1, 0.5, 0.52};
  cfg.q_tilde_max = cfg.q_tilde0;
  return build_stretch_certified_decomposition(cfg);
}

bool segments_certified(const BuildResult& b) {
  return b.conclusion[0] && b.conclusion[1] && b.conclusion[2] && b.eta.segment_count() > 0;
}

ProductSet random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ProductSet s;
  s.theta1 = {u(rng), 0.2 + 0.4 * u(rng)};
  s.theta2 = {u(rng), 0.2 + 0.4 * u(rng)};
  const double len = 0.2 + 0.4 * u(rng);
  const double lo = (1.0 - len) * u(rng);
  s.xi = {XiInterval::from_sin2(lo, lo + len)};
  return s;
}

Outcome measures() {
  const double full = product_measure(ProductSet::full_sphere());
  const double e_full = std::abs(full - 2 * kPi * kPi) / (2 * kPi * kPi);
  const double expect = 2 * kPi * kPi / 4096.0;
  double e_cell = 0.0;
  std::size_t n = 0;
  for (const Cell& b : cells(16)) {
    e_cell = std::max(e_cell, std::abs(b.measure() - expect) / expect);
    ++n;
  }
  return {e_full <= 1e-12 && e_cell <= 1e-12 && n == 14 * 14 * 14,
          "sphere rel err " + fmt(e_full) + ", worst cell rel err " + fmt(e_cell) + " over " +
              std::to_string(n) + " cells"};
}

Outcome jacobians() {
  double analytic = 0.0, fd = 0.0;
  const double h = 1e-6;
  const std::vector<HopfPoint> pts = sample_points(2024, 0, 10'000);
  for (int q : {16, 32})
    // A = 1e6 still leaves K below 1e-70 on S^3, so peak_A (K = 1) is added for
    // the analytic determinant and K = 1e-4 for the finite differences.
    for (long double A : {1.0L, 1e3L, 1e6L, peak_A(q), 1e-4L * peak_A(q)}) {
      const TwistParams t{q, A};
      for (const HopfPoint& p : pts) {
        analytic = std::max(analytic, std::abs(twist_jacobian_det(t, p) - 1.0));
        if (A == peak_A(q)) continue;
        auto d = [&](double dt1, double dt2, int comp) {
          const HopfPoint a = twist(t, HopfPoint{wrap01(p.theta1 + dt1), wrap01(p.theta2 + dt2), p.xi});
          const HopfPoint b = twist(t, HopfPoint{wrap01(p.theta1 - dt1), wrap01(p.theta2 - dt2), p.xi});
          return wrap_signed(comp == 0 ? a.theta1 - b.theta1 : a.theta2 - b.theta2) / (2 * h);
        };
        const double j11 = d(h, 0, 0), j12 = d(0, h, 0), j21 = d(h, 0, 1), j22 = d(0, h, 1);
        fd = std::max(fd, std::abs(j11 * j22 - j12 * j21 - 1.0));
      }
    }
  return {analytic <= 1e-13 && fd <= 1e-6,
          "max |det - 1| analytic " + fmt(analytic) + ", finite difference " + fmt(fd)};
}

Outcome identities() {
  const std::vector<HopfPoint> pts = sample_points(2025, 0, 10'000);
  double inv = 0.0, comm = 0.0, conj = 0.0;
  for (int q : {16, 32}) {
    const RationalRotation r = RationalRotation::make(5, q);
    for (long double A : {1.0L, 1e3L, 1e6L, peak_A(q)}) {
      const TwistParams t{q, A}, tm{q, -A};
      for (const HopfPoint& p : pts) {
        inv = std::max(inv, coord_gap(twist(tm, twist(t, p)), p));
        comm = std::max(comm, coord_gap(twist(t, rotate(r, p)), rotate(r, twist(t, p))));
        for (std::int64_t j : {1, 3, 7})
          conj = std::max(conj, coord_gap(conjugated_rotation(q, A, r, j, p), rotate(r, p, j)));
      }
    }
  }
  return {inv <= 1e-12 && comm <= 1e-12 && conj <= 1e-12,
          "sup gaps: inverse " + fmt(inv) + ", commutation " + fmt(comm) + ", conjugation " +
              fmt(conj)};
}

Outcome excluded_set() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double exact = 0.0, worst_sigma = 0.0;
  bool counts = true;
  for (int q : {16, 25, 36, 64}) {
    for (int k = 0; k < 4; ++k) {
      const ExcludedSet M{q, u(rng)};
      const auto comps = M.complement_components();
      double rest = 0.0;
      for (const auto& c : comps) rest += c.hi - c.lo;
      // 4 q^2 gaps between 4 q^2 intervals, one of them split at 0
      counts = counts && (comps.size() == 4u * q * q || comps.size() == 4u * q * q + 1);
      exact = std::max({exact, std::abs(M.measure() - 2.0 / std::sqrt(q)),
                        std::abs(1.0 - rest - 2.0 / std::sqrt(q))});
    }
    const ExcludedSet M{q, u(rng)};
    constexpr std::size_t n = 1'000'000;
    std::size_t hits = 0;
    for (const HopfPoint& p : sample_points(700 + q, 0, n)) hits += M.contains(p.theta1);
    const double mu = 2.0 / std::sqrt(q);
    const double sigma = std::sqrt(mu * (1 - mu) / n);
    worst_sigma = std::max(worst_sigma, std::abs(double(hits) / n - mu) / sigma);
  }
  return {exact <= 1e-12 && counts && worst_sigma <= 4.0,
          "exact err " + fmt(exact) + ", worst MC deviation " + fmt(worst_sigma) + " sigma"};
}

Outcome m_tilde() {
  std::mt19937_64 rng(5);
  int mismatches = 0, out_of_range = 0, unreachable = 0;
  for (int i = 0; i < 1000; ++i) {
    const int q = std::uniform_int_distribution<int>(16, 128)(rng);
    const std::int64_t qt = std::uniform_int_distribution<std::int64_t>(q + 1, 20'000)(rng);
    std::int64_t p = std::uniform_int_distribution<std::int64_t>(1, qt - 1)(rng);
    while (std::gcd(p, qt) != 1) p = p % (qt - 1) + 1;
    const std::int64_t expect = brute_m_tilde(q, p, qt);
    std::int64_t got = -1;
    try {
      got = select_m_tilde(q, {p, qt});
    } catch (const SelectionError&) {
    }
    if (expect < 0) ++unreachable;
    if (got != expect) ++mismatches;
    if (got >= 0 && (got < qt || got > 2 * qt)) ++out_of_range;
  }
  return {mismatches == 0 && out_of_range == 0,
          "1000 triples, " + std::to_string(mismatches) + " mismatches, " +
              std::to_string(out_of_range) + " outside [q~, 2q~], " + std::to_string(unreachable) +
              " with no admissible m (both agree)"};
}

Outcome fidelity() {
  const BuildResult b = small_build();
  if (!segments_certified(b)) return {false, "small build did not certify segments: " + b.diagnostic};
  double worst = 0.0;
  std::size_t points = 0;
  for (std::size_t gi = 0; gi < b.eta.grid.size(); ++gi) {
    const GridPoint& g = b.eta.grid[gi];
    const StretchParams sp = b.params(g.c, g.xi);
    const StretchProfile pr = stretch_profile(sp);
    for (std::size_t s = 0; s < g.segments.size(); ++s) {
      const Segment seg = b.eta.segment(gi, s);
      for (int i = 0; i < 1000; ++i) {
        const double t = seg.theta1_lo + seg.length() * (i + 0.5) / 1000.0;
        const HopfPoint y = conjugated_rotation(sp.q, sp.A, sp.omega_tilde, sp.m_tilde, seg.point_at(t));
        const auto [f1, f2] = profile_eval(pr, t);
        worst = std::max({worst, std::abs(wrap_signed(f1 - y.theta1)), std::abs(wrap_signed(f2 - y.theta2))});
        ++points;
      }
    }
  }
  return {worst <= 1e-9, "q~ = " + std::to_string(b.omega_tilde.q) + ", " +
                             std::to_string(b.eta.segment_count()) + " segments, " +
                             std::to_string(points) + " points, worst gap " + fmt(worst)};
}

Outcome stretching_full() {
  BuildConfig cfg;  // q = 16, rho = 0.05, 32 x 32 grid
  const BuildResult b = build_stretch_certified_decomposition(cfg);
  if (!b.certified())
    return {false, "builder stopped: " + b.diagnostic + "; no certified decomposition on the 32x32 grid"};
  std::size_t bad = 0;
  for (std::size_t gi = 0; gi < b.eta.grid.size(); ++gi) {
    const GridPoint& g = b.eta.grid[gi];
    const StretchProfile pr = stretch_profile(b.params(g.c, g.xi));
    for (std::size_t s = 0; s < g.segments.size(); ++s) {
      const Interval iv = g.segments[s];
      const StretchReport r = check_uniform_stretch(f2_function(pr), iv, cfg.rho, 1.0, 100, s);
      const bool ok = r.criterion_pass && r.direct_pass &&
                      std::abs(std::abs(pr.f2(iv.hi) - pr.f2(iv.lo)) - 1.0) <= 1e-9 &&
                      iv.length() <= 1.0 / 4096.0;
      bad += !ok;
    }
  }
  const ValidationReport v = validate_partial_decomposition(b.eta);
  return {bad == 0 && v.pass, std::to_string(b.eta.segment_count()) + " segments, " +
                                  std::to_string(bad) + " failing, coverage " +
                                  (v.pass ? "ok" : "short")};
}

Outcome proximity() {
  // Reduced band at the full rho; the 32x32 build does not finish within budget.
  BuildConfig cfg;
  cfg.grid = GridSpec{1, 2, 0.48, 0.55};
  cfg.q_tilde_max = cfg.q_tilde0;
  const BuildResult b = build_stretch_certified_decomposition(cfg);
  if (!segments_certified(b)) return {false, "reduced build did not certify segments: " + b.diagnostic};
  double worst = 0.0, bound = 0.0;
  std::size_t failing = 0;
  for (std::size_t gi = 0; gi < b.eta.grid.size(); ++gi) {
    const GridPoint& g = b.eta.grid[gi];
    for (std::size_t s = 0; s < g.segments.size(); ++s) {
      const DiagonalProximity dp = diagonal_proximity(b.params(g.c, g.xi), b.eta.segment(gi, s));
      worst = std::max(worst, dp.sup_defect);
      bound = dp.bound;
      failing += !(dp.sup_defect < dp.bound);
    }
  }
  return {failing == 0, "reduced grid (1 x 2, rho 0.05): " + std::to_string(b.eta.segment_count()) +
                            " segments, worst " + fmt(worst) + " vs " + fmt(bound)};
}

Outcome partition() {
  const BuildResult b = small_build();
  if (!segments_certified(b)) return {false, "small build did not certify segments: " + b.diagnostic};
  std::size_t bad = 0, checked = 0;
  double worst_sum = 0.0;
  for (const RationalRotation& ap : {RationalRotation{3, 16}, RationalRotation{5, 32}}) {
    for (std::size_t gi = 0; gi < b.eta.grid.size(); ++gi) {
      const GridPoint& g = b.eta.grid[gi];
      const StretchParams sp = b.params(g.c, g.xi);
      for (std::size_t s = 0; s < g.segments.size(); ++s) {
        const Segment seg = b.eta.segment(gi, s);
        const PartitionJ pj = build_partition_J(seg, sp, ap);
        bool ok = pj.cells.size() == static_cast<std::size_t>(ap.q) &&
                  static_cast<double>(pj.cells.size()) * pj.cell_length() == 1.0 &&
                  pj.cell_length() == 1.0 / static_cast<double>(ap.q);
        std::vector<Interval> pieces;
        for (const PartitionCell& c : pj.cells) pieces.insert(pieces.end(), c.preimage.begin(), c.preimage.end());
        std::sort(pieces.begin(), pieces.end(), [](const Interval& x, const Interval& y) { return x.lo < y.lo; });
        double total = 0.0;
        for (std::size_t i = 0; i < pieces.size(); ++i) {
          total += pieces[i].length();
          if (i > 0 && pieces[i].lo < pieces[i - 1].hi) ok = false;
        }
        worst_sum = std::max(worst_sum, std::abs(total - seg.length()));
        ok = ok && std::abs(total - seg.length()) <= 1e-10;
        bad += !ok;
        ++checked;
      }
    }
  }
  return {bad == 0, std::to_string(checked) + " partitions for q' in {16, 32}, " +
                        std::to_string(bad) + " bad, worst preimage sum error " + fmt(worst_sum)};
}

Outcome birkhoff() {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t cases = 0, wrong = 0;
  for (const auto& [p, q] : std::vector<std::pair<std::int64_t, std::int64_t>>{
           {3, 16}, {7, 40}, {5, 1024}, {977, 4096}, {12345, 65536}}) {
    const MapExpr f = MapExpr::rotation(RationalRotation::make(p, q));
    const double c = u(rng);
    // the orbit of theta1 = 1/(2q) is {(j + 1/2)/q}
    const HopfPoint x{0.5 / q, wrap01(0.5 / q + c), 0.3 + u(rng)};
    for (int k = 0; k < 10; ++k) {
      const double a = 0.8 * u(rng), s = 0.2 * u(rng) + 0.001;
      const double lo = a * q - 0.5, hi = (a + s) * q - 0.5;
      // keep the interval ends away from orbit points
      if (lo - std::floor(lo) < 1e-6 || std::ceil(lo) - lo < 1e-6 || hi - std::floor(hi) < 1e-6 ||
          std::ceil(hi) - hi < 1e-6) {
        --k;
        continue;
      }
      const std::int64_t count = static_cast<std::int64_t>(std::ceil(hi) - std::ceil(lo));
      const double expect = static_cast<double>(count) / static_cast<double>(q);
      const auto pred = [&](const HopfPoint& y) { return y.theta1 >= a && y.theta1 < a + s; };
      wrong += birkhoff_average(f, x, pred, q) != expect;
      ++cases;
    }
  }
  return {wrong == 0, std::to_string(cases) + " orbit averages, " + std::to_string(wrong) + " inexact"};
}

Outcome correlation() {
  std::mt19937_64 rng(11);
  std::vector<std::pair<ProductSet, ProductSet>> pairs;
  for (int i = 0; i < 50; ++i) {
    const ProductSet s = random_box(rng);
    pairs.push_back({s, s});
  }
  const CorrelationTable t = correlation_table(MapExpr::identity(), pairs, {0}, 100'000, 12);
  int outside = 0;
  double worst = 0.0;
  for (const CorrelationRow& r : t.rows) {
    const double mu = normalized(product_measure(pairs[r.a_id].first));
    const double z = std::abs(r.defect - (mu - mu * mu)) / r.std_error;
    worst = std::max(worst, z);
    outside += z > 4.0;
  }
  return {outside == 0 && t.rows.size() == 50,
          "50 sets, worst deviation " + fmt(worst) + " stderr, " + std::to_string(outside) + " beyond 4"};
}

ScheduleConfig small_schedule(int stages, const ConjugacyProvider& provider) {
  ScheduleConfig c = parse_schedule_config(R"({
    "alpha": "3/16", "eps_bar": 0.4, "L": [0],
    "grid": {"nc": 1, "nxi": 1, "s2_lo": 0.5, "s2_hi": 0.52},
    "samples": {"distance": 1024, "ergodicity_starts": 8, "mixing_line": 100, "defect": 20000},
    "budgets": {"q_tilde_max": 2001}
  })");
  c.n_stages = stages;
  c.provider = provider;
  return c;
}

Outcome schedule() {
  const ScheduleConfig one = small_schedule(1, ConjugacyProvider::identity());
  const ScheduleResult r1 = run_schedule(one);
  const double eps0 = one.stage.gamma * one.eps_bar / 4;
  bool complete = r1.ledger.size() == 1;
  for (const StageLedgerRow& r : r1.ledger)
    complete = complete && r.q_prime > 0 && r.m > 0 && r.eps > 0 && r.convergence && !r.provider.empty();
  const auto path = std::filesystem::temp_directory_path() / "abc_acceptance_ledger.csv";
  write_ledger_csv(r1.ledger, path.string());
  std::ifstream in(path);
  const auto lines = std::count(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>(), '\n');
  std::filesystem::remove(path);
  complete = complete && lines == 2;

  double dist = std::numeric_limits<double>::infinity();
  bool q_grows = false;
  if (!r1.ledger.empty()) {
    const StageLedgerRow& r = r1.ledger[0];
    if (r.convergence) dist = r.convergence->value;
    q_grows = static_cast<double>(r.q_prime) > r.q + r.L;
  }
  // and for a long step
  const auto far = ConjugacyProvider::identity().provide({3, 16}, 1000.0);
  q_grows = q_grows && far.alpha_prime.q > 16 + 1000;
  const bool dist_ok = dist < eps0;
  const bool premise_code = r1.exit_code == 2;

  const ScheduleResult r2 = run_schedule(small_schedule(2, ConjugacyProvider::identity()));
  bool m_increasing = r2.ledger.size() == 2;
  std::int64_t prev = 1;
  for (const StageLedgerRow& r : r2.ledger) {
    m_increasing = m_increasing && r.m > prev;
    prev = r.m;
  }
  std::string two = std::to_string(r2.ledger.size()) + " of 2 stages ran";
  if (!r2.ledger.empty()) two += " (stage 0: " + std::string(to_string(r2.ledger[0].status)) + ")";

  return {complete && dist_ok && q_grows && m_increasing && premise_code,
          std::string("ledger ") + (complete ? "complete" : "incomplete") + "; |F1 - F0| " +
              fmt(dist) + " vs eps0 " + fmt(eps0) + (dist_ok ? " ok" : " FAIL") + "; q' > q + L " +
              (q_grows ? "ok" : "FAIL") + "; m increasing " + (m_increasing ? "ok" : "FAIL") +
              ", " + two + "; identity provider exit " + std::to_string(r1.exit_code)};
}

Outcome conditional_mixing() {
  std::vector<ConjugacyProvider> providers = {
      ConjugacyProvider::identity(),
      ConjugacyProvider::from_catalog(MapExpr::mix(0.1L), "mix(0.1)"),
      ConjugacyProvider::from_catalog(MapExpr::compose(MapExpr::mix(0.23L), MapExpr::twist(16, 1.0L)),
                                      "mix(0.23).twist")};
  std::string detail;
  bool ok = true;
  int premises = 0;
  for (const ConjugacyProvider& p : providers) {
    const ScheduleResult r = run_schedule(small_schedule(1, p));
    if (r.ledger.empty()) continue;
    const StageLedgerRow& row = r.ledger[0];
    detail += p.name + ": premise " + (row.premise_pass ? "pass" : "fail") + " (" +
              fmt(row.premise_deviation) + " vs " + fmt(row.premise_threshold) + "), mixing " +
              fmt(row.mixing_ii_deviation) + " vs " + fmt(row.mixing_ii_threshold) + "; ";
    if (row.premise_pass) {
      ++premises;
      ok = ok && row.mixing_ii_deviation <= row.mixing_ii_threshold && row.mixing_ii_pass;
    }
  }
  detail += premises == 0 ? "no premise passed, nothing asserted" : std::to_string(premises) + " asserted";
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, 1.0, measures},       {2, 5.0, jacobians},        {3, 5.0, identities},
      {4, 10.0, excluded_set},  {5, 10.0, m_tilde},         {6, 30.0, fidelity},
      {7, 300.0, stretching_full}, {8, 300.0, proximity},   {9, 60.0, partition},
      {10, 1.0, birkhoff},      {11, 60.0, correlation},    {12, 600.0, schedule},
      {13, 600.0, conditional_mixing}};
  const int only = argc > 1 ? std::atoi(argv[1]) : 0;
  int failures = 0;
  for (const Criterion& c : all) {
    if (only != 0 && c.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = dt < c.seconds;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("criterion %d: %s  %s; %.2f s (limit %.0f s)%s\n", c.id, pass ? "PASS" : "FAIL",
                o.detail.c_str(), dt, c.seconds, in_time ? "" : " over time");
    std::fflush(stdout);
  }
  return failures;
}
