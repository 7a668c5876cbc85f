#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "abc/hopf_geometry.hpp"
#include "abc/sphere_maps.hpp"
#include "abc/stretching.hpp"

using namespace abc;

namespace {

long double peak_A(int q) {
  return std::exp(-log_amplitude(q, std::asin(std::sqrt((q + 1.0) / (2.0 * q + 1.0)))));
}

void BM_TwistEval(benchmark::State& state) {
  const int q = static_cast<int>(state.range(0));
  const TwistParams t{q, peak_A(q)};
  const std::vector<HopfPoint> pts = sample_points(1, 0, 4096);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(twist(t, pts[i++ & 4095]));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_TwistEval)->Arg(16)->Arg(64);

void BM_ConjugatedPower(benchmark::State& state) {
  const int q = 16;
  const RationalRotation w{376, 2001};
  const std::vector<HopfPoint> pts = sample_points(2, 0, 4096);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(conjugated_rotation(q, peak_A(q), w, state.range(0), pts[i++ & 4095]));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ConjugatedPower)->Arg(1)->Arg(2078);

void BM_ExprTreeEval(benchmark::State& state) {
  const MapExpr g = MapExpr::compose(MapExpr::mix(0.1L), MapExpr::twist(16, 1.0L));
  const MapExpr F = MapExpr::conjugate(g, MapExpr::rotation({5, 32}));
  const std::vector<HopfPoint> pts = sample_points(3, 0, 4096);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(F.eval_power(pts[i++ & 4095], 7));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ExprTreeEval);

void BM_McMeasure(benchmark::State& state) {
  ProductSet s;
  s.theta1 = {0.1, 0.3};
  s.theta2 = {0.5, 0.4};
  s.xi = {XiInterval::from_sin2(0.2, 0.7)};
  const auto n = static_cast<std::uint64_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(mc_measure([&](const HopfPoint& p) { return s.contains(p); }, n, 9));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_McMeasure)->Arg(1 << 16)->Arg(1 << 20)->Unit(benchmark::kMillisecond);

void BM_SampledDistance(benchmark::State& state) {
  const MapExpr f = MapExpr::conjugate(MapExpr::twist(16, 1.0L), MapExpr::rotation({3, 16}));
  const MapExpr g = MapExpr::rotation({3, 16});
  for (auto _ : state) {
    benchmark::DoNotOptimize(sampled_distance(f, g, 1.25, static_cast<std::uint64_t>(state.range(0)), 5));
  }
}
BENCHMARK(BM_SampledDistance)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);

// Builder on one grid point with the q~ search cut at the first approximant.
void BM_BuilderSmallGrid(benchmark::State& state) {
  BuildConfig cfg;
  cfg.rho = 0.5;
  cfg.grid = GridSpec{1, 1, 0.5, 0.52};
  cfg.q_tilde_max = cfg.q_tilde0;
  cfg.direct_stride = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_stretch_certified_decomposition(cfg));
  }
}
BENCHMARK(BM_BuilderSmallGrid)->Arg(1)->Arg(16)->Unit(benchmark::kSecond)->Iterations(1);

}  // namespace

// The packaged libbenchmark_main.a carries LTO bytecode from another gcc; link
// the shared library and supply main here.
BENCHMARK_MAIN();
