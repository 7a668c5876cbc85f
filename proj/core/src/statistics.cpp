#include "abc/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "abc/parallel.hpp"

namespace abc {

namespace {

std::size_t cell_index(const Cell& b) {
  const std::size_t n = static_cast<std::size_t>(b.q - 2);
  return (static_cast<std::size_t>(b.k - 1) * n + static_cast<std::size_t>(b.l - 1)) * n +
         static_cast<std::size_t>(b.m - 1);
}

// Orbit points with multiplicities: for period P only one period is evaluated.
struct WeightedOrbit {
  std::vector<HopfPoint> points;
  std::vector<std::int64_t> weight;
};

WeightedOrbit orbit(const MapExpr& f, const HopfPoint& x, std::int64_t n) {
  WeightedOrbit o;
  const std::int64_t P = f.exact_period();
  if (P > 0 && P < n) {
    const std::int64_t full = n / P, rest = n % P;
    for (std::int64_t k = 0; k < P; ++k) {
      o.points.push_back(f.eval_power(x, k));
      o.weight.push_back(full + (k < rest ? 1 : 0));
    }
  } else if (P > 0) {
    for (std::int64_t k = 0; k < n; ++k) {
      o.points.push_back(f.eval_power(x, k));
      o.weight.push_back(1);
    }
  } else {
    HopfPoint z = x;
    for (std::int64_t k = 0; k < n; ++k) {
      o.points.push_back(z);
      o.weight.push_back(1);
      z = f.eval(z);
    }
  }
  return o;
}

std::vector<double> margin_measures(int q, double eps, MarginSign sign) {
  std::vector<double> out;
  for (const Cell& b : cells(q)) out.push_back(normalized(margin_cell(b, eps, sign).measure()));
  return out;
}

HopfPoint quadrature_point(const PartialDecomposition& d, std::size_t gi, std::size_t si, int j,
                           int n_line) {
  const Segment s = d.segment(gi, si);
  return s.point_at(s.theta1_lo + (j + 0.5) / n_line * s.length());
}

}  // namespace

double birkhoff_average(const MapExpr& f, const HopfPoint& x, const HopfPredicate& pred,
                        std::int64_t n) {
  if (n < 1) throw std::invalid_argument("birkhoff_average: n must be positive");
  const WeightedOrbit o = orbit(f, x, n);
  std::int64_t hits = 0;
  for (std::size_t i = 0; i < o.points.size(); ++i)
    if (pred(o.points[i])) hits += o.weight[i];
  return static_cast<double>(hits) / static_cast<double>(n);
}

std::vector<HopfPoint> stratified_starts(int count, std::uint64_t seed) {
  const int side = static_cast<int>(std::lround(std::cbrt(static_cast<double>(count))));
  if (side < 1 || side * side * side != count)
    throw std::invalid_argument("stratified_starts: count must be a perfect cube");
  auto rng = chunk_rng(seed, 3, 0);
  std::vector<HopfPoint> out;
  for (int a = 0; a < side; ++a)
    for (int b = 0; b < side; ++b)
      for (int c = 0; c < side; ++c) {
        const double t1 = (a + uniform01(rng)) / side;
        const double t2 = (b + uniform01(rng)) / side;
        const double s2 = (c + uniform01(rng)) / side;
        out.push_back({t1, t2, std::asin(std::sqrt(s2))});
      }
  return out;
}

ErgodicityReport check_approx_ergodic(const MapExpr& f, int q, double eps, std::int64_t N,
                                      const std::vector<HopfPoint>& starts) {
  if (starts.empty()) throw std::invalid_argument("check_approx_ergodic: no start points");
  if (N < 1) throw std::invalid_argument("check_approx_ergodic: N must be positive");
  const std::vector<Cell> all = cells(q);
  const MarginSign signs[2] = {MarginSign::Plus, MarginSign::Minus};
  const std::vector<double> mu[2] = {margin_measures(q, eps, signs[0]),
                                     margin_measures(q, eps, signs[1])};
  const double mu_b = 1.0 / (static_cast<double>(q) * q * q);

  struct Local {
    double dev = -1.0;
    std::size_t cell = 0;
    int sign = 0;
  };
  std::vector<Local> local(starts.size());
  parallel_for(starts.size(), [&](std::size_t s) {
    const WeightedOrbit o = orbit(f, starts[s], N);
    std::vector<std::int64_t> hits[2] = {std::vector<std::int64_t>(all.size(), 0),
                                         std::vector<std::int64_t>(all.size(), 0)};
    for (std::size_t i = 0; i < o.points.size(); ++i)
      for (int g = 0; g < 2; ++g)
        for_each_margin_cell_containing(q, eps, signs[g], o.points[i],
                                        [&](const Cell& b) { hits[g][cell_index(b)] += o.weight[i]; });
    Local best;
    for (int g = 0; g < 2; ++g)
      for (std::size_t c = 0; c < all.size(); ++c) {
        const double dev = std::abs(static_cast<double>(hits[g][c]) / N - mu[g][c]);
        if (dev > best.dev) best = {dev, c, g};
      }
    local[s] = best;
  });

  ErgodicityReport rep;
  rep.q = q;
  rep.eps = eps;
  rep.N = N;
  rep.starts = starts.size();
  rep.threshold = 3.0 * eps * mu_b;
  rep.worst_deviation = -1.0;
  for (std::size_t s = 0; s < local.size(); ++s)
    if (local[s].dev > rep.worst_deviation) {
      rep.worst_deviation = local[s].dev;
      rep.worst_cell = all[local[s].cell];
      rep.worst_sign = signs[local[s].sign];
      rep.worst_start = s;
    }
  rep.pass = rep.worst_deviation < rep.threshold;
  std::ostringstream scope;
  scope << "horizon n = " << N << " only; " << starts.size() << " sampled start points; "
        << all.size() << " cells x 2 margin signs";
  rep.scope = scope.str();
  return rep;
}

MixingReport check_approx_mixing(const MapExpr& F, const MapExpr& H, int q, int qp, double eps,
                                 std::int64_t m, const PartialDecomposition& d, int n_line) {
  if (n_line < 100) throw std::invalid_argument("check_approx_mixing: n_line must be at least 100");
  const std::vector<Cell> all = cells(q);
  const MarginSign signs[2] = {MarginSign::Plus, MarginSign::Minus};
  const std::vector<double> mu[2] = {margin_measures(q, eps, signs[0]),
                                     margin_measures(q, eps, signs[1])};
  const double mu_b = 1.0 / (static_cast<double>(q) * q * q);

  std::vector<std::pair<std::size_t, std::size_t>> work;
  for (std::size_t gi = 0; gi < d.grid.size(); ++gi)
    for (std::size_t si = 0; si < d.grid[gi].segments.size(); ++si) work.emplace_back(gi, si);

  MixingReport rep;
  rep.q = q;
  rep.qp = qp;
  rep.eps = eps;
  rep.m = m;
  rep.n_line = n_line;
  rep.segments = work.size();
  rep.threshold = 30.0 * eps * mu_b;
  rep.rows.resize(work.size());
  std::vector<std::size_t> failing(work.size(), 0);
  std::vector<int> changes_max(work.size(), 0);

  parallel_for(work.size(), [&](std::size_t w) {
    const auto [gi, si] = work[w];
    std::vector<int> hits[2] = {std::vector<int>(all.size(), 0), std::vector<int>(all.size(), 0)};
    std::vector<int> last[2] = {std::vector<int>(all.size(), -2), std::vector<int>(all.size(), -2)};
    std::vector<int> changes[2] = {std::vector<int>(all.size(), 0), std::vector<int>(all.size(), 0)};
    for (int j = 0; j < n_line; ++j) {
      const HopfPoint y = F.eval_power(H.eval_inverse(quadrature_point(d, gi, si, j, n_line)), m);
      for (int g = 0; g < 2; ++g)
        for_each_margin_cell_containing(q, eps, signs[g], y, [&](const Cell& b) {
          const std::size_t c = cell_index(b);
          ++hits[g][c];
          // a run that does not continue from j - 1 starts a new crossing pair
          if (last[g][c] != j - 1) changes[g][c] += 2;
          last[g][c] = j;
        });
    }
    MixingSegmentRow row;
    row.grid_index = gi;
    row.segment_index = si;
    row.worst_deviation = -1.0;
    int cmax = 0;
    for (int g = 0; g < 2; ++g)
      for (std::size_t c = 0; c < all.size(); ++c) {
        const double ratio = static_cast<double>(hits[g][c]) / n_line;
        const double dev = std::abs(ratio - mu[g][c]);
        if (dev > rep.threshold) ++failing[w];
        cmax = std::max(cmax, changes[g][c]);
        if (dev > row.worst_deviation) {
          row.worst_deviation = dev;
          row.worst_cell = all[c];
          row.worst_sign = signs[g];
          row.ratio = ratio;
        }
      }
    changes_max[w] = cmax;
    rep.rows[w] = row;
  });

  for (std::size_t w = 0; w < work.size(); ++w) {
    rep.worst_deviation = std::max(rep.worst_deviation, rep.rows[w].worst_deviation);
    rep.failing_pairs += failing[w];
    rep.quadrature_bound =
        std::max(rep.quadrature_bound, (changes_max[w] + 1.0) / static_cast<double>(n_line));
  }
  rep.pass = !work.empty() && rep.failing_pairs == 0;
  return rep;
}

WkMixReport check_wkmix_condition(const MapExpr& F, const MapExpr& H, std::int64_t m,
                                  const PartialDecomposition& d, const std::vector<Cell>& cell_list,
                                  double eps, int n_line) {
  if (n_line < 1) throw std::invalid_argument("check_wkmix_condition: n_line must be positive");
  std::vector<std::pair<std::size_t, std::size_t>> work;
  for (std::size_t gi = 0; gi < d.grid.size(); ++gi)
    for (std::size_t si = 0; si < d.grid[gi].segments.size(); ++si) work.emplace_back(gi, si);

  std::vector<double> mu;
  for (const Cell& b : cell_list) mu.push_back(normalized(b.measure()));

  std::vector<double> worst(work.size(), 0.0);
  std::vector<std::size_t> failing(work.size(), 0);
  parallel_for(work.size(), [&](std::size_t w) {
    const auto [gi, si] = work[w];
    std::vector<int> hits(cell_list.size(), 0);
    for (int j = 0; j < n_line; ++j) {
      const HopfPoint y = F.eval_power(H.eval_inverse(quadrature_point(d, gi, si, j, n_line)), m);
      for (std::size_t c = 0; c < cell_list.size(); ++c)
        if (cell_list[c].contains(y)) ++hits[c];
    }
    for (std::size_t c = 0; c < cell_list.size(); ++c) {
      const double rel = std::abs(static_cast<double>(hits[c]) / n_line - mu[c]) / mu[c];
      worst[w] = std::max(worst[w], rel);
      if (rel > eps) ++failing[w];
    }
  });

  WkMixReport rep;
  rep.eps = eps;
  rep.m = m;
  rep.n_line = n_line;
  rep.segments = work.size();
  for (std::size_t w = 0; w < work.size(); ++w) {
    rep.worst_relative = std::max(rep.worst_relative, worst[w]);
    rep.failing_pairs += failing[w];
  }
  rep.pass = !work.empty() && rep.failing_pairs == 0;
  return rep;
}

CorrelationTable correlation_table(const MapExpr& F,
                                   const std::vector<std::pair<ProductSet, ProductSet>>& pairs,
                                   const std::vector<std::int64_t>& ms, std::uint64_t n_mc,
                                   std::uint64_t seed) {
  if (n_mc < 2) throw std::invalid_argument("correlation_table: need at least 2 samples");
  const std::size_t np = pairs.size(), nm = ms.size();
  const std::size_t chunks = (n_mc + kSampleChunk - 1) / kSampleChunk;
  // hits[chunk][im * np + ip]
  std::vector<std::vector<std::uint64_t>> hits(chunks, std::vector<std::uint64_t>(nm * np, 0));
  parallel_for(chunks, [&](std::size_t ch) {
    auto rng = chunk_rng(seed, 5, ch);
    const std::uint64_t begin = ch * kSampleChunk;
    const std::uint64_t end = std::min<std::uint64_t>(n_mc, begin + kSampleChunk);
    std::vector<char> in_a(np);
    for (std::uint64_t i = begin; i < end; ++i) {
      const HopfPoint x = sample_point(rng);
      bool any = false;
      for (std::size_t ip = 0; ip < np; ++ip) {
        in_a[ip] = pairs[ip].first.contains(x);
        any = any || in_a[ip];
      }
      if (!any) continue;
      for (std::size_t im = 0; im < nm; ++im) {
        const HopfPoint y = F.eval_power(x, ms[im]);
        for (std::size_t ip = 0; ip < np; ++ip)
          if (in_a[ip] && pairs[ip].second.contains(y)) ++hits[ch][im * np + ip];
      }
    }
  });

  CorrelationTable table;
  table.samples = n_mc;
  const double n = static_cast<double>(n_mc);
  for (std::size_t im = 0; im < nm; ++im)
    for (std::size_t ip = 0; ip < np; ++ip) {
      std::uint64_t h = 0;
      for (std::size_t ch = 0; ch < chunks; ++ch) h += hits[ch][im * np + ip];
      CorrelationRow r;
      r.m = ms[im];
      r.a_id = ip;
      r.b_id = ip;
      r.joint = static_cast<double>(h) / n;
      r.product = normalized(product_measure(pairs[ip].first)) *
                  normalized(product_measure(pairs[ip].second));
      r.defect = std::abs(r.joint - r.product);
      r.std_error = std::sqrt(r.joint * (1.0 - r.joint) / (n - 1.0));
      table.rows.push_back(r);
    }
  return table;
}

}  // namespace abc
