#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "abc/decompositions.hpp"
#include "abc/hopf_geometry.hpp"
#include "abc/sphere_maps.hpp"

namespace abc {

// Measures below are normalized: mu(S^3) = 1.

// 1/n sum_{k<n} pred(f^k(x)). Maps with an exact period P are evaluated with
// exact powers over one period and the sum is extended periodically.
double birkhoff_average(const MapExpr& f, const HopfPoint& x, const HopfPredicate& pred,
                        std::int64_t n);

// count starts stratified over a theta1 x theta2 x sin^2 xi grid, jittered inside
// each stratum. count must be a perfect cube.
std::vector<HopfPoint> stratified_starts(int count, std::uint64_t seed);

struct ErgodicityReport {
  int q = 0;
  double eps = 0.0;
  std::int64_t N = 0;
  std::size_t starts = 0;
  double worst_deviation = 0.0;
  double threshold = 0.0;  // 3 eps mu(B)
  Cell worst_cell;
  MarginSign worst_sign = MarginSign::Plus;
  std::size_t worst_start = 0;
  bool pass = false;
  std::string scope;
};

// Checks |1/N sum 1_{B_{+-eps}}(f^k x) - mu(B_{+-eps})| < 3 eps mu(B) for every
// cell, both margin signs and every start, at the single horizon n = N.
ErgodicityReport check_approx_ergodic(const MapExpr& f, int q, double eps, std::int64_t N,
                                      const std::vector<HopfPoint>& starts);

struct MixingSegmentRow {
  std::size_t grid_index = 0;
  std::size_t segment_index = 0;
  double worst_deviation = 0.0;
  Cell worst_cell;
  MarginSign worst_sign = MarginSign::Plus;
  double ratio = 0.0;
};

struct MixingReport {
  int q = 0;
  int qp = 0;
  double eps = 0.0;
  std::int64_t m = 0;
  int n_line = 0;
  std::size_t segments = 0;
  double threshold = 0.0;  // 30 eps mu(B)
  double worst_deviation = 0.0;
  double quadrature_bound = 0.0;  // (observed membership changes + 1) / n_line, worst case
  std::size_t failing_pairs = 0;  // (I, B, sign) above threshold
  bool pass = false;
  std::vector<MixingSegmentRow> rows;  // one per segment
};

// Ratio lambda(I cap H(F^{-m}(B_{+-eps}))) / lambda(I) by n_line equispaced
// points x of I, testing F^m(H^{-1}(x)) in B_{+-eps}.
MixingReport check_approx_mixing(const MapExpr& F, const MapExpr& H, int q, int qp, double eps,
                                 std::int64_t m, const PartialDecomposition& d, int n_line);

struct WkMixReport {
  double eps = 0.0;
  std::int64_t m = 0;
  int n_line = 0;
  std::size_t segments = 0;
  double worst_relative = 0.0;  // |ratio - mu(B)| / mu(B), worst case
  std::size_t failing_pairs = 0;
  bool pass = false;
};

// |lambda(Gamma cap F^{-m} B) - lambda(Gamma) mu(B)| <= eps lambda(Gamma) mu(B)
// with Gamma = H^{-1}(I), by the same quadrature.
WkMixReport check_wkmix_condition(const MapExpr& F, const MapExpr& H, std::int64_t m,
                                  const PartialDecomposition& d, const std::vector<Cell>& cells,
                                  double eps, int n_line);

struct CorrelationRow {
  std::int64_t m = 0;
  std::size_t a_id = 0;
  std::size_t b_id = 0;
  double joint = 0.0;    // mu(A cap F^{-m} B)
  double product = 0.0;  // mu(A) mu(B)
  double defect = 0.0;   // |joint - product|
  double std_error = 0.0;
};

struct CorrelationTable {
  std::uint64_t samples = 0;
  std::vector<CorrelationRow> rows;
};

// The same sample points serve every m and every pair.
CorrelationTable correlation_table(const MapExpr& F,
                                   const std::vector<std::pair<ProductSet, ProductSet>>& pairs,
                                   const std::vector<std::int64_t>& ms, std::uint64_t n_mc,
                                   std::uint64_t seed);

}  // namespace abc
