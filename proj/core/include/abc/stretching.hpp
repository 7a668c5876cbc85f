#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "abc/decompositions.hpp"
#include "abc/sphere_maps.hpp"

namespace abc {

class SelectionError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class MonotonicityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Smallest m in [q~, 2 q~] with dist(q m p~/q~, 1/2 mod 1) <= 1/q~.
std::int64_t select_m_tilde(int q, const RationalRotation& omega_tilde);

struct StretchParams {
  int q = 16;
  double c = 0.0;
  double xi = 0.0;
  long double A = 0.0L;
  RationalRotation omega_tilde;
  std::int64_t m_tilde = 1;

  // Throws std::invalid_argument unless q~ > q, q does not divide q~ and
  // m~ lies in [q~, 2 q~].
  void validate() const;
};

// Closed form of the m~-th iterate of the conjugated rotation along N_{q,c} x {xi}:
//   f1 = t + shift + K (cos X - cos(X + beta))
//   f2 = (1/q - 1) t + c + shift + (1 + 1/q) K (cos X - cos(X + beta))
// with X = 2 pi q^2 (2t - c), beta = 2 pi q m~ omega~ and K = A r1^{q(q+1)} r2^{q^2}.
struct StretchProfile {
  int q = 16;
  double c = 0.0;
  double xi = 0.0;
  long double K = 0.0L;
  double shift = 0.0;  // m~ omega~ mod 1
  double beta = 0.0;   // in [0, 2 pi)

  double phase(double t) const;  // X
  double f1(double t) const;
  double f2(double t) const;
  double f1_prime(double t) const;
  double f2_prime(double t) const;
  double f2_second(double t) const;
  double sigma(double t) const;
  double sigma_prime(double t) const;
  double sigma_second(double t) const;

  // Exact range of f2' and sup |f2''| over [lo, hi] (closed-form extrema of a sinusoid).
  struct Bounds {
    double fp_min = 0.0, fp_max = 0.0;
    double fpp_sup = 0.0;
    bool monotone() const { return fp_min > 0.0 || fp_max < 0.0; }
    double fp_inf_abs() const;
    double fp_sup_abs() const;
  };
  Bounds f2_bounds(double lo, double hi) const;
  // sup |f2' - f1'| over [lo, hi].
  double diagonal_slope_sup(double lo, double hi) const;

  // theta with f2(theta) = y inside [lo, hi]; requires monotone f2 there.
  double invert_f2(double y, double lo, double hi) const;
};

StretchProfile stretch_profile(const StretchParams& sp);
// (f1, f2) mod 1.
std::pair<double, double> profile_eval(const StretchProfile& pr, double theta1);

// Scalar C^2 function on an interval. bounds, when present, returns the exact
// range of f' and sup |f''| on a subinterval; otherwise they are sampled.
struct ScalarFunction {
  std::function<double(double)> f;
  std::function<double(double)> df;
  std::function<double(double)> d2f;
  std::function<StretchProfile::Bounds(double, double)> bounds;
};

struct StretchReport {
  double ratio = 0.0;         // sup|f''| lambda(I) / inf|f'|
  double image_length = 0.0;  // lambda(J)
  bool criterion_pass = false;
  bool image_pass = false;
  double direct_worst = 0.0;  // max |frac - lambda(J~)/lambda(J)| / (lambda(J~)/lambda(J))
  int direct_samples = 0;
  bool direct_pass = false;
  bool pass() const { return criterion_pass && image_pass && direct_pass; }
};

// Both the derivative criterion and the direct check on n_sub random
// subintervals J~ of J; throws MonotonicityError if f' changes sign on I.
StretchReport check_uniform_stretch(const ScalarFunction& f, const Interval& I, double eps,
                                    double k, int n_sub, std::uint64_t seed = 1);

ScalarFunction f2_function(const StretchProfile& pr);

enum class BuildStatus { Certified, BudgetExhausted };

struct BuildConfig {
  int q = 16;
  double rho = 0.05;
  double delta = 0.1;
  RationalRotation omega{3, 16};
  int l = 3;
  MapExpr U;
  GridSpec grid;  // nc == 0 means default_grid(q)

  // A starts at A0_scale / max_grid r1^{q(q+1)} r2^{q^2}, i.e. K <= A0_scale on the grid.
  long double A0_scale = 1.0L;
  int max_A_doublings = 40;
  std::int64_t q_tilde0 = 2001;
  std::int64_t q_tilde_max = std::int64_t{1} << 24;
  std::size_t max_segments = 20'000'000;

  int n_sub = 100;                 // direct-check subintervals per segment
  std::size_t direct_stride = 1;   // direct check on every stride-th segment
  int sigma_samples = 10'000;
  double distance_radius = 1.25;
  std::uint64_t distance_samples = 4096;
  std::uint64_t seed = 1;
  std::size_t max_failure_rows = 200;
};

struct CertRow {
  std::string check;
  double c = 0.0;
  double xi = 0.0;
  std::int64_t segment = -1;  // -1 for grid-level and summary rows
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

struct BuildResult {
  BuildStatus status = BuildStatus::Certified;
  long double A = 0.0L;
  RationalRotation omega_tilde;
  std::int64_t m_tilde = 0;
  PartialDecomposition eta;
  std::vector<CertRow> certificate;
  bool conclusion[4] = {false, false, false, false};
  std::string diagnostic;  // first failing inequality
  std::size_t failing_segments = 0;

  StretchParams params(double c, double xi) const;
  bool certified() const { return status == BuildStatus::Certified; }
};

BuildResult build_stretch_certified_decomposition(const BuildConfig& cfg);

void write_certificate_csv(const std::vector<CertRow>& rows, const std::string& path);

struct DiagonalProximity {
  double c_tilde = 0.0;
  double sup_defect = 0.0;
  double bound = 0.0;  // 10 / sqrt(q')
  bool pass = false;
};

DiagonalProximity diagonal_proximity(const StretchParams& sp, const Segment& I);

struct PartitionCell {
  int k = 0;
  double theta2_lo = 0.0;  // start of the theta2 projection, length 1/q'
  std::vector<Interval> preimage;  // one or two theta1 pieces
};

struct PartitionJ {
  Segment base;
  StretchParams params;
  RationalRotation alpha_prime;
  double z0_theta1 = 0.0;
  double z0_theta2 = 0.0;
  double c_tilde = 0.0;
  std::vector<PartitionCell> cells;

  std::int64_t q_prime() const { return alpha_prime.q; }
  double cell_length() const { return 1.0 / static_cast<double>(alpha_prime.q); }
};

// z0_theta1 defaults to the theta1-midpoint of the segment, whose image is the anchor.
PartitionJ build_partition_J(const Segment& I, const StretchParams& sp,
                             const RationalRotation& alpha_prime,
                             std::optional<double> z0_theta1 = std::nullopt);

struct JClassification {
  std::vector<int> inside;    // conj(J_k) inside the margin cell
  std::vector<int> outside;   // conj(J_k) inside its complement
  std::vector<int> boundary;
  double weight_inside = 0.0;
  double weight_outside = 0.0;
  double weight_boundary = 0.0;
};

// Nine equispaced points of each J_k are pushed through conj; unanimity decides.
JClassification classify_J(const PartitionJ& pj, const MapExpr& conj, const Cell& b, double eps,
                           MarginSign sign);

}  // namespace abc
