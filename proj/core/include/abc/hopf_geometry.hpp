#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

namespace abc {

inline constexpr double kPi = std::numbers::pi;
inline constexpr long double kPiL = std::numbers::pi_v<long double>;
// Total volume of the unit three-sphere.
inline constexpr double kSphereVolume = 2.0 * kPi * kPi;

// Reduces an angle, given as a fraction of a full turn, into [0, 1).
double wrap01(double t);
long double wrap01(long double t);
// Signed distance to the nearest integer, in [-1/2, 1/2).
double wrap_signed(double t);

// A point of S^3 in Hopf coordinates. theta1, theta2 are fractions of a turn;
// xi is in radians.
struct HopfPoint {
  double theta1 = 0.0;
  double theta2 = 0.0;
  double xi = 0.0;

  bool valid() const;
  double r1() const;
  double r2() const;
};

using cplx = std::complex<double>;

// z1 = x1 + i y1, z2 = x2 + i y2. The components are complex so that the same
// type carries complexified points; real points have zero imaginary parts.
struct CartesianPoint {
  cplx x1, y1, x2, y2;

  // Hermitian norm in C^4: sqrt(|x1|^2 + |y1|^2 + |x2|^2 + |y2|^2).
  double norm() const;
  bool is_real(double tol = 0.0) const;
  bool finite() const;
};

double distance(const CartesianPoint& a, const CartesianPoint& b);

CartesianPoint hopf_to_cartesian(const HopfPoint& p);

// Throws std::domain_error when the point is not real or is off the unit
// sphere by more than tol. On a degenerate fiber the undetermined angle is 0.
HopfPoint cartesian_to_hopf(const CartesianPoint& p, double tol = 1e-9);

// Half-open arc [lo, lo + len) of the circle, lo in [0, 1), len in [0, 1].
struct AngleInterval {
  double lo = 0.0;
  double len = 1.0;

  static AngleInterval from_bounds(double a, double b);
  bool contains(double t) const;
};

// Closed interval [lo, hi] of xi values, 0 <= lo <= hi <= pi/2.
struct XiInterval {
  double lo = 0.0;
  double hi = 0.0;

  static XiInterval from_sin2(double s_lo, double s_hi);
};

struct ProductSet {
  AngleInterval theta1;
  AngleInterval theta2;
  std::vector<XiInterval> xi;

  static ProductSet full_sphere();
  bool contains(const HopfPoint& p) const;
};

// Unnormalized volume: lambda(B1) * 2 pi^2 * sum (sin^2 hi - sin^2 lo).
double product_measure(const ProductSet& s);
inline double normalized(double mu) { return mu / kSphereVolume; }

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::uint64_t samples = 0;
  std::uint64_t hits = 0;
};

using HopfPredicate = std::function<bool(const HopfPoint&)>;

// Draws a point from the normalized volume: theta1, theta2 uniform and
// sin^2 xi uniform.
HopfPoint sample_point(std::mt19937_64& rng);
// The i-th sample point of the (seed, stream) sequence.
HopfPoint sample_point_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);
// Points 0..n-1 of the same sequence, generated chunk by chunk.
std::vector<HopfPoint> sample_points(std::uint64_t seed, std::uint64_t stream, std::size_t n);

McEstimate mc_measure(const HopfPredicate& pred, std::uint64_t n, std::uint64_t seed);

}  // namespace abc
