#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "abc/hopf_geometry.hpp"

namespace abc {

struct RationalRotation {
  std::int64_t p = 0;
  std::int64_t q = 1;

  // Reduces p/q to lowest terms with q > 0.
  static RationalRotation make(std::int64_t p, std::int64_t q);
  static RationalRotation parse(std::string_view text);

  long double value() const { return static_cast<long double>(p) / static_cast<long double>(q); }
  // (m * p mod q) / q, computed exactly before the division.
  long double multiple(std::int64_t m) const;
  std::string to_string() const;
};

struct TwistParams {
  int q = 16;
  long double A = 0.0L;
};

// log(r1^{q(q+1)} r2^{q^2}); -inf on the degenerate fibers.
long double log_amplitude(int q, double xi);
// A r1^{q(q+1)} r2^{q^2}, evaluated through the logarithm.
long double twist_amplitude(int q, long double A, double xi);
// q^2 [theta1 (1 + 1/q) - theta2] mod 1.
long double chi_phase(int q, long double theta1, long double theta2);

HopfPoint rotate(long double alpha, const HopfPoint& p, std::int64_t m = 1);
HopfPoint rotate(const RationalRotation& alpha, const HopfPoint& p, std::int64_t m = 1);

double chi(int q, const HopfPoint& p);
// Polynomial form (u1^{N1} v2^{N2} + v1^{N1} u2^{N2}) / 2 with u = x + iy,
// v = x - iy; defined on complexified points.
cplx chi_cartesian(int q, const CartesianPoint& z);

HopfPoint twist(const TwistParams& t, const HopfPoint& p);
CartesianPoint twist(const TwistParams& t, const CartesianPoint& z);
double twist_jacobian_det(const TwistParams& t, const HopfPoint& p);

// Complex-linear unitary map (z1, z2) -> (cos a z1 - sin a z2, sin a z1 + cos a z2),
// a = 2 pi turn. It commutes with every rotation and couples xi to the angles.
CartesianPoint mix(long double turn, const CartesianPoint& z);
HopfPoint mix(long double turn, const HopfPoint& p);

// g^{-1} o phi^m o g with a single twist, one exact rotation and one untwist.
HopfPoint conjugated_rotation(int q, long double A, const RationalRotation& alpha_tilde,
                              std::int64_t m, const HopfPoint& p);

class MapExprError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Immutable composition tree of volume-preserving primitives.
class MapExpr {
 public:
  enum class Kind { Identity, Rotation, RealRotation, Twist, Mix, Compose, Inverse, Power };

  MapExpr();  // identity

  static MapExpr identity();
  static MapExpr rotation(const RationalRotation& alpha);
  static MapExpr rotation(long double alpha);
  static MapExpr twist(int q, long double A);
  static MapExpr mix(long double turn);
  // parts are listed outermost first: compose({f, g}) is f o g.
  static MapExpr compose(std::vector<MapExpr> parts);
  static MapExpr compose(const MapExpr& outer, const MapExpr& inner);
  // x^{-1} o y o x.
  static MapExpr conjugate(const MapExpr& x, const MapExpr& y);
  MapExpr inverse() const;
  MapExpr power(std::int64_t m) const;

  static MapExpr parse(std::string_view text);
  const std::string& to_string() const;

  Kind kind() const;
  int depth() const;
  bool is_identity() const { return kind() == Kind::Identity; }
  bool operator==(const MapExpr& other) const { return to_string() == other.to_string(); }

  // Rotation leaves and conjugations of rotations have exact period q; 0 if unknown.
  std::int64_t exact_period() const;

  struct Node;
  const Node& node() const { return *node_; }

  HopfPoint eval(const HopfPoint& p) const;
  HopfPoint eval_inverse(const HopfPoint& p) const;
  CartesianPoint eval(const CartesianPoint& z) const;
  CartesianPoint eval_inverse(const CartesianPoint& z) const;
  // f^m(p) for any integer m without building the power node.
  HopfPoint eval_power(const HopfPoint& p, std::int64_t m) const;
  CartesianPoint eval_power(const CartesianPoint& z, std::int64_t m) const;

 private:
  explicit MapExpr(std::shared_ptr<const Node> node);
  std::shared_ptr<const Node> node_;
};

struct MapExpr::Node {
  Kind kind = Kind::Identity;
  RationalRotation alpha;
  long double real_alpha = 0.0L;
  int q = 0;
  long double amount = 0.0L;  // twist amplitude or mix turn
  std::int64_t exponent = 1;
  std::vector<MapExpr> children;
  // Compose only: the first conj_parts parts invert the last conj_parts, in
  // mirrored order, so the node is x^{-1} o y o x.
  std::size_t conj_parts = 0;
  std::string text;
  int depth = 1;
};

struct NormEstimate {
  double delta = 1.25;
  std::uint64_t sample_budget = 0;
  double value = 0.0;         // max over everything sampled
  double real_value = 0.0;    // max over the real sphere samples
  std::vector<double> shell_radii;
  std::vector<double> shell_values;
  bool includes_inverse = true;
  bool finite() const;
};

// Shell radii 1 + (delta - 1) * {0.2, 0.6, 1.0}; for delta = 1.25 these are
// 1.05, 1.15, 1.25.
std::vector<double> shell_radii(double delta);

// Sampled lower bound of max(sup |f - g|, sup |f^{-1} - g^{-1}|) over B_delta.
// Sample i is real when i % 4 == 0 and lies on shell (i % 4) - 1 otherwise.
NormEstimate sampled_distance(const MapExpr& f, const MapExpr& g, double delta, std::uint64_t n,
                              std::uint64_t seed);

// Point i of the sampling plan used by sampled_distance.
CartesianPoint distance_sample(double delta, std::uint64_t seed, std::uint64_t index);

}  // namespace abc
