#include "abc/hopf_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "abc/parallel.hpp"

namespace abc {

double wrap01(double t) {
  double r = t - std::floor(t);
  return r >= 1.0 ? 0.0 : r;
}

long double wrap01(long double t) {
  long double r = t - std::floor(t);
  return r >= 1.0L ? 0.0L : r;
}

double wrap_signed(double t) {
  double r = t - std::floor(t + 0.5);
  return r;
}

bool HopfPoint::valid() const {
  return theta1 >= 0.0 && theta1 < 1.0 && theta2 >= 0.0 && theta2 < 1.0 && xi >= 0.0 &&
         xi <= kPi / 2;
}

double HopfPoint::r1() const { return std::sin(xi); }
double HopfPoint::r2() const { return std::cos(xi); }

double CartesianPoint::norm() const {
  return std::sqrt(std::norm(x1) + std::norm(y1) + std::norm(x2) + std::norm(y2));
}

bool CartesianPoint::is_real(double tol) const {
  return std::abs(x1.imag()) <= tol && std::abs(y1.imag()) <= tol &&
         std::abs(x2.imag()) <= tol && std::abs(y2.imag()) <= tol;
}

bool CartesianPoint::finite() const {
  for (const cplx& c : {x1, y1, x2, y2})
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) return false;
  return true;
}

double distance(const CartesianPoint& a, const CartesianPoint& b) {
  if (!a.finite() || !b.finite()) return std::numeric_limits<double>::infinity();
  double d = std::sqrt(std::norm(a.x1 - b.x1) + std::norm(a.y1 - b.y1) +
                       std::norm(a.x2 - b.x2) + std::norm(a.y2 - b.y2));
  return std::isnan(d) ? std::numeric_limits<double>::infinity() : d;
}

CartesianPoint hopf_to_cartesian(const HopfPoint& p) {
  const double r1 = std::sin(p.xi);
  const double r2 = std::cos(p.xi);
  const double a1 = 2.0 * kPi * p.theta1;
  const double a2 = 2.0 * kPi * p.theta2;
  return {r1 * std::cos(a1), r1 * std::sin(a1), r2 * std::cos(a2), r2 * std::sin(a2)};
}

HopfPoint cartesian_to_hopf(const CartesianPoint& p, double tol) {
  if (!p.is_real(tol)) throw std::domain_error("cartesian_to_hopf: point is not real");
  const double x1 = p.x1.real(), y1 = p.y1.real(), x2 = p.x2.real(), y2 = p.y2.real();
  const double n1 = std::hypot(x1, y1);
  const double n2 = std::hypot(x2, y2);
  if (std::abs(n1 * n1 + n2 * n2 - 1.0) > tol)
    throw std::domain_error("cartesian_to_hopf: point is off the unit sphere");
  HopfPoint h;
  h.xi = std::atan2(n1, n2);
  h.theta1 = n1 == 0.0 ? 0.0 : wrap01(std::atan2(y1, x1) / (2.0 * kPi));
  h.theta2 = n2 == 0.0 ? 0.0 : wrap01(std::atan2(y2, x2) / (2.0 * kPi));
  return h;
}

AngleInterval AngleInterval::from_bounds(double a, double b) {
  AngleInterval iv;
  iv.len = std::clamp(b - a, 0.0, 1.0);
  iv.lo = wrap01(a);
  return iv;
}

bool AngleInterval::contains(double t) const {
  if (len >= 1.0) return true;
  return wrap01(t - lo) < len;
}

XiInterval XiInterval::from_sin2(double s_lo, double s_hi) {
  s_lo = std::clamp(s_lo, 0.0, 1.0);
  s_hi = std::clamp(s_hi, 0.0, 1.0);
  return {std::asin(std::sqrt(s_lo)), std::asin(std::sqrt(s_hi))};
}

ProductSet ProductSet::full_sphere() {
  return {AngleInterval{0.0, 1.0}, AngleInterval{0.0, 1.0}, {XiInterval{0.0, kPi / 2}}};
}

bool ProductSet::contains(const HopfPoint& p) const {
  if (!theta1.contains(p.theta1) || !theta2.contains(p.theta2)) return false;
  for (const XiInterval& iv : xi)
    if (p.xi >= iv.lo && p.xi <= iv.hi) return true;
  return false;
}

namespace {
double sin2(double x) {
  if (x >= kPi / 2) return 1.0;
  double s = std::sin(x);
  return s * s;
}
}  // namespace

double product_measure(const ProductSet& s) {
  double radial = 0.0;
  for (const XiInterval& iv : s.xi) radial += sin2(iv.hi) - sin2(iv.lo);
  return s.theta1.len * s.theta2.len * kSphereVolume * radial;
}

HopfPoint sample_point(std::mt19937_64& rng) {
  HopfPoint p;
  p.theta1 = uniform01(rng);
  p.theta2 = uniform01(rng);
  p.xi = std::asin(std::sqrt(uniform01(rng)));
  return p;
}

HopfPoint sample_point_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  auto rng = chunk_rng(seed, stream, index / kSampleChunk);
  rng.discard(3 * (index % kSampleChunk));
  return sample_point(rng);
}

std::vector<HopfPoint> sample_points(std::uint64_t seed, std::uint64_t stream, std::size_t n) {
  std::vector<HopfPoint> out(n);
  for (std::size_t c = 0; c * kSampleChunk < n; ++c) {
    auto rng = chunk_rng(seed, stream, c);
    const std::size_t end = std::min(n, (c + 1) * kSampleChunk);
    for (std::size_t i = c * kSampleChunk; i < end; ++i) out[i] = sample_point(rng);
  }
  return out;
}

McEstimate mc_measure(const HopfPredicate& pred, std::uint64_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("mc_measure: n must be positive");
  const std::size_t chunks = (n + kSampleChunk - 1) / kSampleChunk;
  std::vector<std::uint64_t> hits(chunks, 0);
  parallel_for(chunks, [&](std::size_t c) {
    auto rng = chunk_rng(seed, 0, c);
    const std::uint64_t begin = c * kSampleChunk;
    const std::uint64_t end = std::min<std::uint64_t>(n, begin + kSampleChunk);
    std::uint64_t h = 0;
    for (std::uint64_t i = begin; i < end; ++i)
      if (pred(sample_point(rng))) ++h;
    hits[c] = h;
  });
  McEstimate est;
  est.samples = n;
  for (auto h : hits) est.hits += h;
  const double frac = static_cast<double>(est.hits) / static_cast<double>(n);
  est.estimate = kSphereVolume * frac;
  est.std_error = kSphereVolume * std::sqrt(frac * (1.0 - frac) / static_cast<double>(n));
  return est;
}

}  // namespace abc
