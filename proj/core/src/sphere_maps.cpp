#include "abc/sphere_maps.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "abc/parallel.hpp"

namespace abc {

namespace {

using cplxl = std::complex<long double>;

std::int64_t mod_pos(std::int64_t a, std::int64_t m) {
  std::int64_t r = a % m;
  return r < 0 ? r + m : r;
}

cplxl ipow(cplxl base, int n) {
  cplxl result(1.0L, 0.0L);
  while (n > 0) {
    if (n & 1) result *= base;
    base *= base;
    n >>= 1;
  }
  return result;
}

// Multiplies the pair (x, y), read as z = x + iy, by e^{2 pi i s} for complex s.
void rotate_pair(cplx& x, cplx& y, cplxl s) {
  s = cplxl(wrap01(s.real()), s.imag());
  const cplxl angle = 2.0L * kPiL * s;
  const cplxl c = std::cos(angle);
  const cplxl sn = std::sin(angle);
  const cplxl xl(x), yl(y);
  x = cplx(c * xl - sn * yl);
  y = cplx(sn * xl + c * yl);
}

}  // namespace

RationalRotation RationalRotation::make(std::int64_t p, std::int64_t q) {
  if (q == 0) throw std::invalid_argument("RationalRotation: zero denominator");
  if (q < 0) {
    p = -p;
    q = -q;
  }
  std::int64_t g = std::gcd(p, q);
  if (g == 0) g = 1;
  return {p / g, q / g};
}

RationalRotation RationalRotation::parse(std::string_view text) {
  auto slash = text.find('/');
  if (slash == std::string_view::npos)
    throw std::invalid_argument("RationalRotation: expected p/q, got '" + std::string(text) + "'");
  std::int64_t p = 0, q = 0;
  auto num = text.substr(0, slash);
  auto den = text.substr(slash + 1);
  if (std::from_chars(num.data(), num.data() + num.size(), p).ec != std::errc() ||
      std::from_chars(den.data(), den.data() + den.size(), q).ec != std::errc())
    throw std::invalid_argument("RationalRotation: bad number in '" + std::string(text) + "'");
  return make(p, q);
}

long double RationalRotation::multiple(std::int64_t m) const {
  __int128 r = static_cast<__int128>(mod_pos(m, q)) * mod_pos(p, q);
  r %= q;
  return static_cast<long double>(static_cast<std::int64_t>(r)) / static_cast<long double>(q);
}

std::string RationalRotation::to_string() const {
  return std::to_string(p) + "/" + std::to_string(q);
}

long double log_amplitude(int q, double xi) {
  const long double n1 = static_cast<long double>(q) * (q + 1);
  const long double n2 = static_cast<long double>(q) * q;
  const long double s = std::sin(static_cast<long double>(xi));
  const long double c = std::cos(static_cast<long double>(xi));
  if (s <= 0.0L || c <= 0.0L) return -std::numeric_limits<long double>::infinity();
  return n1 * std::log(s) + n2 * std::log(c);
}

long double twist_amplitude(int q, long double A, double xi) {
  if (A == 0.0L) return 0.0L;
  const long double la = log_amplitude(q, xi);
  const long double mag = std::exp(std::log(std::fabs(A)) + la);
  return A < 0 ? -mag : mag;
}

long double chi_phase(int q, long double theta1, long double theta2) {
  const long double qq = static_cast<long double>(q) * q;
  const long double a = wrap01((qq + q) * theta1);
  const long double b = wrap01(qq * theta2);
  return wrap01(a - b);
}

HopfPoint rotate(long double alpha, const HopfPoint& p, std::int64_t m) {
  const long double shift = wrap01(static_cast<long double>(m) * alpha);
  return {static_cast<double>(wrap01(p.theta1 + shift)),
          static_cast<double>(wrap01(p.theta2 + shift)), p.xi};
}

HopfPoint rotate(const RationalRotation& alpha, const HopfPoint& p, std::int64_t m) {
  const long double shift = alpha.multiple(m);
  return {static_cast<double>(wrap01(p.theta1 + shift)),
          static_cast<double>(wrap01(p.theta2 + shift)), p.xi};
}

double chi(int q, const HopfPoint& p) {
  const long double amp = std::exp(log_amplitude(q, p.xi));
  return static_cast<double>(amp * std::cos(2.0L * kPiL * chi_phase(q, p.theta1, p.theta2)));
}

cplx chi_cartesian(int q, const CartesianPoint& z) {
  const cplxl i(0.0L, 1.0L);
  const cplxl x1(z.x1), y1(z.y1), x2(z.x2), y2(z.y2);
  const cplxl u1 = x1 + i * y1, v1 = x1 - i * y1;
  const cplxl u2 = x2 + i * y2, v2 = x2 - i * y2;
  const int n1 = q * (q + 1), n2 = q * q;
  const cplxl val = (ipow(u1, n1) * ipow(v2, n2) + ipow(v1, n1) * ipow(u2, n2)) / 2.0L;
  return cplx(val);
}

namespace {

struct HopfL {
  long double t1, t2;
  double xi;
};

HopfL twist_l(int q, long double amp, const HopfL& p) {
  const long double psi = amp * std::cos(2.0L * kPiL * chi_phase(q, p.t1, p.t2));
  const long double k = 1.0L + 1.0L / q;
  return {wrap01(p.t1 + wrap01(psi)), wrap01(p.t2 + wrap01(k * psi)), p.xi};
}

}  // namespace

HopfPoint twist(const TwistParams& t, const HopfPoint& p) {
  const long double amp = twist_amplitude(t.q, t.A, p.xi);
  HopfL r = twist_l(t.q, amp, {p.theta1, p.theta2, p.xi});
  return {static_cast<double>(r.t1), static_cast<double>(r.t2), p.xi};
}

CartesianPoint twist(const TwistParams& t, const CartesianPoint& z) {
  const cplxl s = t.A * cplxl(chi_cartesian(t.q, z));
  CartesianPoint r = z;
  rotate_pair(r.x1, r.y1, s);
  rotate_pair(r.x2, r.y2, (1.0L + 1.0L / t.q) * s);
  return r;
}

double twist_jacobian_det(const TwistParams& t, const HopfPoint& p) {
  const long double amp = twist_amplitude(t.q, t.A, p.xi);
  const long double phase = chi_phase(t.q, p.theta1, p.theta2);
  const long double c0 = -amp * std::sin(2.0L * kPiL * phase) * 2.0L * kPiL;
  const long double qq = static_cast<long double>(t.q) * t.q;
  const long double psi_t1 = c0 * (qq + t.q);
  const long double psi_t2 = -c0 * qq;
  return static_cast<double>(1.0L + psi_t1 + (1.0L + 1.0L / t.q) * psi_t2);
}

CartesianPoint mix(long double turn, const CartesianPoint& z) {
  const long double a = 2.0L * kPiL * wrap01(turn);
  const double c = static_cast<double>(std::cos(a));
  const double s = static_cast<double>(std::sin(a));
  return {c * z.x1 - s * z.x2, c * z.y1 - s * z.y2, s * z.x1 + c * z.x2, s * z.y1 + c * z.y2};
}

HopfPoint mix(long double turn, const HopfPoint& p) {
  return cartesian_to_hopf(mix(turn, hopf_to_cartesian(p)), 1e-6);
}

HopfPoint conjugated_rotation(int q, long double A, const RationalRotation& alpha_tilde,
                              std::int64_t m, const HopfPoint& p) {
  const long double amp = twist_amplitude(q, A, p.xi);
  HopfL z = twist_l(q, amp, {p.theta1, p.theta2, p.xi});
  const long double shift = alpha_tilde.multiple(m);
  z.t1 = wrap01(z.t1 + shift);
  z.t2 = wrap01(z.t2 + shift);
  z = twist_l(q, -amp, z);
  return {static_cast<double>(z.t1), static_cast<double>(z.t2), p.xi};
}

bool NormEstimate::finite() const { return std::isfinite(value); }

std::vector<double> shell_radii(double delta) {
  return {1.0 + (delta - 1.0) * 0.2, 1.0 + (delta - 1.0) * 0.6, delta};
}

CartesianPoint distance_sample(double delta, std::uint64_t seed, std::uint64_t index) {
  auto rng = chunk_rng(seed, 7, index);
  const HopfPoint base = sample_point(rng);
  CartesianPoint z = hopf_to_cartesian(base);
  const int kind = static_cast<int>(index % 4);
  if (kind == 0) return z;
  const double r = shell_radii(delta)[kind - 1];
  std::normal_distribution<double> normal(0.0, 1.0);
  double eta[4];
  double n2 = 0.0;
  for (double& e : eta) {
    e = normal(rng);
    n2 += e * e;
  }
  const double scale = std::sqrt(std::max(0.0, r * r - 1.0) / n2);
  z.x1 += cplx(0.0, eta[0] * scale);
  z.y1 += cplx(0.0, eta[1] * scale);
  z.x2 += cplx(0.0, eta[2] * scale);
  z.y2 += cplx(0.0, eta[3] * scale);
  return z;
}

NormEstimate sampled_distance(const MapExpr& f, const MapExpr& g, double delta, std::uint64_t n,
                              std::uint64_t seed) {
  if (!(delta > 1.0)) throw std::invalid_argument("sampled_distance: delta must exceed 1");
  if (n == 0) throw std::invalid_argument("sampled_distance: n must be positive");
  NormEstimate est;
  est.delta = delta;
  est.sample_budget = n;
  est.shell_radii = shell_radii(delta);
  est.shell_values.assign(3, 0.0);
  if (f == g) return est;

  std::vector<double> dist(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    const CartesianPoint z = distance_sample(delta, seed, i);
    double d = 0.0;
    if (i % 4 == 0) {
      const HopfPoint h = cartesian_to_hopf(z);
      d = std::max(distance(hopf_to_cartesian(f.eval(h)), hopf_to_cartesian(g.eval(h))),
                   distance(hopf_to_cartesian(f.eval_inverse(h)),
                            hopf_to_cartesian(g.eval_inverse(h))));
    } else {
      d = std::max(distance(f.eval(z), g.eval(z)),
                   distance(f.eval_inverse(z), g.eval_inverse(z)));
    }
    // Overflow inside the entire maps shows up as NaN; count it as unbounded.
    dist[i] = std::isnan(d) ? std::numeric_limits<double>::infinity() : d;
  });
  for (std::size_t i = 0; i < n; ++i) {
    est.value = std::max(est.value, dist[i]);
    if (i % 4 == 0)
      est.real_value = std::max(est.real_value, dist[i]);
    else
      est.shell_values[i % 4 - 1] = std::max(est.shell_values[i % 4 - 1], dist[i]);
  }
  return est;
}

}  // namespace abc
