#include "abc/stretching.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <boost/math/tools/roots.hpp>

#include "abc/parallel.hpp"

namespace abc {

namespace {

constexpr long double kTwoPiL = 2.0L * kPiL;
constexpr double kImageTol = 1e-9;

struct SinusoidRange {
  long double cos_lo = -1.0L, cos_hi = 1.0L;
  long double sin_abs_sup = 1.0L;
};

// Range of cos and sup |sin| over [u, v].
SinusoidRange sinusoid_range(long double u, long double v) {
  SinusoidRange r;
  if (v - u >= kTwoPiL) return r;
  const long double cu = std::cos(u), cv = std::cos(v);
  r.cos_hi = std::max(cu, cv);
  r.cos_lo = std::min(cu, cv);
  if (kTwoPiL * std::ceil(u / kTwoPiL) <= v) r.cos_hi = 1.0L;
  if (kPiL + kTwoPiL * std::ceil((u - kPiL) / kTwoPiL) <= v) r.cos_lo = -1.0L;
  if (kPiL / 2 + kPiL * std::ceil((u - kPiL / 2) / kPiL) <= v)
    r.sin_abs_sup = 1.0L;
  else
    r.sin_abs_sup = std::max(std::abs(std::sin(u)), std::abs(std::sin(v)));
  return r;
}

struct BoundsL {
  long double fp_min, fp_max, fpp_sup;
  long double inf_abs() const {
    if (fp_min > 0) return fp_min;
    if (fp_max < 0) return -fp_max;
    return 0.0L;
  }
  long double sup_abs() const { return std::max(std::abs(fp_min), std::abs(fp_max)); }
};

// f2' = a0 + D cos(Y), f2'' = -D w sin(Y) with Y = X + beta/2 and w = 4 pi q^2.
BoundsL f2_bounds_l(int q, long double K, double beta, long double y_lo, long double y_hi) {
  const long double w = 4.0L * kPiL * q * q;
  const long double a0 = 1.0L / q - 1.0L;
  const long double D = (1.0L + 1.0L / q) * K * w * 2.0L * std::sin(beta / 2.0L);
  const SinusoidRange r = sinusoid_range(y_lo, y_hi);
  BoundsL b;
  if (D >= 0) {
    b.fp_min = a0 + D * r.cos_lo;
    b.fp_max = a0 + D * r.cos_hi;
  } else {
    b.fp_min = a0 + D * r.cos_hi;
    b.fp_max = a0 + D * r.cos_lo;
  }
  b.fpp_sup = std::abs(D) * w * r.sin_abs_sup;
  return b;
}

template <class F, class DF>
double invert_monotone(F&& f, DF&& df, double y, double lo, double hi) {
  const double flo = f(lo), fhi = f(hi);
  if (y == flo) return lo;
  if (y == fhi) return hi;
  const double guess = lo + (hi - lo) * std::clamp((y - flo) / (fhi - flo), 0.0, 1.0);
  std::uintmax_t iters = 200;
  return boost::math::tools::newton_raphson_iterate(
      [&](double t) { return std::make_pair(f(t) - y, df(t)); }, guess, lo, hi,
      std::numeric_limits<double>::digits - 2, iters);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

std::int64_t select_m_tilde(int q, const RationalRotation& w) {
  const __int128 qt = w.q;
  __int128 step = (static_cast<__int128>(q) * w.p) % qt;
  if (step < 0) step += qt;
  // r(m) = q m p~ mod q~, starting from r(q~) = 0.
  __int128 r = 0;
  for (std::int64_t m = w.q; m <= 2 * w.q; ++m) {
    const __int128 d = 2 * r - qt;
    if (d <= 2 && d >= -2) return m;
    r += step;
    if (r >= qt) r -= qt;
  }
  throw SelectionError("select_m_tilde: no m in [" + std::to_string(w.q) + ", " +
                       std::to_string(2 * w.q) + "] brings q m omega~ within 1/q~ of 1/2");
}

void StretchParams::validate() const {
  if (omega_tilde.q <= q) throw std::invalid_argument("StretchParams: need q~ > q");
  if (omega_tilde.q % q == 0) throw std::invalid_argument("StretchParams: q divides q~");
  if (m_tilde < omega_tilde.q || m_tilde > 2 * omega_tilde.q)
    throw std::invalid_argument("StretchParams: m~ outside [q~, 2 q~]");
}

StretchProfile stretch_profile(const StretchParams& sp) {
  sp.validate();
  StretchProfile pr;
  pr.q = sp.q;
  pr.c = sp.c;
  pr.xi = sp.xi;
  pr.K = sp.A == 0.0L ? 0.0L : twist_amplitude(sp.q, sp.A, sp.xi);
  pr.shift = static_cast<double>(sp.omega_tilde.multiple(sp.m_tilde));
  pr.beta = static_cast<double>(kTwoPiL * sp.omega_tilde.multiple(sp.q * sp.m_tilde));
  return pr;
}

double StretchProfile::phase(double t) const {
  return 2.0 * kPi * static_cast<double>(q) * q * (2.0 * t - c);
}

double StretchProfile::f1(double t) const {
  const double X = phase(t);
  return t + shift + static_cast<double>(K) * (std::cos(X) - std::cos(X + beta));
}

double StretchProfile::f2(double t) const {
  const double X = phase(t);
  return (1.0 / q - 1.0) * t + c + shift +
         (1.0 + 1.0 / q) * static_cast<double>(K) * (std::cos(X) - std::cos(X + beta));
}

double StretchProfile::f1_prime(double t) const {
  const double X = phase(t);
  const double w = 4.0 * kPi * q * q;
  return 1.0 + static_cast<double>(K) * w * (std::sin(X + beta) - std::sin(X));
}

double StretchProfile::f2_prime(double t) const {
  const double X = phase(t);
  const double w = 4.0 * kPi * q * q;
  return (1.0 / q - 1.0) +
         (1.0 + 1.0 / q) * static_cast<double>(K) * w * (std::sin(X + beta) - std::sin(X));
}

double StretchProfile::f2_second(double t) const {
  const double X = phase(t);
  const double w = 4.0 * kPi * q * q;
  return (1.0 + 1.0 / q) * static_cast<double>(K) * w * w * (std::cos(X + beta) - std::cos(X));
}

double StretchProfile::sigma(double t) const {
  const double X = phase(t);
  return std::cos(X + beta) + std::cos(X);
}

double StretchProfile::sigma_prime(double t) const {
  const double X = phase(t);
  return -4.0 * kPi * q * q * (std::sin(X + beta) + std::sin(X));
}

double StretchProfile::sigma_second(double t) const {
  const double X = phase(t);
  const double w = 4.0 * kPi * q * q;
  return -w * w * (std::cos(X + beta) + std::cos(X));
}

double StretchProfile::Bounds::fp_inf_abs() const {
  if (fp_min > 0) return fp_min;
  if (fp_max < 0) return -fp_max;
  return 0.0;
}

double StretchProfile::Bounds::fp_sup_abs() const {
  return std::max(std::abs(fp_min), std::abs(fp_max));
}

StretchProfile::Bounds StretchProfile::f2_bounds(double lo, double hi) const {
  const long double half = beta / 2.0;
  const BoundsL b = f2_bounds_l(q, K, beta, static_cast<long double>(phase(lo)) + half,
                                static_cast<long double>(phase(hi)) + half);
  return {static_cast<double>(b.fp_min), static_cast<double>(b.fp_max),
          static_cast<double>(b.fpp_sup)};
}

double StretchProfile::diagonal_slope_sup(double lo, double hi) const {
  // f2' - f1' = (1/q - 2) + 8 pi q K sin(beta/2) cos(X + beta/2).
  const long double a = 1.0L / q - 2.0L;
  const long double b = 8.0L * kPiL * q * K * std::sin(beta / 2.0L);
  const SinusoidRange r =
      sinusoid_range(phase(lo) + beta / 2.0L, phase(hi) + beta / 2.0L);
  return static_cast<double>(std::max(std::abs(a + b * r.cos_lo), std::abs(a + b * r.cos_hi)));
}

double StretchProfile::invert_f2(double y, double lo, double hi) const {
  return invert_monotone([this](double t) { return f2(t); },
                         [this](double t) { return f2_prime(t); }, y, lo, hi);
}

std::pair<double, double> profile_eval(const StretchProfile& pr, double theta1) {
  return {wrap01(pr.f1(theta1)), wrap01(pr.f2(theta1))};
}

ScalarFunction f2_function(const StretchProfile& pr) {
  ScalarFunction f;
  f.f = [pr](double t) { return pr.f2(t); };
  f.df = [pr](double t) { return pr.f2_prime(t); };
  f.d2f = [pr](double t) { return pr.f2_second(t); };
  f.bounds = [pr](double lo, double hi) { return pr.f2_bounds(lo, hi); };
  return f;
}

StretchReport check_uniform_stretch(const ScalarFunction& f, const Interval& I, double eps,
                                    double k, int n_sub, std::uint64_t seed) {
  StretchProfile::Bounds b;
  if (f.bounds) {
    b = f.bounds(I.lo, I.hi);
  } else {
    constexpr int n = 4097;
    b.fp_min = std::numeric_limits<double>::infinity();
    b.fp_max = -b.fp_min;
    for (int i = 0; i < n; ++i) {
      const double t = I.lo + I.length() * i / (n - 1);
      const double d = f.df(t);
      b.fp_min = std::min(b.fp_min, d);
      b.fp_max = std::max(b.fp_max, d);
      b.fpp_sup = std::max(b.fpp_sup, std::abs(f.d2f(t)));
    }
  }
  if (!b.monotone())
    throw MonotonicityError("check_uniform_stretch: f' changes sign on [" + fmt(I.lo) + ", " +
                            fmt(I.hi) + "]");

  StretchReport rep;
  const double y_lo = f.f(I.lo), y_hi = f.f(I.hi);
  const double j_lo = std::min(y_lo, y_hi), j_hi = std::max(y_lo, y_hi);
  rep.image_length = j_hi - j_lo;
  rep.ratio = b.fpp_sup * I.length() / b.fp_inf_abs();
  rep.criterion_pass = rep.ratio <= eps;
  rep.image_pass = rep.image_length >= k * (1.0 - kImageTol);

  auto rng = chunk_rng(seed, 11, 0);
  rep.direct_pass = true;
  for (int s = 0; s < n_sub; ++s) {
    double a = j_lo + rep.image_length * uniform01(rng);
    double c = j_lo + rep.image_length * uniform01(rng);
    if (a > c) std::swap(a, c);
    if (c == a) continue;
    const double ta = invert_monotone(f.f, f.df, a, I.lo, I.hi);
    const double tc = invert_monotone(f.f, f.df, c, I.lo, I.hi);
    const double frac = std::abs(tc - ta) / I.length();
    const double target = (c - a) / rep.image_length;
    const double dev = std::abs(frac - target) / target;
    rep.direct_worst = std::max(rep.direct_worst, dev);
    ++rep.direct_samples;
    if (dev > eps) rep.direct_pass = false;
  }
  return rep;
}

StretchParams BuildResult::params(double c, double xi) const {
  return {eta.q, c, xi, A, omega_tilde, m_tilde};
}

namespace {

// p~/q~ near omega with q~ >= q~0, gcd(q, q~) = 1 and gcd(p~, q~) = 1.
// gcd(q, q~) = 1 guarantees m~ exists; q not dividing q~ alone does not (q = 16,
// q~ = 3852 has no admissible m).
RationalRotation approximant(const RationalRotation& omega, std::int64_t qt, int q) {
  while (qt <= q || std::gcd(qt, static_cast<std::int64_t>(q)) != 1) ++qt;
  const auto base = static_cast<std::int64_t>(std::llround(omega.value() * qt));
  for (std::int64_t d = 0;; ++d) {
    for (std::int64_t p : {base + d, base - d})
      if (std::gcd(p, qt) == 1) return {p, qt};
  }
}

struct Screen {
  bool pass = true;
  std::string check;
  double xi = 0.0;
  double value = 0.0, threshold = 0.0;
  double predicted_segments = 0.0;
};

// Grid-level predictions from the X-space structure: every complement
// component is X in (pi j + pi/sqrt(q), pi (j+1) - pi/sqrt(q)) shifted by a
// multiple of pi, so one even and one odd component per xi bound them all.
Screen screen_A(int q, long double A, double beta, const std::vector<double>& xis,
                const std::vector<long double>& log_amp, int nc, double rho) {
  Screen s;
  const long double w = kPiL / std::sqrt(static_cast<long double>(q));
  const double comps = 4.0 * q * q + 1.0;
  const double cov_need = 1.0 - 3.0 / std::sqrt(static_cast<double>(q));
  const double len_max = 1.0 / (static_cast<double>(q) * q * q);
  auto fail = [&](const char* check, double xi, double v, double t) {
    if (!s.pass) return;
    s.pass = false;
    s.check = check;
    s.xi = xi;
    s.value = v;
    s.threshold = t;
  };
  for (std::size_t i = 0; i < xis.size(); ++i) {
    const long double K = A * std::exp(log_amp[i]);
    long double inf_fp = std::numeric_limits<long double>::infinity(), sup_fp = 0, sup_fpp = 0;
    bool monotone = true;
    for (int j = 0; j < 2; ++j) {
      const BoundsL b =
          f2_bounds_l(q, K, beta, kPiL * j + w + beta / 2.0L, kPiL * (j + 1) - w + beta / 2.0L);
      if (b.inf_abs() == 0.0L) monotone = false;
      inf_fp = std::min(inf_fp, b.inf_abs());
      sup_fp = std::max(sup_fp, b.sup_abs());
      sup_fpp = std::max(sup_fpp, b.fpp_sup);
    }
    if (!monotone) {
      fail("monotone_f2", xis[i], 0.0, 0.0);
      continue;
    }
    const double ratio = static_cast<double>(sup_fpp / (inf_fp * inf_fp));
    const double len = static_cast<double>(1.0L / inf_fp);
    const double cover = 1.0 - 2.0 / std::sqrt(static_cast<double>(q)) - comps * len;
    const long double segs = (1.0L - 2.0L / std::sqrt(static_cast<long double>(q))) * sup_fp + comps;
    s.predicted_segments += static_cast<double>(segs * nc);
    if (ratio > rho) fail("predicted_stretch_ratio", xis[i], ratio, rho);
    if (len > len_max) fail("predicted_segment_length", xis[i], len, len_max);
    if (cover < cov_need) fail("predicted_coverage", xis[i], cover, cov_need);
  }
  return s;
}

struct GridOutput {
  std::vector<Interval> segments;
  std::vector<CertRow> rows;
  std::vector<CertRow> failures;
  std::size_t failing = 0;
  double worst_image = 0.0, worst_slack = std::numeric_limits<double>::infinity();
  double worst_ratio = 0.0, worst_direct = 0.0, worst_len = 0.0, coverage = 0.0;
  bool all_i = true, all_ii = true, all_iii = true, partial = true;
};

GridOutput carve_and_certify(const BuildConfig& cfg, const StretchParams& sp,
                             std::uint64_t grid_index) {
  GridOutput out;
  const int q = cfg.q;
  const StretchProfile pr = stretch_profile(sp);
  const ExcludedSet M{q, sp.c};
  const double len_max = 1.0 / (static_cast<double>(q) * q * q);
  const double scale = 4.0 * q * q;
  const double wM = 1.0 / std::sqrt(static_cast<double>(q));
  const double cov_need = 1.0 - 3.0 / std::sqrt(static_cast<double>(q));
  const ScalarFunction f2 = f2_function(pr);

  auto fail_row = [&](const char* check, std::int64_t idx, double v, double t) {
    ++out.failing;
    if (out.failures.size() < cfg.max_failure_rows)
      out.failures.push_back({check, sp.c, sp.xi, idx, v, t, false});
  };

  for (const auto& comp : M.complement_components()) {
    const auto b = pr.f2_bounds(comp.lo, comp.hi);
    if (!b.monotone()) {
      fail_row("monotone_f2", -1, comp.lo, comp.hi);
      out.all_iii = false;
      continue;
    }
    const double dir = b.fp_min > 0 ? 1.0 : -1.0;
    double t = comp.lo;
    double F = pr.f2(t);
    const double F_end = pr.f2(comp.hi);
    while (dir * (F_end - (F + dir)) >= 0.0) {
      const double t_next = pr.invert_f2(F + dir, t, comp.hi);
      if (!(t_next > t)) break;
      out.segments.push_back({t, t_next});
      t = t_next;
      F = pr.f2(t);
    }
  }

  for (std::size_t si = 0; si < out.segments.size(); ++si) {
    const Interval& iv = out.segments[si];
    const auto idx = static_cast<std::int64_t>(si);
    out.coverage += iv.length();
    // i) image length
    const double img = std::abs(pr.f2(iv.hi) - pr.f2(iv.lo));
    const double img_err = std::abs(img - 1.0);
    out.worst_image = std::max(out.worst_image, img_err);
    if (img_err > kImageTol) {
      out.all_i = false;
      fail_row("image_length", idx, img, 1.0);
    }
    // ii) the segment stays inside one gap of M_{q,c}
    const double yl = (iv.lo - sp.c / 2.0) * scale, yh = (iv.hi - sp.c / 2.0) * scale;
    const double n = std::floor(0.5 * (yl + yh));
    const double slack = std::min(yl - n - wM, n + 1.0 - wM - yh) / scale;
    out.worst_slack = std::min(out.worst_slack, slack);
    if (slack < -1e-12 / scale) {
      out.all_ii = false;
      fail_row("avoid_M", idx, slack, 0.0);
    }
    // partial decomposition length
    out.worst_len = std::max(out.worst_len, iv.length());
    if (iv.length() > len_max) {
      out.partial = false;
      fail_row("segment_length", idx, iv.length(), len_max);
    }
    // iii) uniform stretching: criterion on every segment, direct check on a stride
    const auto bb = pr.f2_bounds(iv.lo, iv.hi);
    if (!bb.monotone()) {
      out.all_iii = false;
      fail_row("monotone_f2", idx, 0.0, 0.0);
      continue;
    }
    const double ratio = bb.fpp_sup * iv.length() / bb.fp_inf_abs();
    out.worst_ratio = std::max(out.worst_ratio, ratio);
    if (ratio > cfg.rho) {
      out.all_iii = false;
      fail_row("stretch_ratio", idx, ratio, cfg.rho);
    }
    if (cfg.direct_stride > 0 && si % cfg.direct_stride == 0) {
      const auto rep = check_uniform_stretch(f2, iv, cfg.rho, 1.0, cfg.n_sub,
                                             cfg.seed ^ (grid_index << 32) ^ si);
      out.worst_direct = std::max(out.worst_direct, rep.direct_worst);
      if (!rep.direct_pass) {
        out.all_iii = false;
        fail_row("direct_stretch", idx, rep.direct_worst, cfg.rho);
      }
    }
  }
  if (out.coverage < cov_need) out.partial = false;

  auto row = [&](const char* check, double v, double t, bool ok) {
    out.rows.push_back({check, sp.c, sp.xi, -1, v, t, ok});
  };
  row("grid_image_length_error", out.worst_image, kImageTol, out.all_i);
  row("grid_avoid_M_slack", out.worst_slack, 0.0, out.all_ii);
  row("grid_stretch_ratio", out.worst_ratio, cfg.rho, out.all_iii);
  row("grid_direct_stretch", out.worst_direct, cfg.rho, out.all_iii);
  row("grid_segment_length", out.worst_len, len_max, out.worst_len <= len_max);
  row("grid_coverage", out.coverage, cov_need, out.coverage >= cov_need);
  return out;
}

}  // namespace

BuildResult build_stretch_certified_decomposition(const BuildConfig& cfg) {
  if (!(cfg.rho > 0.0) || !(cfg.delta > 0.0)) throw std::invalid_argument("builder: rho and delta must be positive");
  if (cfg.l < 1) throw std::invalid_argument("builder: l must be at least 1");
  const int q = cfg.q;
  const GridSpec grid = cfg.grid.nc > 0 ? cfg.grid : default_grid(q);

  BuildResult res;
  res.eta.q = q;
  res.eta.spec = grid;

  std::vector<double> xis;
  std::vector<long double> log_amp;
  const auto points = decomposition_grid(grid);
  for (int ix = 0; ix < grid.nxi; ++ix) {
    xis.push_back(points[ix].second);
    log_amp.push_back(log_amplitude(q, points[ix].second));
  }
  const long double la_max = *std::max_element(log_amp.begin(), log_amp.end());

  auto set_omega = [&](std::int64_t qt) {
    res.omega_tilde = approximant(cfg.omega, qt, q);
    res.m_tilde = select_m_tilde(q, res.omega_tilde);
  };
  auto beta = [&] {
    return static_cast<double>(kTwoPiL * res.omega_tilde.multiple(q * res.m_tilde));
  };
  auto add = [&](const std::string& check, double xi, double v, double t, bool ok) {
    res.certificate.push_back({check, 0.0, xi, -1, v, t, ok});
  };
  auto budget = [&](const std::string& why) {
    res.status = BuildStatus::BudgetExhausted;
    if (res.diagnostic.empty()) res.diagnostic = why;
  };

  set_omega(cfg.q_tilde0);

  // A search by doubling.
  res.A = cfg.A0_scale * std::exp(-la_max);
  if (!std::isfinite(static_cast<double>(std::log(res.A))) || !std::isfinite(res.A)) {
    budget("A search: the starting amplitude exp(" + fmt(static_cast<double>(-la_max)) +
           ") overflows long double at q = " + std::to_string(q));
    add("A_search_log_A", 0.0, static_cast<double>(-la_max), 0.0, false);
    for (const char* c : {"conclusion_i", "conclusion_ii", "conclusion_iii", "conclusion_iv"})
      add(c, 0.0, 0.0, 0.0, false);
    return res;
  }
  Screen sc;
  for (int d = 0;; ++d) {
    sc = screen_A(q, res.A, beta(), xis, log_amp, grid.nc, cfg.rho);
    if (sc.predicted_segments > static_cast<double>(cfg.max_segments)) {
      // More doublings only add segments.
      if (!sc.pass) add("A_search_" + sc.check, sc.xi, sc.value, sc.threshold, false);
      sc.pass = false;
      sc.check = "predicted_segment_count";
      sc.xi = 0.0;
      sc.value = sc.predicted_segments;
      sc.threshold = static_cast<double>(cfg.max_segments);
      break;
    }
    if (sc.pass || d >= cfg.max_A_doublings) break;
    res.A *= 2.0L;
  }
  add("A_search_log_A", 0.0, static_cast<double>(std::log(res.A)), 0.0, sc.pass);
  add("A_search_predicted_segments", 0.0, sc.predicted_segments,
      static_cast<double>(cfg.max_segments), sc.predicted_segments <= cfg.max_segments);
  if (!sc.pass) {
    add("A_search_" + sc.check, sc.xi, sc.value, sc.threshold, false);
    budget("A search: " + sc.check + " = " + fmt(sc.value) + " vs " + fmt(sc.threshold) +
           " at xi = " + fmt(sc.xi) + " (log A = " + fmt(static_cast<double>(std::log(res.A))) + ")");
    add("conclusion_i", 0.0, 0.0, 0.0, false);
    add("conclusion_ii", 0.0, 0.0, 0.0, false);
    add("conclusion_iii", 0.0, 0.0, 0.0, false);
    add("conclusion_iv", 0.0, 0.0, 0.0, false);
    return res;
  }

  // q~ search by doubling for the smallness conditions and iv).
  const RationalRotation first_omega = res.omega_tilde;
  const std::int64_t first_m = res.m_tilde;
  const long double K_max = res.A * std::exp(la_max);
  const MapExpr U_inv = cfg.U.inverse();
  double worst_distance = 0.0;
  bool found = false;
  std::string first_fail;
  std::vector<CertRow> q_rows;
  for (std::int64_t qt = cfg.q_tilde0; qt <= cfg.q_tilde_max; qt = 2 * qt + 1) {
    set_omega(qt);
    q_rows.clear();
    const StretchProfile pr = stretch_profile({q, 0.0, xis[0], 0.0L, res.omega_tilde, res.m_tilde});
    // sigma', sigma'' sampled over one period of X and certified between
    // samples with the next derivative's bound.
    const int ns = cfg.sigma_samples;
    const double period = 1.0 / (2.0 * q * q);
    const double h = period / ns;
    const double w = 4.0 * kPi * q * q;
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < ns; ++i) {
      const double t = (i + 0.5) * h;
      s1 = std::max(s1, std::abs(pr.sigma_prime(t)));
      s2 = std::max(s2, std::abs(pr.sigma_second(t)));
    }
    s1 += 2.0 * w * w * h / 2.0;
    s2 += 2.0 * w * w * w * h / 2.0;
    const double v1 = static_cast<double>(4.0L * K_max * s1);
    const double v2 = static_cast<double>(4.0L * K_max * s2);
    q_rows.push_back({"smallness_sigma_prime", 0.0, 0.0, qt, v1, 1.0, v1 <= 1.0});
    q_rows.push_back({"smallness_sigma_second", 0.0, 0.0, qt, v2, 1.0, v2 <= 1.0});
    q_rows.push_back({"m_tilde_exceeds_l", 0.0, 0.0, qt, static_cast<double>(res.m_tilde),
                      static_cast<double>(cfg.l), res.m_tilde > cfg.l});
    const MapExpr Phi = MapExpr::conjugate(MapExpr::twist(q, res.A), MapExpr::rotation(res.omega_tilde));
    const MapExpr phi = MapExpr::rotation(cfg.omega);
    worst_distance = 0.0;
    for (int i = 1; i <= cfg.l; ++i) {
      const MapExpr f = MapExpr::compose({U_inv, Phi.power(i), cfg.U});
      const MapExpr g = MapExpr::compose({U_inv, phi.power(i), cfg.U});
      const NormEstimate ne = sampled_distance(f, g, cfg.distance_radius, cfg.distance_samples,
                                               cfg.seed + static_cast<std::uint64_t>(i));
      worst_distance = std::max(worst_distance, ne.value);
      q_rows.push_back({"distance_iv_i" + std::to_string(i), 0.0, 0.0, qt, ne.value, cfg.delta,
                        ne.value < cfg.delta});
      q_rows.push_back({"distance_iv_real_i" + std::to_string(i), 0.0, 0.0, qt, ne.real_value,
                        cfg.delta, ne.real_value < cfg.delta});
    }
    first_fail.clear();
    for (const auto& r : q_rows)
      if (!r.pass && r.check.rfind("distance_iv_real", 0) != 0) {
        first_fail = r.check + " = " + fmt(r.value) + " vs " + fmt(r.threshold) + " at q~ = " +
                     std::to_string(qt);
        break;
      }
    if (first_fail.empty()) {
      found = true;
      break;
    }
  }
  for (auto& r : q_rows) res.certificate.push_back(r);
  if (!found) {
    // Keep the first approximant; the recorded rows show the last attempt.
    res.omega_tilde = first_omega;
    res.m_tilde = first_m;
    budget("q~ search: " + first_fail);
  }
  res.conclusion[3] = found;

  // Re-screen A with the final omega~.
  sc = screen_A(q, res.A, beta(), xis, log_amp, grid.nc, cfg.rho);
  if (!sc.pass) budget("A re-check: " + sc.check + " = " + fmt(sc.value) + " at xi = " + fmt(sc.xi));

  // Carve and certify every grid point.
  const std::size_t n = points.size();
  std::vector<GridOutput> outs(n);
  parallel_for(n, [&](std::size_t gi) {
    outs[gi] = carve_and_certify(cfg, res.params(points[gi].first, points[gi].second), gi);
  });
  bool all_i = true, all_ii = true, all_iii = true, partial = true;
  double w_img = 0.0, w_slack = std::numeric_limits<double>::infinity(), w_ratio = 0.0,
         w_direct = 0.0, w_len = 0.0, w_cov = 1.0;
  for (std::size_t gi = 0; gi < n; ++gi) {
    GridOutput& o = outs[gi];
    res.eta.grid.push_back({points[gi].first, points[gi].second, std::move(o.segments)});
    for (auto& r : o.rows) res.certificate.push_back(std::move(r));
    for (auto& r : o.failures) res.certificate.push_back(std::move(r));
    res.failing_segments += o.failing;
    all_i = all_i && o.all_i;
    all_ii = all_ii && o.all_ii;
    all_iii = all_iii && o.all_iii;
    partial = partial && o.partial;
    w_img = std::max(w_img, o.worst_image);
    w_slack = std::min(w_slack, o.worst_slack);
    w_ratio = std::max(w_ratio, o.worst_ratio);
    w_direct = std::max(w_direct, o.worst_direct);
    w_len = std::max(w_len, o.worst_len);
    w_cov = std::min(w_cov, o.coverage);
  }
  res.conclusion[0] = all_i;
  res.conclusion[1] = all_ii;
  res.conclusion[2] = all_iii;
  const double len_max = 1.0 / (static_cast<double>(q) * q * q);
  add("partial_decomposition_length", 0.0, w_len, len_max, w_len <= len_max);
  add("partial_decomposition_coverage", 0.0, w_cov, 1.0 - 3.0 / std::sqrt(static_cast<double>(q)),
      partial);
  add("conclusion_i", 0.0, w_img, kImageTol, all_i);
  add("conclusion_ii", 0.0, w_slack, 0.0, all_ii);
  add("conclusion_iii", 0.0, std::max(w_ratio, w_direct), cfg.rho, all_iii);
  add("conclusion_iv", 0.0, worst_distance, cfg.delta, found);
  if (!all_i || !all_ii || !all_iii || !partial) {
    for (const auto& r : res.certificate)
      if (!r.pass && r.check.rfind("conclusion", 0) != 0) {
        budget("certification: " + r.check + " = " + fmt(r.value) + " vs " + fmt(r.threshold));
        break;
      }
  }
  return res;
}

void write_certificate_csv(const std::vector<CertRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  out << "check_name,c,xi,segment_index,value,threshold,pass\n";
  for (const auto& r : rows)
    out << r.check << ',' << r.c << ',' << r.xi << ',' << r.segment << ',' << r.value << ','
        << r.threshold << ',' << (r.pass ? 1 : 0) << '\n';
}

DiagonalProximity diagonal_proximity(const StretchParams& sp, const Segment& I) {
  const StretchProfile pr = stretch_profile(sp);
  DiagonalProximity dp;
  const double mid = 0.5 * (I.theta1_lo + I.theta1_hi);
  dp.c_tilde = wrap01(pr.f2(mid) - pr.f1(mid));
  for (int i = 0; i <= 1000; ++i) {
    const double t = I.theta1_lo + I.length() * i / 1000.0;
    dp.sup_defect = std::max(dp.sup_defect, std::abs(wrap_signed(pr.f2(t) - pr.f1(t) - dp.c_tilde)));
  }
  dp.bound = 10.0 / std::sqrt(static_cast<double>(sp.q));
  dp.pass = dp.sup_defect < dp.bound;
  return dp;
}

PartitionJ build_partition_J(const Segment& I, const StretchParams& sp,
                             const RationalRotation& alpha_prime, std::optional<double> z0_theta1) {
  const StretchProfile pr = stretch_profile(sp);
  const auto b = pr.f2_bounds(I.theta1_lo, I.theta1_hi);
  if (!b.monotone()) throw MonotonicityError("build_partition_J: f2 is not monotone on the segment");

  PartitionJ pj;
  pj.base = I;
  pj.params = sp;
  pj.alpha_prime = alpha_prime;
  const double mid = z0_theta1.value_or(0.5 * (I.theta1_lo + I.theta1_hi));
  pj.z0_theta1 = wrap01(pr.f1(mid));
  pj.z0_theta2 = wrap01(pr.f2(mid));
  pj.c_tilde = wrap01(pj.z0_theta2 - pj.z0_theta1);

  const bool increasing = b.fp_min > 0;
  const double F_lo = pr.f2(I.theta1_lo), F_hi = pr.f2(I.theta1_hi);
  const double F_min = std::min(F_lo, F_hi), F_max = std::max(F_lo, F_hi);
  const double L = pj.cell_length();
  auto theta_of = [&](double F) {
    if (F <= F_min) return increasing ? I.theta1_lo : I.theta1_hi;
    if (F >= F_max) return increasing ? I.theta1_hi : I.theta1_lo;
    return pr.invert_f2(F, I.theta1_lo, I.theta1_hi);
  };
  auto piece = [](double ta, double tb) { return Interval{std::min(ta, tb), std::max(ta, tb)}; };

  // Cell boundaries sit at F_min + r + i L. Each one is inverted once, so
  // neighboring preimages share their endpoint exactly.
  const std::int64_t qp = alpha_prime.q;
  const double start0 = pj.z0_theta2 - 0.5 * L;
  const double r = std::fmod(wrap01(start0 - F_min), L);
  std::vector<double> edge(static_cast<std::size_t>(qp) + 1);
  for (std::int64_t i = 0; i <= qp; ++i)
    edge[i] = theta_of(std::clamp(F_min + r + static_cast<double>(i) * L, F_min, F_max));
  const double edge_first = theta_of(F_min);

  for (std::int64_t k = 0; k < qp; ++k) {
    PartitionCell cell;
    cell.k = static_cast<int>(k);
    cell.theta2_lo = wrap01(start0 + static_cast<double>(alpha_prime.multiple(k)));
    const auto i = static_cast<std::int64_t>(std::llround(wrap01(cell.theta2_lo - F_min - r) / L)) % qp;
    if (edge[i] != edge[i + 1]) cell.preimage.push_back(piece(edge[i], edge[i + 1]));
    // the last cell wraps around to the start of the image
    if (i == qp - 1 && r > 0.0) cell.preimage.push_back(piece(edge_first, edge[0]));
    std::sort(cell.preimage.begin(), cell.preimage.end(),
              [](const Interval& a, const Interval& c) { return a.lo < c.lo; });
    pj.cells.push_back(std::move(cell));
  }
  return pj;
}

JClassification classify_J(const PartitionJ& pj, const MapExpr& conj, const Cell& b, double eps,
                           MarginSign sign) {
  const MarginCell mc = margin_cell(b, eps, sign);
  const StretchProfile pr = stretch_profile(pj.params);
  const double weight = pj.cell_length();
  JClassification out;
  for (const PartitionCell& cell : pj.cells) {
    double total = 0.0;
    for (const auto& iv : cell.preimage) total += iv.length();
    int inside = 0;
    for (int j = 0; j < 9; ++j) {
      double s = (j + 0.5) / 9.0 * total;
      double t = cell.preimage.empty() ? pj.base.theta1_lo : cell.preimage.back().hi;
      for (const auto& iv : cell.preimage) {
        if (s <= iv.length()) {
          t = iv.lo + s;
          break;
        }
        s -= iv.length();
      }
      const auto [a1, a2] = profile_eval(pr, t);
      if (mc.contains(conj.eval(HopfPoint{a1, a2, pj.base.xi}))) ++inside;
    }
    if (inside == 9) {
      out.inside.push_back(cell.k);
      out.weight_inside += weight;
    } else if (inside == 0) {
      out.outside.push_back(cell.k);
      out.weight_outside += weight;
    } else {
      out.boundary.push_back(cell.k);
      out.weight_boundary += weight;
    }
  }
  return out;
}

}  // namespace abc
