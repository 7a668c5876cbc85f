#include "abc/abc_driver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "abc/parallel.hpp"
#include "abc/report_io.hpp"
#include "json.hpp"

namespace abc {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

double epsilon_schedule(double prev_eps, int prev_q, double gamma) {
  return 0.5 * std::pow(static_cast<double>(prev_q), -1.5) * std::min(prev_eps, gamma * prev_eps);
}

double initial_epsilon(double eps_bar, double gamma) {
  return std::min(eps_bar / 4.0, gamma * eps_bar / 4.0);
}

ConvergenceVerdict convergence_check(const MapExpr& F_limit_proxy, const MapExpr& F_n,
                                     std::int64_t m_n, double eps_n, int q_n, double gamma,
                                     double delta, std::uint64_t samples, std::uint64_t seed) {
  ConvergenceVerdict v;
  v.threshold = gamma * eps_n * std::pow(static_cast<double>(q_n), -1.5);
  if (F_limit_proxy == F_n) {
    v.pass = true;
    return v;
  }
  const NormEstimate ne =
      sampled_distance(F_limit_proxy.power(m_n), F_n.power(m_n), delta, samples, seed);
  v.value = ne.value;
  v.real_value = ne.real_value;
  v.pass = ne.value < v.threshold;
  return v;
}

// ---- provider ----

ConjugacyProvider ConjugacyProvider::identity() { return {}; }

ConjugacyProvider ConjugacyProvider::from_catalog(const MapExpr& H, std::string name) {
  ConjugacyProvider p;
  p.kind = Kind::Catalog;
  p.catalog = H;
  p.name = std::move(name);
  return p;
}

ConjugacyProvider::Result ConjugacyProvider::provide(const RationalRotation& alpha,
                                                     double L) const {
  if (!(L >= 0.0)) throw ConfigError("provider: L must be non-negative");
  const std::int64_t q = alpha.q;
  const auto lower = static_cast<std::int64_t>(std::floor(static_cast<double>(q) + L)) + 1;
  std::int64_t k = std::max<std::int64_t>(2, (lower + q - 1) / q);
  const std::int64_t qp = k * q;
  std::int64_t pp = k * alpha.p + 1;
  while (std::gcd(pp, qp) != 1) ++pp;
  Result r;
  r.H = kind == Kind::Identity ? MapExpr::identity() : catalog;
  r.alpha_prime = RationalRotation::make(pp % qp, qp);
  return r;
}

const char* to_string(StageStatus s) {
  switch (s) {
    case StageStatus::Pass: return "pass";
    case StageStatus::VerdictFailure: return "verdict_failure";
    case StageStatus::PremiseFailure: return "premise_failure";
    case StageStatus::BudgetFailure: return "budget_failure";
  }
  return "unknown";
}

// ---- one inductive step ----

StageResult inductive_step(const MapExpr& V, const RationalRotation& alpha, double eps,
                           std::int64_t m, const ConjugacyProvider& provider, double L,
                           const StageOptions& opts, int stage_index) {
  if (!(eps > 0.0)) throw std::invalid_argument("inductive_step: eps must be positive");
  if (m < 1) throw std::invalid_argument("inductive_step: m must be at least 1");
  const auto t0 = Clock::now();
  const int q = static_cast<int>(alpha.q);
  if (q < 16) throw ConfigError("inductive_step: the cell family needs q >= 16");

  StageResult out;
  StageLedgerRow& row = out.row;
  row.stage = stage_index;
  row.q = q;
  row.L = L;
  row.alpha = alpha;
  row.m_prev = m;
  row.eps = eps;
  row.gamma = opts.gamma;
  row.provider = provider.name;

  auto budget_fail = [&](const std::string& why) {
    row.budget_exhausted = true;
    if (row.diagnostic.empty()) row.diagnostic = why;
  };
  if (q > opts.budgets.max_q) {
    budget_fail("q = " + std::to_string(q) + " exceeds the cell enumeration limit " +
                std::to_string(opts.budgets.max_q));
    row.status = StageStatus::BudgetFailure;
    return out;
  }

  const auto provided = provider.provide(alpha, L);
  out.H = provided.H;
  row.alpha_prime = provided.alpha_prime;
  row.q_prime = provided.alpha_prime.q;
  if (!(static_cast<double>(row.q_prime) > q + L))
    throw std::logic_error("inductive_step: provider returned q' <= q + L");
  const int qp = static_cast<int>(row.q_prime);

  const MapExpr HV = MapExpr::compose(out.H, V);
  const MapExpr phi_alpha = MapExpr::rotation(alpha);
  const std::uint64_t seed = opts.seed;

  // Premise: (q, 2 eps, q')-ergodicity of V^{-1} H^{-1} phi_{alpha'} H V.
  const MapExpr f = MapExpr::conjugate(HV, MapExpr::rotation(provided.alpha_prime));
  out.premise = check_approx_ergodic(f, q, 2.0 * eps, row.q_prime,
                                     stratified_starts(opts.ergodicity_starts, seed));
  row.premise_deviation = out.premise.worst_deviation;
  row.premise_threshold = out.premise.threshold;
  row.premise_pass = out.premise.pass;
  for (std::int64_t j = 1; j <= m; ++j) {
    const NormEstimate ne =
        sampled_distance(f.power(j), MapExpr::conjugate(V, phi_alpha.power(j)), opts.delta_radius,
                         opts.distance_samples, seed + 1000 + static_cast<std::uint64_t>(j));
    row.premise_distance = std::max(row.premise_distance, ne.value);
  }

  // Stretch-certified decomposition for q'.
  BuildConfig bc;
  bc.q = qp;
  bc.rho = opts.rho.value_or(eps / (static_cast<double>(q) * q * q));
  bc.delta = opts.delta.value_or(eps / 2.0);
  bc.omega = provided.alpha_prime;
  bc.l = static_cast<int>(std::min<std::int64_t>(m, 1 << 30));
  bc.U = HV;
  if (opts.grid.nc > 0) {
    bc.grid = opts.grid;
  } else {
    const auto band = admissible_sin2_band(qp);
    bc.grid = GridSpec{2, 2, band.first, band.second};
  }
  bc.max_A_doublings = opts.budgets.A_doublings;
  bc.q_tilde0 = opts.q_tilde0;
  bc.q_tilde_max = opts.budgets.q_tilde_max;
  bc.max_segments = opts.budgets.max_segments;
  bc.direct_stride = opts.direct_stride;
  bc.distance_radius = opts.delta_radius;
  bc.distance_samples = opts.distance_samples;
  bc.seed = seed;
  out.build = build_stretch_certified_decomposition(bc);
  const BuildResult& b = out.build;
  row.A = b.A;
  row.alpha_next = b.omega_tilde;
  row.m = b.m_tilde;
  if (!b.certified()) budget_fail("stretch search: " + b.diagnostic);

  // F = V^{-1} H^{-1} Phi H V with Phi = g^{-1} phi_{alpha~} g.
  const MapExpr g = MapExpr::twist(qp, b.A);
  const MapExpr Phi = MapExpr::conjugate(g, MapExpr::rotation(b.omega_tilde));
  out.F = MapExpr::conjugate(HV, Phi);
  out.V_next = MapExpr::compose({g, out.H, V});
  out.alpha_next = b.omega_tilde;

  // i) |F^j - V^{-1} phi_alpha^j V| < eps for 0 < j <= m.
  row.distance_i_threshold = eps;
  const bool have_F = std::isfinite(b.A);
  if (!have_F) row.distance_i_value = row.distance_i_real = std::numeric_limits<double>::infinity();
  for (std::int64_t j = 1; have_F && j <= m; ++j) {
    const NormEstimate ne =
        sampled_distance(out.F.power(j), MapExpr::conjugate(V, phi_alpha.power(j)),
                         opts.delta_radius, opts.distance_samples,
                         seed + 2000 + static_cast<std::uint64_t>(j));
    row.distance_i_value = std::max(row.distance_i_value, ne.value);
    row.distance_i_real = std::max(row.distance_i_real, ne.real_value);
  }
  row.distance_i_pass = row.distance_i_value < eps;

  // ii) (q, q', eps, m~, H V)-mixing, on eta when certified.
  row.mixing_ii_on_certified = b.certified();
  row.mixing_ii_threshold = 30.0 * eps / (static_cast<double>(q) * q * q);
  // The fallback cuts every diagonal into pieces of length q'^{-3}.
  const double fallback_segments = static_cast<double>(bc.grid.nc) * bc.grid.nxi *
                                   std::pow(static_cast<double>(qp), 3.0);
  PartialDecomposition d;
  if (!have_F) {
    budget_fail("no finite amplitude; mixing not measured");
  } else if (b.certified()) {
    d = b.eta;
  } else if (fallback_segments <= static_cast<double>(opts.budgets.max_segments)) {
    d = uniform_decomposition(qp, bc.grid);
  } else {
    budget_fail("fallback decomposition needs about " + fmt(fallback_segments) + " segments");
  }
  if (seconds_since(t0) > opts.budgets.stage_seconds) {
    budget_fail("stage wall clock exceeded before the mixing check");
  } else if (!d.grid.empty()) {
    out.mixing = check_approx_mixing(out.F, HV, q, qp, eps, b.m_tilde, d, opts.mixing_line);
    row.mixing_ii_deviation = out.mixing.worst_deviation;
    row.mixing_ii_threshold = out.mixing.threshold;
    row.mixing_ii_pass = out.mixing.pass;

    // How well the segments approximate a middle cell after pulling back by H V.
    const Cell mid{q, q / 2, q / 2, q / 2};
    const DefectEstimate de =
        cell_approximation_defect(HV, d, mid, opts.defect_samples, seed + 11);
    row.cell_defect = de.cell_measure > 0.0 ? de.defect / de.cell_measure : 0.0;
  }

  if (seconds_since(t0) > opts.budgets.stage_seconds)
    budget_fail("stage wall clock " + fmt(seconds_since(t0)) + " s exceeds " +
                fmt(opts.budgets.stage_seconds) + " s");

  if (!row.premise_pass) {
    row.status = StageStatus::PremiseFailure;
    if (row.diagnostic.empty())
      row.diagnostic = "premise: ergodicity deviation " + fmt(row.premise_deviation) + " vs " +
                       fmt(row.premise_threshold);
  } else if (row.budget_exhausted) {
    row.status = StageStatus::BudgetFailure;
  } else if (!row.distance_i_pass || !row.mixing_ii_pass) {
    row.status = StageStatus::VerdictFailure;
    row.diagnostic = !row.distance_i_pass
                         ? "i): distance " + fmt(row.distance_i_value) + " vs " + fmt(eps)
                         : "ii): mixing deviation " + fmt(row.mixing_ii_deviation) + " vs " +
                               fmt(row.mixing_ii_threshold);
  }
  return out;
}

// ---- config ----

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* s) { return k == s; }) == keys.end())
      throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

ScheduleConfig parse_schedule_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  reject_unknown(j,
                 {"alpha", "q", "eps_bar", "gamma", "n_stages", "L", "provider", "rho", "delta",
                  "delta_radius", "seeds", "budgets", "grid", "samples", "correlation",
                  "output_dir", "q_tilde0", "direct_stride"},
                 "config");
  ScheduleConfig c;
  StageOptions& s = c.stage;
  if (j.contains("alpha")) {
    const json& a = j["alpha"];
    try {
      if (a.is_string()) {
        c.alpha = RationalRotation::parse(a.get<std::string>());
      } else if (a.is_array() && a.size() == 2) {
        c.alpha = RationalRotation::make(a[0].get<std::int64_t>(), a[1].get<std::int64_t>());
      } else {
        throw ConfigError("config.alpha: expected \"p/q\" or [p, q]");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config.alpha: ") + e.what());
    }
  }
  if (j.contains("q"))
    require(get<std::int64_t>(j, "q", "config") == c.alpha.q,
            "config.q must equal the denominator of alpha");
  require(c.alpha.q >= 16, "config: alpha needs denominator q >= 16");
  if (j.contains("eps_bar")) c.eps_bar = get<double>(j, "eps_bar", "config");
  if (j.contains("gamma")) s.gamma = get<double>(j, "gamma", "config");
  if (j.contains("n_stages")) c.n_stages = get<int>(j, "n_stages", "config");
  if (j.contains("L")) {
    if (j["L"].is_array()) {
      c.L = get<std::vector<double>>(j, "L", "config");
    } else {
      c.L = {get<double>(j, "L", "config")};
    }
  }
  require(c.eps_bar > 0.0, "config.eps_bar must be positive");
  require(s.gamma > 0.0, "config.gamma must be positive");
  require(c.n_stages >= 1, "config.n_stages must be at least 1");
  require(!c.L.empty(), "config.L must not be empty");
  for (double L : c.L) require(L >= 0.0, "config.L entries must be non-negative");

  if (j.contains("provider")) {
    const json& p = j["provider"];
    reject_unknown(p, {"kind", "expr", "name"}, "config.provider");
    const auto kind = get<std::string>(p, "kind", "config.provider");
    if (kind == "identity") {
      require(!p.contains("expr"), "config.provider: identity takes no expr");
      c.provider = ConjugacyProvider::identity();
    } else if (kind == "catalog") {
      MapExpr H;
      try {
        H = MapExpr::parse(get<std::string>(p, "expr", "config.provider"));
      } catch (const MapExprError& e) {
        throw ConfigError(std::string("config.provider.expr: ") + e.what());
      }
      c.provider = ConjugacyProvider::from_catalog(
          H, p.contains("name") ? get<std::string>(p, "name", "config.provider") : "catalog");
    } else {
      throw ConfigError("config.provider.kind must be identity or catalog");
    }
  }
  if (j.contains("rho")) s.rho = get<double>(j, "rho", "config");
  if (j.contains("delta")) s.delta = get<double>(j, "delta", "config");
  if (s.rho) require(*s.rho > 0.0, "config.rho must be positive");
  if (s.delta) require(*s.delta > 0.0, "config.delta must be positive");
  if (j.contains("delta_radius")) s.delta_radius = get<double>(j, "delta_radius", "config");
  require(s.delta_radius >= 1.0, "config.delta_radius must be at least 1");
  if (j.contains("seeds")) s.seed = get<std::uint64_t>(j, "seeds", "config");
  if (j.contains("q_tilde0")) s.q_tilde0 = get<std::int64_t>(j, "q_tilde0", "config");
  if (j.contains("direct_stride")) s.direct_stride = get<std::size_t>(j, "direct_stride", "config");
  require(s.q_tilde0 > 1, "config.q_tilde0 must exceed 1");
  require(s.direct_stride >= 1, "config.direct_stride must be at least 1");

  if (j.contains("budgets")) {
    const json& b = j["budgets"];
    const std::string w = "config.budgets";
    reject_unknown(b, {"A_doublings", "q_tilde_max", "max_segments", "stage_seconds", "max_q"}, w);
    if (b.contains("A_doublings")) s.budgets.A_doublings = get<int>(b, "A_doublings", w);
    if (b.contains("q_tilde_max")) s.budgets.q_tilde_max = get<std::int64_t>(b, "q_tilde_max", w);
    if (b.contains("max_segments")) s.budgets.max_segments = get<std::size_t>(b, "max_segments", w);
    if (b.contains("stage_seconds")) s.budgets.stage_seconds = get<double>(b, "stage_seconds", w);
    if (b.contains("max_q")) s.budgets.max_q = get<int>(b, "max_q", w);
    require(s.budgets.A_doublings >= 0, w + ".A_doublings must be non-negative");
    require(s.budgets.stage_seconds > 0.0, w + ".stage_seconds must be positive");
  }
  if (j.contains("grid")) {
    const json& g = j["grid"];
    const std::string w = "config.grid";
    reject_unknown(g, {"nc", "nxi", "s2_lo", "s2_hi"}, w);
    s.grid.nc = get<int>(g, "nc", w);
    s.grid.nxi = get<int>(g, "nxi", w);
    s.grid.s2_lo = get<double>(g, "s2_lo", w);
    s.grid.s2_hi = get<double>(g, "s2_hi", w);
    require(s.grid.nc >= 1 && s.grid.nxi >= 1, w + ": nc and nxi must be positive");
    require(0.0 <= s.grid.s2_lo && s.grid.s2_lo < s.grid.s2_hi && s.grid.s2_hi <= 1.0,
            w + ": need 0 <= s2_lo < s2_hi <= 1");
  }
  if (j.contains("samples")) {
    const json& sm = j["samples"];
    const std::string w = "config.samples";
    reject_unknown(sm, {"distance", "ergodicity_starts", "mixing_line", "defect"}, w);
    if (sm.contains("distance")) s.distance_samples = get<std::uint64_t>(sm, "distance", w);
    if (sm.contains("ergodicity_starts"))
      s.ergodicity_starts = get<int>(sm, "ergodicity_starts", w);
    if (sm.contains("mixing_line")) s.mixing_line = get<int>(sm, "mixing_line", w);
    if (sm.contains("defect")) s.defect_samples = get<std::uint64_t>(sm, "defect", w);
    const int side = static_cast<int>(std::lround(std::cbrt(s.ergodicity_starts)));
    require(side >= 1 && side * side * side == s.ergodicity_starts,
            w + ".ergodicity_starts must be a perfect cube");
    require(s.mixing_line >= 100, w + ".mixing_line must be at least 100");
    require(s.distance_samples >= 4, w + ".distance must be at least 4");
  }
  if (j.contains("correlation")) {
    const json& cr = j["correlation"];
    const std::string w = "config.correlation";
    reject_unknown(cr, {"pairs", "multiples", "samples"}, w);
    CorrelationOptions co;
    if (cr.contains("pairs")) co.pairs = get<int>(cr, "pairs", w);
    if (cr.contains("multiples")) co.multiples = get<int>(cr, "multiples", w);
    if (cr.contains("samples")) co.samples = get<std::uint64_t>(cr, "samples", w);
    require(co.pairs >= 1 && co.multiples >= 1 && co.samples >= 2, w + ": values too small");
    c.correlation = co;
  }
  if (j.contains("output_dir")) c.output_dir = get<std::string>(j, "output_dir", "config");
  return c;
}

ScheduleConfig load_schedule_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_schedule_config(ss.str());
}

// ---- schedule ----

int exit_code_for(const std::vector<StageLedgerRow>& ledger) {
  bool premise = false, budget = false, all = !ledger.empty();
  for (const auto& r : ledger) {
    premise |= !r.premise_pass && r.status == StageStatus::PremiseFailure;
    budget |= r.budget_exhausted || r.status == StageStatus::BudgetFailure;
    all &= r.status == StageStatus::Pass && (!r.convergence || r.convergence->pass);
  }
  if (premise) return 2;
  if (budget) return 3;
  return all ? 0 : 1;
}

namespace {

std::vector<std::pair<ProductSet, ProductSet>> correlation_pairs(int n, std::uint64_t seed) {
  // Random boxes with sides in [0.2, 0.6] of each coordinate range.
  auto rng = chunk_rng(seed, 13, 0);
  auto box = [&] {
    ProductSet s;
    const double l1 = 0.2 + 0.4 * uniform01(rng), l2 = 0.2 + 0.4 * uniform01(rng);
    s.theta1 = AngleInterval{uniform01(rng), l1};
    s.theta2 = AngleInterval{uniform01(rng), l2};
    const double w = 0.2 + 0.4 * uniform01(rng);
    const double lo = (1.0 - w) * uniform01(rng);
    s.xi = {XiInterval::from_sin2(lo, lo + w)};
    return s;
  };
  std::vector<std::pair<ProductSet, ProductSet>> out;
  for (int i = 0; i < n; ++i) {
    ProductSet a = box();
    out.emplace_back(a, box());
  }
  return out;
}

void write_stage_outputs(const std::filesystem::path& dir, const StageResult& st) {
  const std::string tag = "stage" + std::to_string(st.row.stage);
  write_certificate_csv(st.build.certificate, (dir / (tag + "_certificate.csv")).string());
  write_ergodicity_csv(st.premise, (dir / (tag + "_ergodicity.csv")).string());
  if (!st.mixing.rows.empty()) write_mixing_csv(st.mixing, (dir / (tag + "_mixing.csv")).string());
  if (st.build.certified())
    write_decomposition_csv(st.build.eta, (dir / (tag + "_eta.csv")).string());
  if (std::isfinite(st.build.A) && st.build.m_tilde > 0 && st.row.q_prime > 0) {
    const GridSpec& gs = st.build.eta.spec;
    const auto pts = decomposition_grid(gs.nc > 0 ? gs : GridSpec{1, 1, 0.45, 0.55});
    const StretchProfile pr = stretch_profile(st.build.params(pts.front().first, pts.front().second));
    const double qp = static_cast<double>(st.row.q_prime);
    write_profile_svg(pr, 0.0, 2.0 / (qp * qp), (dir / (tag + "_profile.svg")).string());
  }
}

}  // namespace

ScheduleResult run_schedule(const ScheduleConfig& cfg) {
  ScheduleResult res;
  std::filesystem::path dir;
  if (!cfg.output_dir.empty()) {
    dir = cfg.output_dir;
    std::filesystem::create_directories(dir);
  }
  const double gamma = cfg.stage.gamma;
  double eps = initial_epsilon(cfg.eps_bar, gamma);
  RationalRotation alpha = cfg.alpha;
  MapExpr V = MapExpr::identity();
  MapExpr F_prev = MapExpr::rotation(alpha);  // F_0
  std::int64_t m = 1;

  for (int n = 0; n < cfg.n_stages; ++n) {
    const double L = cfg.L[std::min<std::size_t>(n, cfg.L.size() - 1)];
    StageOptions opts = cfg.stage;
    opts.seed = cfg.stage.seed + 7919ULL * static_cast<std::uint64_t>(n);
    StageResult st;
    try {
      st = inductive_step(V, alpha, eps, m, cfg.provider, L, opts, n);
    } catch (const std::exception& e) {
      StageLedgerRow row;
      row.stage = n;
      row.q = static_cast<int>(alpha.q);
      row.alpha = alpha;
      row.eps = eps;
      row.m_prev = m;
      row.gamma = gamma;
      row.L = L;
      row.provider = cfg.provider.name;
      row.status = StageStatus::BudgetFailure;
      row.budget_exhausted = true;
      row.diagnostic = std::string("stage error: ") + e.what();
      res.ledger.push_back(row);
      res.aborted = true;
      break;
    }

    // Stage 0 measures |F_1 - F_0| against eps_0; later stages the Cauchy tail
    // between consecutive F at the previous m.
    if (!std::isfinite(st.build.A)) {
      const double inf = std::numeric_limits<double>::infinity();
      st.row.convergence = ConvergenceVerdict{inf, inf, n == 0 ? eps : 0.0, false};
    } else if (n == 0) {
      const NormEstimate ne = sampled_distance(st.F, F_prev, opts.delta_radius,
                                               opts.distance_samples, opts.seed + 17);
      st.row.convergence = ConvergenceVerdict{ne.value, ne.real_value, eps, ne.value < eps};
    } else {
      const StageLedgerRow& prev = res.ledger.back();
      st.row.convergence = convergence_check(st.F, F_prev, m, prev.eps, prev.q, gamma,
                                             opts.delta_radius, opts.distance_samples,
                                             opts.seed + 17);
    }
    if (st.row.status == StageStatus::Pass && !st.row.convergence->pass) {
      st.row.status = StageStatus::VerdictFailure;
      st.row.diagnostic = "convergence: " + fmt(st.row.convergence->value) + " vs " +
                          fmt(st.row.convergence->threshold);
    }

    if (!dir.empty()) write_stage_outputs(dir, st);
    res.ledger.push_back(st.row);
    const bool stop = st.row.budget_exhausted;
    const int q_n = st.row.q;
    F_prev = st.F;
    V = st.V_next;
    alpha = st.alpha_next;
    m = st.row.m;
    res.stages.push_back(std::move(st));
    if (stop) {
      res.aborted = n + 1 < cfg.n_stages;
      break;
    }
    eps = epsilon_schedule(eps, q_n, gamma);
  }

  if (cfg.correlation && !res.stages.empty()) {
    const auto& co = *cfg.correlation;
    std::vector<std::int64_t> ms{0};
    const std::int64_t base = std::max<std::int64_t>(1, res.ledger.back().m);
    for (int k = 1; k <= co.multiples; ++k) ms.push_back(base * k);
    const CorrelationTable table = correlation_table(
        res.stages.back().F, correlation_pairs(co.pairs, cfg.stage.seed), ms, co.samples,
        cfg.stage.seed);
    if (!dir.empty()) {
      write_correlation_csv(table, (dir / "correlation.csv").string());
      write_correlation_svg(table, (dir / "correlation.svg").string());
    }
  }
  if (!dir.empty()) write_ledger_csv(res.ledger, (dir / "ledger.csv").string());
  res.exit_code = exit_code_for(res.ledger);
  return res;
}

void write_ledger_csv(const std::vector<StageLedgerRow>& ledger, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  out << "stage,q,q_prime,L,log_A,alpha,alpha_prime,alpha_next,m_prev,m,eps,gamma,provider,"
         "premise_deviation,premise_threshold,premise_distance,premise_pass,"
         "distance_i_value,distance_i_real,distance_i_threshold,distance_i_pass,"
         "mixing_ii_deviation,mixing_ii_threshold,mixing_ii_pass,mixing_ii_on_certified,"
         "convergence_value,convergence_real,convergence_threshold,convergence_pass,"
         "cell_defect,status,budget_exhausted,diagnostic\n";
  auto quoted = [](std::string s) {
    std::string o = "\"";
    for (char c : s) o += c == '"' ? std::string("\"\"") : std::string(1, c);
    return o + "\"";
  };
  for (const auto& r : ledger) {
    const double logA = r.A > 0.0L ? static_cast<double>(std::log(r.A)) : 0.0;
    out << r.stage << ',' << r.q << ',' << r.q_prime << ',' << r.L << ',' << logA << ','
        << r.alpha.to_string() << ',' << r.alpha_prime.to_string() << ','
        << r.alpha_next.to_string() << ',' << r.m_prev << ',' << r.m << ',' << r.eps << ','
        << r.gamma << ',' << quoted(r.provider) << ',' << r.premise_deviation << ','
        << r.premise_threshold << ',' << r.premise_distance << ',' << r.premise_pass << ','
        << r.distance_i_value << ',' << r.distance_i_real << ',' << r.distance_i_threshold << ','
        << r.distance_i_pass << ',' << r.mixing_ii_deviation << ',' << r.mixing_ii_threshold
        << ',' << r.mixing_ii_pass << ',' << r.mixing_ii_on_certified << ',';
    if (r.convergence)
      out << r.convergence->value << ',' << r.convergence->real_value << ','
          << r.convergence->threshold << ',' << r.convergence->pass << ',';
    else
      out << ",,,,";
    out << r.cell_defect << ',' << to_string(r.status) << ',' << r.budget_exhausted << ','
        << quoted(r.diagnostic) << '\n';
  }
}

}  // namespace abc
