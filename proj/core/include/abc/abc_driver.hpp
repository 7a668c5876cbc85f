#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "abc/decompositions.hpp"
#include "abc/sphere_maps.hpp"
#include "abc/statistics.hpp"
#include "abc/stretching.hpp"

namespace abc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 0.5 prev_q^{-3/2} min(prev_eps, gamma prev_eps).
double epsilon_schedule(double prev_eps, int prev_q, double gamma);
// min(eps_bar/4, gamma eps_bar/4).
double initial_epsilon(double eps_bar, double gamma);

struct ConvergenceVerdict {
  double value = 0.0;
  double real_value = 0.0;
  double threshold = 0.0;  // gamma eps_n q_n^{-3/2}
  bool pass = false;
};

// Sampled |F_proxy^{m_n} - F_n^{m_n}|_Delta against gamma eps_n q_n^{-3/2}.
ConvergenceVerdict convergence_check(const MapExpr& F_limit_proxy, const MapExpr& F_n,
                                     std::int64_t m_n, double eps_n, int q_n, double gamma,
                                     double delta, std::uint64_t samples, std::uint64_t seed);

// Stand-in for the conjugacy that makes rotations approximately ergodic. It supplies H and the
// next rotation alpha' = p'/q', where q' is the least multiple of q that exceeds
// q + L and is at least 2q, and p' is the first k p + j (j >= 1) coprime to q'.
struct ConjugacyProvider {
  enum class Kind { Identity, Catalog };
  Kind kind = Kind::Identity;
  MapExpr catalog;
  std::string name = "identity";

  struct Result {
    MapExpr H;
    RationalRotation alpha_prime;
  };

  static ConjugacyProvider identity();
  static ConjugacyProvider from_catalog(const MapExpr& H, std::string name = "catalog");
  Result provide(const RationalRotation& alpha, double L) const;
};

struct Budgets {
  int A_doublings = 40;
  std::int64_t q_tilde_max = std::int64_t{1} << 24;
  std::size_t max_segments = 20'000'000;
  double stage_seconds = 600.0;
  int max_q = 128;  // largest q whose cell family C_q is enumerated
};

struct StageOptions {
  double gamma = 1.0 / 64.0;
  double delta_radius = 1.25;
  GridSpec grid;  // nc == 0: 2 x 2 over the admissible band of q'
  int ergodicity_starts = 64;
  std::uint64_t distance_samples = 4096;
  int mixing_line = 100;
  std::uint64_t defect_samples = 100'000;
  std::int64_t q_tilde0 = 2001;
  std::size_t direct_stride = 1;
  Budgets budgets;
  std::optional<double> rho;    // default eps mu(B)
  std::optional<double> delta;  // default eps / 2
  std::uint64_t seed = 1;
};

enum class StageStatus { Pass, VerdictFailure, PremiseFailure, BudgetFailure };
const char* to_string(StageStatus s);

struct StageLedgerRow {
  int stage = 0;
  int q = 0;
  std::int64_t q_prime = 0;
  double L = 0.0;
  long double A = 0.0L;
  RationalRotation alpha;
  RationalRotation alpha_prime;
  RationalRotation alpha_next;
  std::int64_t m_prev = 0;
  std::int64_t m = 0;
  double eps = 0.0;
  double gamma = 0.0;
  std::string provider;
  double premise_deviation = 0.0, premise_threshold = 0.0;
  double premise_distance = 0.0;  // max_j |f^j - V^{-1} phi_alpha^j V|, recorded only
  bool premise_pass = false;
  double distance_i_value = 0.0, distance_i_real = 0.0, distance_i_threshold = 0.0;
  bool distance_i_pass = false;
  double mixing_ii_deviation = 0.0, mixing_ii_threshold = 0.0;
  bool mixing_ii_pass = false;
  bool mixing_ii_on_certified = false;  // false: measured on the uniform fallback decomposition
  std::optional<ConvergenceVerdict> convergence;
  double cell_defect = 0.0;  // relative to mu(B)
  StageStatus status = StageStatus::Pass;
  bool budget_exhausted = false;  // the schedule stops after this stage
  std::string diagnostic;
};

struct StageResult {
  MapExpr F;
  MapExpr H;
  MapExpr V_next;  // g_{q', A} o H o V
  RationalRotation alpha_next;
  double eps = 0.0;
  StageLedgerRow row;
  BuildResult build;
  ErgodicityReport premise;
  MixingReport mixing;
};

StageResult inductive_step(const MapExpr& V, const RationalRotation& alpha, double eps,
                           std::int64_t m, const ConjugacyProvider& provider, double L,
                           const StageOptions& opts, int stage_index = 0);

struct CorrelationOptions {
  int pairs = 4;
  int multiples = 3;
  std::uint64_t samples = 20'000;
};

struct ScheduleConfig {
  RationalRotation alpha{3, 16};
  double eps_bar = 0.4;
  int n_stages = 1;
  std::vector<double> L{0.0};  // last entry repeats
  ConjugacyProvider provider;
  StageOptions stage;
  std::optional<CorrelationOptions> correlation;
  std::string output_dir;  // empty: nothing written
};

// JSON config; unknown keys at any level raise ConfigError.
ScheduleConfig parse_schedule_config(const std::string& json_text);
ScheduleConfig load_schedule_config(const std::string& path);

struct ScheduleResult {
  std::vector<StageLedgerRow> ledger;
  std::vector<StageResult> stages;
  int exit_code = 0;
  bool aborted = false;
};

ScheduleResult run_schedule(const ScheduleConfig& cfg);

// 0 all verdicts pass, 2 any premise failure, 3 budget failure, 1 other failures.
// Premise failures take precedence over budget failures.
int exit_code_for(const std::vector<StageLedgerRow>& ledger);

void write_ledger_csv(const std::vector<StageLedgerRow>& ledger, const std::string& path);

}  // namespace abc
