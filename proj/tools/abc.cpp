// abc: command line front end for the core library.
#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "abc/abc_driver.hpp"
#include "abc/decompositions.hpp"
#include "abc/hopf_geometry.hpp"
#include "abc/parallel.hpp"
#include "abc/report_io.hpp"
#include "abc/sphere_maps.hpp"
#include "abc/statistics.hpp"
#include "abc/stretching.hpp"

using namespace abc;

namespace {

GridSpec parse_grid(const std::string& s, int q) {
  if (s.empty()) return default_grid(q);
  GridSpec g;
  char c1, c2, c3;
  std::istringstream in(s);
  if (!(in >> g.nc >> c1 >> g.nxi >> c2 >> g.s2_lo >> c3 >> g.s2_hi) || c1 != ',' || c2 != ',' ||
      c3 != ',')
    throw CLI::ValidationError("--grid", "expected nc,nxi,s2_lo,s2_hi");
  return g;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '"') {
      if (quoted && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else {
        quoted = !quoted;
      }
    } else if (c == ',' && !quoted) {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

int verify_maps(int q, double A, int n, std::uint64_t seed) {
  const TwistParams tp{q, static_cast<long double>(A)};
  const TwistParams tm{q, -static_cast<long double>(A)};
  const RationalRotation rot = RationalRotation::make(3, q);
  double det = 0.0, inv = 0.0, comm = 0.0, conj = 0.0;
  for (const HopfPoint& p : sample_points(seed, 0, static_cast<std::size_t>(n))) {
    const CartesianPoint z = hopf_to_cartesian(p);
    det = std::max(det, std::abs(twist_jacobian_det(tp, p) - 1.0));
    inv = std::max(inv, distance(twist(tm, twist(tp, z)), z));
    comm = std::max(comm, distance(twist(tp, hopf_to_cartesian(rotate(rot, p))),
                                   hopf_to_cartesian(rotate(rot, twist(tp, p)))));
    for (int j = 1; j <= 3; ++j)
      conj = std::max(conj, distance(hopf_to_cartesian(conjugated_rotation(q, A, rot, j, p)),
                                     hopf_to_cartesian(rotate(rot, p, j))));
  }
  std::cout << "check,value,threshold,pass\n";
  auto line = [](const char* name, double v, double t) {
    std::cout << name << ',' << v << ',' << t << ',' << (v <= t ? "1" : "0") << '\n';
    return v <= t;
  };
  bool ok = line("jacobian_det_minus_1", det, 1e-13);
  ok &= line("inverse_roundtrip", inv, 1e-12);
  ok &= line("commutes_with_rotation", comm, 1e-12);
  ok &= line("conjugated_rotation", conj, 1e-12);
  return ok ? 0 : 1;
}

int measure(int q, std::uint64_t n, std::uint64_t seed) {
  std::cout.precision(17);
  std::cout << "quantity,value,exact\n";
  std::cout << "mu_sphere," << product_measure(ProductSet::full_sphere()) << ',' << kSphereVolume
            << '\n';
  std::cout << "mu_cell," << Cell{q, 1, 1, 1}.measure() << ',' << kSphereVolume / (double(q) * q * q)
            << '\n';
  const ExcludedSet M{q, 0.0};
  const McEstimate mc =
      mc_measure([&](const HopfPoint& p) { return M.contains(p.theta1); }, n, seed);
  std::cout << "lambda_M," << M.measure() << ',' << 2.0 / std::sqrt(double(q)) << '\n';
  // theta1 is uniform under the normalized volume.
  std::cout << "lambda_M_mc," << normalized(mc.estimate) << ',' << normalized(mc.std_error) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Approximation by conjugation on S^3: maps, decompositions and statistics"};
  app.require_subcommand(1);
  int rc = 0;

  // verify-maps
  auto* vm = app.add_subcommand("verify-maps", "Sampled identities of the twist g_{q,A}");
  int vm_q = 16, vm_n = 10000;
  double vm_A = 1000.0;
  std::uint64_t vm_seed = 1;
  vm->add_option("--q", vm_q, "twist order")->check(CLI::PositiveNumber);
  vm->add_option("--A", vm_A, "twist amplitude");
  vm->add_option("--points", vm_n, "sample points")->check(CLI::PositiveNumber);
  vm->add_option("--seed", vm_seed);
  vm->callback([&] { rc = verify_maps(vm_q, vm_A, vm_n, vm_seed); });

  // measure
  auto* me = app.add_subcommand("measure", "Exact and Monte Carlo measures");
  int me_q = 16;
  std::uint64_t me_n = 1'000'000, me_seed = 1;
  me->add_option("--q", me_q)->check(CLI::Range(16, 1 << 20));
  me->add_option("--samples", me_n);
  me->add_option("--seed", me_seed);
  me->callback([&] { rc = measure(me_q, me_n, me_seed); });

  // stretch-search
  auto* ss = app.add_subcommand("stretch-search", "Build a stretch-certified partial decomposition");
  BuildConfig bc;
  std::string ss_omega = "3/16", ss_grid, ss_out = "stretch_out", ss_U;
  double A0 = 1.0;
  ss->add_option("--q", bc.q)->check(CLI::Range(16, 1 << 16));
  ss->add_option("--rho", bc.rho);
  ss->add_option("--delta", bc.delta);
  ss->add_option("--omega", ss_omega, "rotation p/q");
  ss->add_option("--l", bc.l);
  ss->add_option("--U", ss_U, "map expression for U (default identity)");
  ss->add_option("--grid", ss_grid, "nc,nxi,s2_lo,s2_hi");
  ss->add_option("--A0-scale", A0);
  ss->add_option("--A-doublings", bc.max_A_doublings);
  ss->add_option("--q-tilde0", bc.q_tilde0);
  ss->add_option("--q-tilde-max", bc.q_tilde_max);
  ss->add_option("--max-segments", bc.max_segments);
  ss->add_option("--direct-stride", bc.direct_stride);
  ss->add_option("--seed", bc.seed);
  ss->add_option("--out", ss_out, "output directory");
  ss->callback([&] {
    bc.omega = RationalRotation::parse(ss_omega);
    bc.grid = parse_grid(ss_grid, bc.q);
    bc.A0_scale = A0;
    if (!ss_U.empty()) bc.U = MapExpr::parse(ss_U);
    const BuildResult r = build_stretch_certified_decomposition(bc);
    std::filesystem::create_directories(ss_out);
    write_certificate_csv(r.certificate, ss_out + "/certificate.csv");
    if (!r.eta.grid.empty()) write_decomposition_csv(r.eta, ss_out + "/eta.csv");
    std::cout << "status " << (r.certified() ? "certified" : "budget_exhausted") << "\nlog_A "
              << static_cast<double>(std::log(r.A)) << "\nomega_tilde " << r.omega_tilde.to_string()
              << "\nm_tilde " << r.m_tilde << "\nsegments " << r.eta.segment_count()
              << "\nfailing_segments " << r.failing_segments << '\n';
    for (int i = 0; i < 4; ++i) std::cout << "conclusion_" << i + 1 << ' ' << r.conclusion[i] << '\n';
    if (!r.diagnostic.empty()) std::cout << "diagnostic " << r.diagnostic << '\n';
    rc = r.certified() ? 0 : 3;
  });

  // ergodicity
  auto* er = app.add_subcommand("ergodicity", "(q, eps, N)-ergodicity check of a map");
  std::string er_map = "rot(3/16)", er_out;
  int er_q = 16, er_starts = 64;
  double er_eps = 0.1;
  std::int64_t er_N = 0;
  std::uint64_t er_seed = 1;
  er->add_option("--map", er_map);
  er->add_option("--q", er_q)->check(CLI::Range(16, 256));
  er->add_option("--eps", er_eps);
  er->add_option("--N", er_N, "orbit length (default q^3)");
  er->add_option("--starts", er_starts, "a perfect cube");
  er->add_option("--seed", er_seed);
  er->add_option("--out", er_out, "CSV path");
  er->callback([&] {
    const std::int64_t N = er_N > 0 ? er_N : std::int64_t{er_q} * er_q * er_q;
    const ErgodicityReport r = check_approx_ergodic(MapExpr::parse(er_map), er_q, er_eps, N,
                                                    stratified_starts(er_starts, er_seed));
    if (!er_out.empty()) write_ergodicity_csv(r, er_out);
    std::cout << "worst_deviation " << r.worst_deviation << "\nthreshold " << r.threshold
              << "\npass " << r.pass << "\nscope " << r.scope << '\n';
    rc = r.pass ? 0 : 1;
  });

  // mixing
  auto* mx = app.add_subcommand("mixing", "(q, q', eps, m, H)-mixing check over a decomposition");
  std::string mx_F = "rot(3/16)", mx_H = "id", mx_dec, mx_grid, mx_out;
  int mx_q = 16, mx_qp = 32, mx_line = 100;
  double mx_eps = 0.1;
  std::int64_t mx_m = 1;
  mx->add_option("--F", mx_F);
  mx->add_option("--H", mx_H);
  mx->add_option("--q", mx_q)->check(CLI::Range(16, 256));
  mx->add_option("--qp", mx_qp)->check(CLI::Range(16, 1 << 16));
  mx->add_option("--eps", mx_eps);
  mx->add_option("--m", mx_m);
  mx->add_option("--line", mx_line)->check(CLI::Range(100, 1 << 20));
  mx->add_option("--decomposition", mx_dec, "CSV from stretch-search (default uniform)");
  mx->add_option("--grid", mx_grid, "nc,nxi,s2_lo,s2_hi for the uniform decomposition");
  mx->add_option("--out", mx_out, "CSV path");
  mx->callback([&] {
    const PartialDecomposition d = mx_dec.empty()
                                       ? uniform_decomposition(mx_qp, parse_grid(mx_grid, mx_qp))
                                       : read_decomposition_csv(mx_dec, mx_qp);
    const MixingReport r = check_approx_mixing(MapExpr::parse(mx_F), MapExpr::parse(mx_H), mx_q,
                                               mx_qp, mx_eps, mx_m, d, mx_line);
    if (!mx_out.empty()) write_mixing_csv(r, mx_out);
    std::cout << "segments " << r.segments << "\nworst_deviation " << r.worst_deviation
              << "\nthreshold " << r.threshold << "\nquadrature_bound " << r.quadrature_bound
              << "\nfailing_pairs " << r.failing_pairs << "\npass " << r.pass << '\n';
    rc = r.pass ? 0 : 1;
  });

  // correlate
  auto* co = app.add_subcommand("correlate", "Correlation table mu(A cap F^-m B) - mu(A) mu(B)");
  std::string co_map = "rot(3/16)", co_out = "correlation_out";
  std::vector<std::int64_t> co_ms{0, 1, 2, 4, 8};
  int co_q = 16, co_pairs = 4;
  std::uint64_t co_n = 100'000, co_seed = 1;
  co->add_option("--map", co_map);
  co->add_option("--m", co_ms, "iterates")->delimiter(',');
  co->add_option("--q", co_q, "pairs are random cells of C_q")->check(CLI::Range(16, 1 << 16));
  co->add_option("--pairs", co_pairs)->check(CLI::PositiveNumber);
  co->add_option("--samples", co_n);
  co->add_option("--seed", co_seed);
  co->add_option("--out", co_out, "output directory");
  co->callback([&] {
    std::mt19937_64 rng = chunk_rng(co_seed, 13, 0);
    std::uniform_int_distribution<int> pick(1, co_q - 2);
    std::vector<std::pair<ProductSet, ProductSet>> pairs;
    for (int i = 0; i < co_pairs; ++i) {
      const Cell a{co_q, pick(rng), pick(rng), pick(rng)};
      const Cell b{co_q, pick(rng), pick(rng), pick(rng)};
      pairs.emplace_back(a.as_product_set(), b.as_product_set());
    }
    const CorrelationTable t = correlation_table(MapExpr::parse(co_map), pairs, co_ms, co_n, co_seed);
    std::filesystem::create_directories(co_out);
    write_correlation_csv(t, co_out + "/correlation.csv");
    write_correlation_svg(t, co_out + "/correlation.svg");
    std::cout << "m,pair,defect,std_error\n";
    for (const auto& r : t.rows)
      std::cout << r.m << ',' << r.a_id << ',' << r.defect << ',' << r.std_error << '\n';
  });

  // run-schedule
  auto* rs = app.add_subcommand("run-schedule", "Run the multi-stage schedule from a JSON config");
  std::string rs_config, rs_out;
  rs->add_option("config", rs_config, "JSON config")->required()->check(CLI::ExistingFile);
  rs->add_option("--out", rs_out, "output directory (overrides output_dir)");
  rs->callback([&] {
    ScheduleConfig cfg = load_schedule_config(rs_config);
    if (!rs_out.empty()) cfg.output_dir = rs_out;
    const ScheduleResult r = run_schedule(cfg);
    for (const auto& row : r.ledger)
      std::cout << "stage " << row.stage << ": " << to_string(row.status) << " (q = " << row.q
                << ", q' = " << row.q_prime << ", m = " << row.m << ", eps = " << row.eps << ")"
                << (row.diagnostic.empty() ? "" : " " + row.diagnostic) << '\n';
    if (r.aborted) std::cout << "schedule aborted\n";
    std::cout << "exit code " << r.exit_code << '\n';
    rc = r.exit_code;
  });

  // report
  auto* rp = app.add_subcommand("report", "Summarize a run directory and redraw its plots");
  std::string rp_dir;
  rp->add_option("dir", rp_dir, "run-schedule output directory")->required()->check(CLI::ExistingDirectory);
  rp->callback([&] {
    const std::filesystem::path dir = rp_dir;
    std::ifstream ledger(dir / "ledger.csv");
    if (!ledger) throw std::runtime_error("no ledger.csv in " + rp_dir);
    std::string line;
    std::getline(ledger, line);
    const auto header = split_csv_line(line);
    auto col = [&](const char* name) {
      return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
    };
    const char* shown[] = {"stage", "q", "q_prime", "m", "eps", "premise_pass", "distance_i_pass",
                           "mixing_ii_pass", "convergence_pass", "status"};
    for (const char* s : shown) std::cout << s << (s == shown[9] ? '\n' : '\t');
    while (std::getline(ledger, line)) {
      const auto f = split_csv_line(line);
      for (const char* s : shown) {
        const std::size_t i = col(s);
        std::cout << (i < f.size() ? f[i] : "") << (s == shown[9] ? '\n' : '\t');
      }
    }
    std::ifstream corr(dir / "correlation.csv");
    if (corr) {
      CorrelationTable t;
      std::getline(corr, line);
      while (std::getline(corr, line)) {
        const auto f = split_csv_line(line);
        if (f.size() < 7) continue;
        t.rows.push_back({std::stoll(f[0]), std::stoul(f[1]), std::stoul(f[2]), std::stod(f[3]),
                          std::stod(f[4]), std::stod(f[5]), std::stod(f[6])});
      }
      write_correlation_svg(t, (dir / "correlation.svg").string());
      std::cout << "redrew correlation.svg (" << t.rows.size() << " rows)\n";
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 64;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return rc;
}
