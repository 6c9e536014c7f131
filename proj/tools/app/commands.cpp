#include "app/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "app/acceptance.hpp"
#include "app/config.hpp"
#include "app/output.hpp"
#include "mfg_lqg/errors.hpp"
#include "mfg_lqg/nash_gap.hpp"
#include "mfg_lqg/parallel.hpp"

namespace mfg_lqg::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Shared setup and manifest bookkeeping for one command run.
class Run {
 public:
  Run(std::string command, const CommandOptions& opts)
      : command_(std::move(command)), opts_(opts), start_(Clock::now()) {
    const auto t0 = Clock::now();
    cfg_ = load_config(opts.config, opts.seed);
    timings_["load_config"] = seconds_since(t0);
    fs::create_directories(opts.out);
  }

  RunConfig& cfg() { return cfg_; }
  fs::path file(const std::string& name) const { return opts_.out / name; }

  template <class F>
  auto timed(const std::string& stage, F&& f) {
    const auto t0 = Clock::now();
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      timings_[stage] = seconds_since(t0);
    } else {
      auto result = f();
      timings_[stage] = seconds_since(t0);
      return result;
    }
  }

  void write_manifest() {
    timings_["total"] = seconds_since(start_);
    json m;
    m["command"] = command_;
    m["config_path"] = opts_.config.string();
    m["config_hash"] = hex64(config_hash(cfg_.document));
    m["master_seed"] = cfg_.population.master_seed;
    m["version"] = kVersion;
    m["output_dir"] = opts_.out.string();
    m["threads"] = resolve_threads(opts_.threads);
    m["timings_s"] = timings_;
    write_json(file("manifest.json"), m);
  }

 private:
  std::string command_;
  CommandOptions opts_;
  Clock::time_point start_;
  RunConfig cfg_;
  json timings_ = json::object();
};

json report_json(const ValidationReport& r) {
  json checks = json::array();
  for (const auto& c : r.checks) {
    checks.push_back({{"name", c.name},
                      {"passed", c.passed},
                      {"detail", c.detail},
                      {"value", c.value}});
  }
  return {{"passed", r.passed()}, {"checks", checks}, {"warnings", r.warnings}};
}

json hautus_json(const HautusReport& r) {
  json entries = json::array();
  for (const auto& e : r.entries) {
    entries.push_back({{"eigenvalue_re", e.eigenvalue.real()},
                       {"eigenvalue_im", e.eigenvalue.imag()},
                       {"rank", e.rank},
                       {"passed", e.passed}});
  }
  return {{"passed", r.passed}, {"entries", entries}};
}

std::string type_label(int k) { return "type" + std::to_string(k + 1); }

// Long-format dump of a matrix-valued grid function.
void write_grid(CsvWriter& csv, const std::string& label,
                const GridFunction& gf) {
  const TimeGrid& grid = gf.grid();
  for (int j = 0; j < grid.num_nodes(); ++j) {
    const MatrixXd& m = gf[j];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        csv.row(label, j, grid.node(j), r, c, m(r, c));
      }
    }
  }
}

void write_matrix(CsvWriter& csv, const std::string& label, const MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) csv.row(label, r, c, m(r, c));
  }
}

const std::vector<std::string> kGridHeader = {"name", "node", "t", "row",
                                              "col", "value"};
const std::vector<std::string> kMatrixHeader = {"name", "row", "col", "value"};

LqgProblem require_lqg(const RunConfig& cfg, const char* command) {
  if (!cfg.lqg) {
    throw ConfigError(std::string(command) + " needs an `lqg` section");
  }
  return *cfg.lqg;
}

MmMfgProblem require_game(const RunConfig& cfg, const char* command) {
  if (!cfg.game) {
    throw ConfigError(std::string(command) +
                      " needs a game (`major` and `minor_types`)");
  }
  return *cfg.game;
}

VectorXd constant_drift(const GridFunction& b, const std::string& name) {
  for (int j = 1; j < b.grid().num_nodes(); ++j) {
    if (b[j] != b[0]) {
      throw ConfigError("infinite horizon requires constant " + name);
    }
  }
  return b[0];
}

void write_agent_solution(CsvWriter& pi, CsvWriter& s, CsvWriter& gains,
                          const std::string& who, const AgentSolution& a) {
  write_grid(pi, who, a.Pi);
  write_grid(s, who, a.s);
  write_grid(gains, who + ":K", a.K);
  write_grid(gains, who + ":kff", a.kff);
}

void write_stationary_agent(CsvWriter& pi, CsvWriter& s, CsvWriter& gains,
                            const std::string& who, const StationaryAgent& a) {
  write_matrix(pi, who, a.Pi);
  write_matrix(s, who, a.s);
  write_matrix(gains, who + ":K", a.K);
  write_matrix(gains, who + ":kff", a.kff);
}

void write_residuals(const fs::path& path, const std::vector<double>& res) {
  CsvWriter csv(path, {"iteration", "residual"});
  for (std::size_t i = 0; i < res.size(); ++i) {
    csv.row(static_cast<int>(i + 1), res[i]);
  }
}

MfgSolution solve_finite_logged(Run& run, const MmMfgProblem& p,
                                std::ostream& log) {
  try {
    MfgSolution sol = run.timed(
        "solve", [&] { return solve_consistency_finite(p, run.cfg().solver); });
    log << "fixed point converged in " << sol.report.iterations
        << " iterations (residual " << fmt(sol.report.residuals.back())
        << ")\n";
    return sol;
  } catch (const FixedPointFailure& e) {
    write_residuals(run.file("residuals.csv"), e.residuals());
    throw;
  }
}

}  // namespace

void cmd_solve_lqg(const CommandOptions& opts, std::ostream& log) {
  Run run("solve-lqg", opts);
  const LqgProblem p = require_lqg(run.cfg(), "solve-lqg");
  json summary;
  summary["command"] = "solve-lqg";
  summary["validation"] = report_json(validate_convexity(p));

  if (run.cfg().infinite_horizon) {
    const VectorXd b = constant_drift(p.b, "b");
    const StabilityReport stab = detectability_stabilizability(p);
    summary["stabilizable"] = hautus_json(stab.stabilizable);
    summary["detectable"] = hautus_json(stab.detectable);
    const StationaryLqgSolution sol =
        run.timed("solve", [&] { return solve_infinite_horizon(p, b); });
    CsvWriter pi(run.file("pi.csv"), kMatrixHeader);
    CsvWriter s(run.file("s.csv"), kMatrixHeader);
    CsvWriter gains(run.file("gains.csv"), kMatrixHeader);
    write_matrix(pi, "Pi", sol.Pi);
    write_matrix(s, "s", sol.s);
    write_matrix(gains, "K", sol.K);
    write_matrix(gains, "kff", sol.kff);
    summary["horizon"] = "infinite";
    summary["rho"] = p.rho;
    summary["Pi"] = to_json(sol.Pi);
    summary["s"] = to_json_vector(sol.s);
    summary["are_residual"] = sol.are_residual;
    log << "Pi = " << fmt(sol.Pi(0, 0)) << (sol.Pi.size() > 1 ? " ..." : "")
        << " (ARE residual " << fmt(sol.are_residual) << ")\n";
  } else {
    const LqgSolution sol =
        run.timed("solve", [&] { return solve_finite_horizon(p); });
    const double cost = run.timed("cost", [&] {
      return expected_cost(p, LinearLaw::from_solution(sol));
    });
    CsvWriter pi(run.file("pi.csv"), kGridHeader);
    CsvWriter s(run.file("s.csv"), kGridHeader);
    CsvWriter gains(run.file("gains.csv"), kGridHeader);
    write_grid(pi, "Pi", sol.Pi);
    write_grid(s, "s", sol.s);
    write_grid(gains, "K", sol.K);
    write_grid(gains, "kff", sol.kff);
    summary["horizon"] = "finite";
    summary["T"] = p.grid.t_end();
    summary["steps"] = p.grid.num_steps();
    summary["Pi0"] = to_json(sol.Pi[0]);
    summary["s0"] = to_json_vector(sol.s[0]);
    summary["cost"] = cost;
    log << "Pi(0) = " << fmt(sol.Pi[0](0, 0))
        << (sol.Pi[0].size() > 1 ? " ..." : "") << ", J(u*) = " << fmt(cost)
        << "\n";
  }
  write_json(run.file("summary.json"), summary);
  run.write_manifest();
}

void cmd_solve_mfg(const CommandOptions& opts, std::ostream& log) {
  Run run("solve-mfg", opts);
  const MmMfgProblem p = require_game(run.cfg(), "solve-mfg");
  const ValidationReport validation = validate_problem(p);
  for (const auto& w : validation.warnings) log << "warning: " << w << "\n";
  json summary;
  summary["command"] = "solve-mfg";
  summary["validation"] = report_json(validation);

  CsvWriter law_csv(run.file("law.csv"),
                    run.cfg().infinite_horizon ? kMatrixHeader : kGridHeader);
  CsvWriter pi(run.file("pi.csv"),
               run.cfg().infinite_horizon ? kMatrixHeader : kGridHeader);
  CsvWriter s(run.file("s.csv"),
              run.cfg().infinite_horizon ? kMatrixHeader : kGridHeader);
  CsvWriter gains(run.file("gains.csv"),
                  run.cfg().infinite_horizon ? kMatrixHeader : kGridHeader);

  if (run.cfg().infinite_horizon) {
    StationaryMfgSolution sol;
    try {
      sol = run.timed("solve", [&] {
        return solve_consistency_infinite(p, run.cfg().solver);
      });
    } catch (const FixedPointFailure& e) {
      write_residuals(run.file("residuals.csv"), e.residuals());
      throw;
    }
    write_residuals(run.file("residuals.csv"), sol.report.residuals);
    write_matrix(law_csv, "Abar", sol.Abar);
    write_matrix(law_csv, "Gbar", sol.Gbar);
    write_matrix(law_csv, "mbar", sol.mbar);
    write_stationary_agent(pi, s, gains, "major", sol.major);
    json are = {{"major", sol.major.are_residual}};
    for (int k = 0; k < p.K(); ++k) {
      write_stationary_agent(pi, s, gains, type_label(k), sol.minors[k]);
      are[type_label(k)] = sol.minors[k].are_residual;
    }
    summary["horizon"] = "infinite";
    summary["iterations"] = sol.report.iterations;
    summary["converged"] = sol.report.converged;
    summary["final_residual"] = sol.report.residuals.back();
    summary["are_residuals"] = are;
    summary["stability"] = report_json(stationary_stability_report(p, sol));
    log << "stationary fixed point converged in " << sol.report.iterations
        << " iterations\n";
  } else {
    const MfgSolution sol = solve_finite_logged(run, p, log);
    write_residuals(run.file("residuals.csv"), sol.report.residuals);
    write_grid(law_csv, "Abar", sol.law.Abar);
    write_grid(law_csv, "Gbar", sol.law.Gbar);
    write_grid(law_csv, "mbar", sol.law.mbar);
    write_agent_solution(pi, s, gains, "major", sol.major);

    // Terminal conditions against the extended terminal weights.
    const int last = p.grid.num_steps();
    const ExtendedMajorSystem major = build_extended_major(p, sol.law);
    json terminal = {{"major", sol.major.Pi[last] == major.G &&
                                   sol.major.s[last].isZero(0.0)}};
    for (int k = 0; k < p.K(); ++k) {
      write_agent_solution(pi, s, gains, type_label(k), sol.minors[k]);
      const ExtendedMinorSystem minor =
          build_extended_minor(p, k, major, sol.major.Pi, sol.major.s);
      terminal[type_label(k)] = sol.minors[k].Pi[last] == minor.G &&
                                sol.minors[k].s[last].isZero(0.0);
    }
    summary["horizon"] = "finite";
    summary["T"] = p.grid.t_end();
    summary["steps"] = p.grid.num_steps();
    summary["iterations"] = sol.report.iterations;
    summary["converged"] = sol.report.converged;
    summary["final_residual"] = sol.report.residuals.back();
    summary["terminal_conditions_exact"] = terminal;
  }
  write_json(run.file("summary.json"), summary);
  run.write_manifest();
}

void cmd_simulate(const CommandOptions& opts, std::ostream& log) {
  Run run("simulate", opts);
  const MmMfgProblem p = require_game(run.cfg(), "simulate");
  if (run.cfg().infinite_horizon) {
    throw UnsupportedError("simulate runs on the finite-horizon solution");
  }
  PopulationConfig pop = run.cfg().population;
  pop.threads = opts.threads;
  const MfgSolution sol = solve_finite_logged(run, p, log);
  const TrajectoryBundle bundle =
      run.timed("simulate", [&] { return simulate_population(p, sol, pop); });
  const Eigen::Index n = bundle.n, m = bundle.m;

  {
    const std::vector<GridFunction> emp = empirical_mean_field(bundle);
    CsvWriter csv(run.file("trajectories.csv"),
                  {"path", "node", "t", "agent", "kind", "component", "value"});
    const int paths = std::min<int>(run.cfg().write_paths, pop.num_paths);
    for (int path = 0; path < paths; ++path) {
      const PathTrajectory& tr = bundle.paths[path];
      for (int j = 0; j < p.grid.num_nodes(); ++j) {
        const double t = p.grid.node(j);
        for (Eigen::Index c = 0; c < n; ++c) {
          csv.row(path, j, t, "major", "state", c, tr.major(c, j));
        }
        for (Eigen::Index c = 0; c < m; ++c) {
          csv.row(path, j, t, "major", "control", c, tr.controls(c, j));
        }
        for (int i = 0; i < bundle.N; ++i) {
          const std::string who = "minor" + std::to_string(i + 1);
          for (Eigen::Index c = 0; c < n; ++c) {
            csv.row(path, j, t, who, "state", c, tr.minors(n * i + c, j));
          }
          for (Eigen::Index c = 0; c < m; ++c) {
            csv.row(path, j, t, who, "control", c,
                    tr.controls(m * (i + 1) + c, j));
          }
        }
        for (Eigen::Index c = 0; c < tr.xbar.rows(); ++c) {
          csv.row(path, j, t, "mean_field", "xbar", c, tr.xbar(c, j));
          csv.row(path, j, t, "population", "empirical", c, emp[path][j](c, 0));
        }
        for (Eigen::Index c = 0; c < n; ++c) {
          csv.row(path, j, t, "population", "average", c, tr.average(c, j));
        }
      }
    }
  }

  json summary;
  summary["command"] = "simulate";
  summary["N"] = pop.N;
  summary["num_paths"] = pop.num_paths;
  summary["master_seed"] = pop.master_seed;
  json types = json::array();
  for (int k : bundle.types) types.push_back(k + 1);
  summary["types"] = types;

  // Costs of the major and of the first minor of each type.
  std::vector<int> agents = {0};
  for (int k = 0; k < p.K(); ++k) {
    const auto it = std::find(bundle.types.begin(), bundle.types.end(), k);
    if (it != bundle.types.end()) {
      agents.push_back(static_cast<int>(it - bundle.types.begin()) + 1);
    }
  }
  const Eigen::Index joint_dim = n * (pop.N + 1) + p.nK();
  CsvWriter costs(run.file("costs.csv"),
                  {"agent", "method", "value", "std_error", "num_paths"});
  json cost_json = json::array();
  run.timed("costs", [&] {
    for (int a : agents) {
      std::vector<CostReport> reps = {finite_cost_monte_carlo(p, bundle, a)};
      if (joint_dim <= kMaxJointDim) {
        reps.push_back(expected_cost_exact(p, sol, pop, a));
      }
      for (const CostReport& r : reps) {
        const std::string who = a == 0 ? "major" : "minor" + std::to_string(a);
        costs.row(who, r.method, r.value, r.std_error, r.num_paths);
        cost_json.push_back({{"agent", who},
                             {"method", r.method},
                             {"value", r.value},
                             {"std_error", r.std_error}});
      }
    }
  });
  summary["costs"] = cost_json;

  if (!run.cfg().study_N.empty()) {
    PopulationConfig sc = pop;
    if (run.cfg().study_paths) sc.num_paths = *run.cfg().study_paths;
    const ConvergenceStudy study = run.timed("convergence_study", [&] {
      return mean_field_convergence_study(p, sol, run.cfg().study_N, sc);
    });
    CsvWriter csv(run.file("convergence.csv"), {"N", "rms"});
    json rows = json::array();
    for (const ConvergenceRow& r : study.rows) {
      csv.row(r.N, r.rms);
      rows.push_back({{"N", r.N}, {"rms", r.rms}});
    }
    summary["convergence_study"] = {{"rows", rows},
                                    {"num_paths", sc.num_paths},
                                    {"slope", study.slope},
                                    {"intercept", study.intercept}};
    log << "convergence slope " << fmt(study.slope) << "\n";
  }
  write_json(run.file("summary.json"), summary);
  run.write_manifest();
}

void cmd_nash_gap(const CommandOptions& opts, std::ostream& log) {
  Run run("nash-gap", opts);
  const MmMfgProblem p = require_game(run.cfg(), "nash-gap");
  if (run.cfg().infinite_horizon) {
    throw UnsupportedError("nash-gap runs on the finite-horizon solution");
  }
  PopulationConfig pop = run.cfg().population;
  pop.threads = opts.threads;
  const MfgSolution sol = solve_finite_logged(run, p, log);
  const std::vector<GapRow> rows = run.timed("gaps", [&] {
    return gap_vs_population(p, sol, run.cfg().gap_N, pop);
  });

  std::vector<std::string> header = {"N", "major"};
  for (int k = 0; k < p.K(); ++k) header.push_back(type_label(k));
  header.push_back("worst");
  CsvWriter csv(run.file("gaps.csv"), header);
  json table = json::array();
  bool nonnegative = true;
  for (const GapRow& r : rows) {
    std::vector<std::string> cells = {cell(r.N), fmt(r.major_gap)};
    json jr = {{"N", r.N}, {"major", r.major_gap}, {"worst", r.worst}};
    nonnegative = nonnegative && r.major_gap >= -1e-8;
    for (int k = 0; k < p.K(); ++k) {
      const double g = r.type_gaps[k];
      cells.push_back(std::isnan(g) ? "" : fmt(g));
      jr[type_label(k)] = std::isnan(g) ? json(nullptr) : json(g);
      nonnegative = nonnegative && (std::isnan(g) || g >= -1e-8);
    }
    cells.push_back(fmt(r.worst));
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      line += (i ? "," : "") + cells[i];
    }
    csv.row(line);
    table.push_back(jr);
    log << "N=" << r.N << " worst gap " << fmt(r.worst) << "\n";
  }
  write_json(run.file("summary.json"), {{"command", "nash-gap"},
                                        {"rows", table},
                                        {"all_nonnegative", nonnegative}});
  run.write_manifest();
}

int run_command(const std::string& name, const CommandOptions& opts,
                std::ostream& log, std::ostream& err) {
  try {
    if (name == "solve-lqg") {
      cmd_solve_lqg(opts, log);
    } else if (name == "solve-mfg") {
      cmd_solve_mfg(opts, log);
    } else if (name == "simulate") {
      cmd_simulate(opts, log);
    } else if (name == "nash-gap") {
      cmd_nash_gap(opts, log);
    } else {
      err << "unknown command " << name << "\n";
      return kExitConfig;
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const OutOfRangeError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UnsupportedError& e) {
    err << "unsupported: " << e.what() << "\n";
    return kExitConfig;
  } catch (const AssumptionViolation& e) {
    err << "assumption violated: " << e.what() << "\n";
    return kExitAssumption;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

int cmd_verify(const fs::path& out, const fs::path& fixture_dir, int threads,
               std::ostream& log) {
  fs::create_directories(out);
  AcceptanceOptions ao;
  ao.fixture_dir = fixture_dir;
  ao.threads = threads;
  ao.scratch_dir = out / "scratch";
  const std::vector<CriterionResult> results = run_acceptance(ao, &log);
  CsvWriter csv(out / "verify.csv", {"criterion", "name", "passed", "detail"});
  int failed = 0;
  for (const CriterionResult& r : results) {
    std::string quoted = "\"";
    for (char c : r.detail) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
    csv.row(r.id, r.name, r.passed ? "true" : "false", quoted + "\"");
    if (!r.passed) ++failed;
  }
  fs::remove_all(ao.scratch_dir);
  log << (results.size() - failed) << "/" << results.size()
      << " criteria passed\n";
  return std::min(failed, 125);
}

}  // namespace mfg_lqg::app
