#include "app/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <ostream>
#include <sstream>

#include "app/commands.hpp"
#include "app/config.hpp"
#include "app/output.hpp"
#include "mfg_lqg/errors.hpp"
#include "mfg_lqg/nash_gap.hpp"
#include "mfg_lqg/rng.hpp"

namespace mfg_lqg::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Collects sub-checks of one criterion.
struct Verdict {
  bool passed = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& note) {
    passed = passed && ok;
    notes.push_back(ok ? note : "FAILED " + note);
  }

  std::string detail() const {
    std::string out;
    for (const auto& n : notes) out += (out.empty() ? "" : "; ") + n;
    return out;
  }
};

class Fixtures {
 public:
  explicit Fixtures(fs::path dir) : dir_(std::move(dir)) {}

  fs::path path(const std::string& name) const { return dir_ / name; }

  json document(const std::string& name) const {
    std::ifstream in(path(name), std::ios::binary);
    if (!in) throw ConfigError("fixture `" + name + "` cannot be opened");
    try {
      return json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("fixture `" + name + "` is not valid JSON: " +
                        e.what());
    }
  }

  RunConfig load(const std::string& name,
                 const std::function<void(json&)>& edit = {}) const {
    json doc = document(name);
    if (edit) edit(doc);
    try {
      return parse_config(doc);
    } catch (const ConfigError& e) {
      throw ConfigError("fixture `" + name + "`: " + e.what());
    }
  }

  LqgProblem lqg(const std::string& name,
                 const std::function<void(json&)>& edit = {}) const {
    RunConfig cfg = load(name, edit);
    if (!cfg.lqg) throw ConfigError("fixture `" + name + "` is not an lqg problem");
    return *cfg.lqg;
  }

  RunConfig game(const std::string& name,
                 const std::function<void(json&)>& edit = {}) const {
    RunConfig cfg = load(name, edit);
    if (!cfg.game) throw ConfigError("fixture `" + name + "` is not a game");
    return cfg;
  }

 private:
  fs::path dir_;
};

double max_abs(const MatrixXd& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

GridFunction optimal_open_loop(const LqgProblem& p, const LqgSolution& sol) {
  const GridFunction x = closed_loop_mean(p, LinearLaw::from_solution(sol));
  GridFunction u(p.grid, p.control_dim(), 1);
  for (int j = 0; j < p.grid.num_nodes(); ++j) {
    u[j] = -sol.K[j] * x[j] - sol.kff[j];
  }
  return u;
}

GridFunction random_control(const TimeGrid& grid, Eigen::Index m,
                            const NoiseStream& rng, std::uint32_t draw) {
  GridFunction u(grid, m, 1);
  for (int j = 0; j < grid.num_nodes(); ++j) {
    rng.normals(static_cast<std::uint32_t>(j), 0, draw, u[j].data(),
                static_cast<int>(m));
  }
  return u;
}

GridFunction axpy(const GridFunction& x, double a, const GridFunction& y) {
  GridFunction out = x;
  for (int j = 0; j < x.grid().num_nodes(); ++j) out[j] = x[j] + a * y[j];
  return out;
}

// The game's agents taken alone: tracking costs in linear form.
LqgProblem standalone(const MmMfgProblem& p, int k) {
  LqgProblem lp;
  lp.grid = p.grid;
  lp.rho = p.rho;
  lp.x0 = VectorXd::Zero(p.n());
  auto fill = [&](const auto& a) {
    lp.A = a.A;
    lp.B = a.B;
    lp.b = a.b;
    lp.sigma = a.sigma;
    lp.Qhat = a.Qhat;
    lp.Q = a.Q;
    lp.N_cross = a.N;
    lp.R = a.R;
    lp.eta = a.Q * a.eta;
    lp.n_lin = a.N.transpose() * a.eta;
  };
  if (k < 0) {
    fill(p.major);
  } else {
    fill(p.minors[k]);
  }
  return lp;
}

double sup_block(const GridFunction& big, const GridFunction& small) {
  double err = 0.0;
  for (int j = 0; j < big.grid().num_nodes(); ++j) {
    err = std::max(err, max_abs(big[j].topLeftCorner(small.rows(), small.cols()) -
                                small[j]));
  }
  return err;
}

void set_horizon(json& doc, double t_end, int steps) {
  doc["horizon"] = {{"T", t_end}, {"steps", steps}};
}

// ---------------------------------------------------------------------------

Verdict scalar_riccati(const Fixtures& fx) {
  Verdict v;
  const LqgProblem p = fx.lqg("tanh_lqg.json");
  const auto t0 = Clock::now();
  const LqgSolution sol = solve_finite_horizon(p);
  const double secs = seconds_since(t0);
  const double err = std::abs(sol.Pi[0](0, 0) - std::tanh(p.grid.t_end()));
  v.check(err < 1e-6, "|Pi(0) - tanh(1)| = " + sci(err));
  v.check(secs < 0.1, "solve " + sci(secs) + " s");
  return v;
}

Verdict euler_equality(const Fixtures& fx) {
  Verdict v;
  const auto t0 = Clock::now();
  const LqgProblem p = fx.lqg("two_state_lqg.json");
  const LqgSolution sol = solve_finite_horizon(p);
  const GridFunction u_star = optimal_open_loop(p, sol);
  const Eigen::Index m = p.control_dim(), n = p.state_dim();
  const NoiseStream rng(2);

  double worst = 0.0;
  for (std::uint32_t i = 0; i < 20; ++i) {
    const GridFunction omega = random_control(p.grid, m, rng, i);
    worst = std::max(worst, std::abs(gateaux_derivative_det(p, u_star, omega)));
  }
  v.check(worst < 1e-6, "max |DJ(u*; w)| over 20 directions = " + sci(worst));

  constexpr double kEps = 1e-4;
  double worst_rel = 0.0;
  for (std::uint32_t i = 0; i < 5; ++i) {
    const GridFunction u = random_control(p.grid, m, rng, 100 + 2 * i);
    const GridFunction omega = random_control(p.grid, m, rng, 101 + 2 * i);
    const double plus =
        expected_cost(p, LinearLaw::open_loop(axpy(u, kEps, omega), n));
    const double minus =
        expected_cost(p, LinearLaw::open_loop(axpy(u, -kEps, omega), n));
    const double fd = (plus - minus) / (2 * kEps);
    const double dj = gateaux_derivative_det(p, u, omega);
    worst_rel = std::max(worst_rel, std::abs(dj - fd) / std::abs(fd));
  }
  v.check(worst_rel < 1e-5, "finite-difference rel. error " + sci(worst_rel));
  const double secs = seconds_since(t0);
  v.check(secs < 5.0, sci(secs) + " s");
  return v;
}

// J is quadratic in the interval values, so the Hessian and gradient follow
// exactly from cost evaluations at 0, e_i and e_i + e_j.
Verdict brute_force(const Fixtures& fx) {
  Verdict v;
  const auto t0 = Clock::now();
  const LqgProblem p = fx.lqg("brute_force_lqg.json");
  if (p.state_dim() != 1 || p.control_dim() != 1) {
    throw ConfigError("fixture `brute_force_lqg.json` must be scalar");
  }
  constexpr int kPieces = 20;
  const int per_piece = std::max(1, p.grid.num_steps() / kPieces);
  auto cost_of = [&](const VectorXd& c) {
    GridFunction u(p.grid, 1, 1);
    for (int j = 0; j < p.grid.num_nodes(); ++j) {
      u[j](0, 0) = c(std::min(j / per_piece, kPieces - 1));
    }
    return expected_cost(p, LinearLaw::open_loop(u, 1));
  };
  const double j0 = cost_of(VectorXd::Zero(kPieces));
  VectorXd single(kPieces);
  for (int i = 0; i < kPieces; ++i) single(i) = cost_of(VectorXd::Unit(kPieces, i));
  MatrixXd hess(kPieces, kPieces);
  for (int i = 0; i < kPieces; ++i) {
    for (int j = i; j < kPieces; ++j) {
      const VectorXd e = VectorXd::Unit(kPieces, i) + VectorXd::Unit(kPieces, j);
      hess(i, j) = hess(j, i) = cost_of(e) - single(i) - single(j) + j0;
    }
  }
  VectorXd grad(kPieces);
  for (int i = 0; i < kPieces; ++i) grad(i) = single(i) - j0 - 0.5 * hess(i, i);
  const double j_bf = cost_of(hess.ldlt().solve(-grad));
  const double j_star =
      expected_cost(p, LinearLaw::from_solution(solve_finite_horizon(p)));
  const double diff = j_bf - j_star;
  v.check(diff > -1e-9 && diff < 1e-3,
          "J_bf - J(u*) = " + sci(diff) + " (J(u*) = " + sci(j_star) + ")");
  const double secs = seconds_since(t0);
  v.check(secs < 30.0, sci(secs) + " s");
  return v;
}

Verdict terminal_conditions(const Fixtures& fx) {
  Verdict v;
  const RunConfig cfg = fx.game("toy_game.json");
  const MmMfgProblem& p = *cfg.game;
  const MfgSolution sol = solve_consistency_finite(p, cfg.solver);
  const int last = p.grid.num_steps();
  const ExtendedMajorSystem major = build_extended_major(p, sol.law);
  bool exact = sol.major.Pi[last] == major.G && sol.major.s[last].isZero(0.0);
  for (int k = 0; k < p.K(); ++k) {
    const ExtendedMinorSystem minor =
        build_extended_minor(p, k, major, sol.major.Pi, sol.major.s);
    exact = exact && sol.minors[k].Pi[last] == minor.G &&
            sol.minors[k].s[last].isZero(0.0);
  }
  v.check(exact, "Pi(T) = G and s(T) = 0 bit-exactly for the major and " +
                     std::to_string(p.K()) + " types");
  return v;
}

Verdict consistency(const Fixtures& fx) {
  Verdict v;
  {
    const RunConfig cfg = fx.game("toy_game.json");
    const auto t0 = Clock::now();
    const MfgSolution sol = solve_consistency_finite(*cfg.game, cfg.solver);
    const double secs = seconds_since(t0);
    const double res = sol.report.residuals.back();
    v.check(sol.report.converged && res < 1e-7,
            "toy residual " + sci(res) + " after " +
                std::to_string(sol.report.iterations) + " iterations");
    v.check(secs < 60.0, "toy solve " + sci(secs) + " s at M = " +
                             std::to_string(cfg.game->grid.num_steps()));
  }
  const RunConfig cfg = fx.game("decoupled_game.json");
  const MmMfgProblem& p = *cfg.game;
  const MfgSolution sol = solve_consistency_finite(p, cfg.solver);
  v.check(sol.report.iterations <= 2,
          "decoupled iterations " + std::to_string(sol.report.iterations));
  const LqgSolution major = solve_finite_horizon(standalone(p, -1));
  double err = std::max(sup_block(sol.major.Pi, major.Pi),
                        sup_block(sol.major.s, major.s));
  for (int k = 0; k < p.K(); ++k) {
    const LqgSolution minor = solve_finite_horizon(standalone(p, k));
    err = std::max({err, sup_block(sol.minors[k].Pi, minor.Pi),
                    sup_block(sol.minors[k].s, minor.s)});
  }
  v.check(err < 1e-8, "decoupled vs standalone blocks " + sci(err));
  return v;
}

Verdict convergence(const Fixtures& fx, int threads) {
  Verdict v;
  const auto t0 = Clock::now();
  const RunConfig cfg = fx.game("toy_game.json");
  const MfgSolution sol = solve_consistency_finite(*cfg.game, cfg.solver);
  PopulationConfig pop = cfg.population;
  pop.types.clear();
  pop.num_paths = 32;
  pop.threads = threads;
  const ConvergenceStudy study =
      mean_field_convergence_study(*cfg.game, sol, {16, 64, 256, 1024}, pop);
  std::string rows;
  for (const auto& r : study.rows) {
    rows += (rows.empty() ? "" : " ") + std::to_string(r.N) + ":" + sci(r.rms);
  }
  v.check(std::abs(study.slope + 0.5) <= 0.15,
          "slope " + sci(study.slope) + " (rms " + rows + ")");
  const double secs = seconds_since(t0);
  v.check(secs < 300.0, sci(secs) + " s");
  return v;
}

Verdict nash_gap(const Fixtures& fx, int threads) {
  Verdict v;
  const auto t0 = Clock::now();
  {
    const RunConfig cfg = fx.game("toy_game.json");
    const MfgSolution sol = solve_consistency_finite(*cfg.game, cfg.solver);
    PopulationConfig pop = cfg.population;
    pop.types.clear();
    pop.threads = threads;
    const std::vector<GapRow> rows =
        gap_vs_population(*cfg.game, sol, {2, 4, 8, 16, 32}, pop);
    double lowest = INFINITY;
    for (const GapRow& r : rows) {
      lowest = std::min(lowest, r.major_gap);
      for (double g : r.type_gaps) {
        if (!std::isnan(g)) lowest = std::min(lowest, g);
      }
    }
    v.check(lowest >= -1e-8, "smallest toy gap " + sci(lowest));
    const GapRow& first = rows.front();
    const GapRow& last = rows.back();
    v.check(last.major_gap < 0.5 * first.major_gap,
            "major gap N=2 " + sci(first.major_gap) + " -> N=32 " +
                sci(last.major_gap));
    for (std::size_t k = 0; k < first.type_gaps.size(); ++k) {
      v.check(last.type_gaps[k] < 0.5 * first.type_gaps[k],
              "type" + std::to_string(k + 1) + " gap " +
                  sci(first.type_gaps[k]) + " -> " + sci(last.type_gaps[k]));
    }
  }
  const RunConfig cfg = fx.game("decoupled_game.json");
  const MfgSolution sol = solve_consistency_finite(*cfg.game, cfg.solver);
  PopulationConfig pop = cfg.population;
  pop.types.clear();
  pop.threads = threads;
  const std::vector<GapRow> rows =
      gap_vs_population(*cfg.game, sol, {2, 8}, pop);
  double lo = INFINITY, hi = -INFINITY;
  for (const GapRow& r : rows) {
    for (double g : r.type_gaps) {
      lo = std::min(lo, g);
      hi = std::max(hi, g);
    }
    lo = std::min(lo, r.major_gap);
    hi = std::max(hi, r.major_gap);
  }
  v.check(lo >= -1e-8 && hi <= 1e-6,
          "decoupled gaps in [" + sci(lo) + ", " + sci(hi) + "]");
  const double secs = seconds_since(t0);
  v.check(secs < 600.0, sci(secs) + " s");
  return v;
}

Verdict infinite_horizon(const Fixtures& fx, const fs::path& scratch) {
  Verdict v;
  {
    const LqgProblem p = fx.lqg("discounted_are.json");
    const StationaryLqgSolution sol = solve_infinite_horizon(p, p.b[0]);
    const double err = std::abs(sol.Pi(0, 0) - 1.0);
    v.check(err < 1e-8, "discounted ARE |Pi - 1| = " + sci(err));
  }
  {
    const LqgProblem p = fx.lqg(
        "tanh_lqg.json", [](json& d) { set_horizon(d, 50.0, 20000); });
    const double finite = solve_finite_horizon(p).Pi[0](0, 0);
    const double stat = solve_infinite_horizon(p, p.b[0]).Pi(0, 0);
    const double err = std::abs(finite - stat);
    v.check(err < 1e-4, "LQG turnpike at T=50 " + sci(err));
  }
  {
    const RunConfig cfg = fx.game("toy_game.json", [](json& d) {
      set_horizon(d, 50.0, 5000);
      d["rho"] = 0.2;
    });
    const MmMfgProblem& p = *cfg.game;
    const StationaryMfgSolution stat = solve_consistency_infinite(p, cfg.solver);
    const MfgSolution fin = solve_consistency_finite(p, cfg.solver);
    double err = max_abs(fin.major.Pi[0] - stat.major.Pi);
    for (int k = 0; k < p.K(); ++k) {
      err = std::max(err, max_abs(fin.minors[k].Pi[0] - stat.minors[k].Pi));
    }
    err = std::max(err, max_abs(fin.law.Abar[0] - stat.Abar));
    v.check(err < 1e-4, "MFG turnpike at T=50 " + sci(err));

    v.check(stationary_stability_report(p, stat).passed(),
            "stationary toy loop stable");
    MmMfgProblem hot = p;
    hot.major.A = 5.0 * MatrixXd::Identity(p.n(), p.n());
    v.check(!stationary_stability_report(hot, stat).passed(),
            "checker rejects the same gains with A0 = 5I");
  }
  {
    CommandOptions opts;
    opts.config = fx.path("unstabilizable_game.json");
    opts.out = scratch / "unstabilizable";
    std::ostringstream sink;
    const int code = run_command("solve-mfg", opts, sink, sink);
    v.check(code == kExitAssumption,
            "unstabilizable fixture exit code " + std::to_string(code));
  }
  return v;
}

using FileMap = std::map<std::string, std::string>;

FileMap output_files(const fs::path& dir) {
  FileMap files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
    std::ifstream in(e.path(), std::ios::binary);
    files[e.path().filename().string()] =
        std::string(std::istreambuf_iterator<char>(in), {});
  }
  return files;
}

Verdict determinism(const Fixtures& fx, const fs::path& scratch) {
  Verdict v;
  const std::vector<std::pair<std::string, std::string>> runs = {
      {"solve-lqg", "tanh_lqg.json"},
      {"solve-lqg", "discounted_are.json"},
      {"solve-mfg", "toy_game.json"},
      {"simulate", "toy_game.json"},
      {"nash-gap", "toy_game.json"},
  };
  for (const auto& [command, fixture] : runs) {
    FileMap outputs[2];
    int codes[2];
    const int threads[2] = {1, 3};
    for (int r = 0; r < 2; ++r) {
      CommandOptions opts;
      opts.config = fx.path(fixture);
      opts.seed = 20240601;
      opts.threads = threads[r];
      opts.out = scratch / "determinism" /
                 (command + "-" + fixture + "-t" + std::to_string(threads[r]));
      fs::remove_all(opts.out);
      std::ostringstream log, err;
      codes[r] = run_command(command, opts, log, err);
      if (codes[r] != kExitOk) {
        v.check(false, command + " " + fixture + " exited " +
                           std::to_string(codes[r]) + ": " + err.str());
        break;
      }
      outputs[r] = output_files(opts.out);
    }
    if (codes[0] != kExitOk || codes[1] != kExitOk) continue;
    v.check(!outputs[0].empty() && outputs[0] == outputs[1],
            command + " " + fixture + ": " +
                std::to_string(outputs[0].size()) +
                " files identical across --threads 1/3");
  }
  return v;
}

}  // namespace

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opts,
                                            std::ostream* log) {
  const Fixtures fx(opts.fixture_dir);
  const fs::path scratch = opts.scratch_dir.empty()
                               ? fs::temp_directory_path() / "mfg_lqg_accept"
                               : opts.scratch_dir;
  const std::vector<std::pair<std::string, std::function<Verdict()>>> all = {
      {"scalar Riccati oracle", [&] { return scalar_riccati(fx); }},
      {"Euler equality", [&] { return euler_equality(fx); }},
      {"brute-force optimality", [&] { return brute_force(fx); }},
      {"extended terminal conditions", [&] { return terminal_conditions(fx); }},
      {"consistency fixed point", [&] { return consistency(fx); }},
      {"mean-field convergence", [&] { return convergence(fx, opts.threads); }},
      {"epsilon-Nash gap", [&] { return nash_gap(fx, opts.threads); }},
      {"infinite horizon", [&] { return infinite_horizon(fx, scratch); }},
      {"determinism", [&] { return determinism(fx, scratch); }},
  };

  std::vector<CriterionResult> results;
  for (int id = 1; id <= static_cast<int>(all.size()); ++id) {
    if (!opts.only.empty() &&
        std::find(opts.only.begin(), opts.only.end(), id) == opts.only.end()) {
      continue;
    }
    CriterionResult r;
    r.id = id;
    r.name = all[id - 1].first;
    const auto t0 = Clock::now();
    try {
      const Verdict v = all[id - 1].second();
      r.passed = v.passed;
      r.detail = v.detail();
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("error: ") + e.what();
    }
    r.seconds = seconds_since(t0);
    if (log) {
      *log << (r.passed ? "PASS " : "FAIL ") << r.id << " " << r.name << " ("
           << sci(r.seconds) << " s): " << r.detail << std::endl;
    }
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace mfg_lqg::app
