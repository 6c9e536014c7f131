#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mfg_lqg/mfg_solver.hpp"

namespace mfg_lqg {

struct PopulationConfig {
  int N = 16;                    // minor agents
  std::vector<int> types;        // 0-based type per minor; empty = balanced
  std::uint64_t master_seed = 0;
  int num_paths = 32;
  std::optional<MatrixXd> initial_cov;  // overrides the problem's
  std::optional<VectorXd> xbar0;        // defaults to zero
  int threads = 0;                      // 0 = MFG_LQG_THREADS or hardware
};

/// Agent j (1-based) goes to the type with the largest deficit
/// pi_k j - count_k; ties go to the lowest index.
std::vector<int> assign_types(const VectorXd& pi, int N);

/// Checked assignment for a run (explicit list or assign_types).
std::vector<int> resolve_types(const MmMfgProblem& p,
                               const PopulationConfig& cfg);

/// One Monte Carlo replication; column j holds node j.
struct PathTrajectory {
  MatrixXd minors;    // nN x nodes, agent i in rows [n i, n i + n)
  MatrixXd major;     // n x nodes
  MatrixXd xbar;      // nK x nodes
  MatrixXd average;   // n x nodes, (1/N) sum of minor states
  MatrixXd controls;  // m(N+1) x nodes, major first then minors
};

struct TrajectoryBundle {
  TimeGrid grid;
  int N = 0;
  int K = 0;
  Eigen::Index n = 0, m = 0;
  std::vector<int> types;
  std::vector<PathTrajectory> paths;
};

/// Euler-Maruyama on the solver grid under the equilibrium laws. xbar takes
/// the same explicit Euler step alongside, driven by the simulated
/// major path.
TrajectoryBundle simulate_population(const MmMfgProblem& p,
                                     const MfgSolution& sol,
                                     const PopulationConfig& cfg);

/// Per-type empirical averages stacked into an nK x 1 grid function, one per
/// path.
std::vector<GridFunction> empirical_mean_field(const TrajectoryBundle& bundle);

struct CostReport {
  int agent = 0;  // 0 = major, i = minor i (1-based)
  double value = 0.0;
  double std_error = 0.0;
  std::string method;  // "monte_carlo" or "moment"
  int num_paths = 0;
};

/// Trapezoid-rule pathwise finite-population cost averaged over paths.
CostReport finite_cost_monte_carlo(const MmMfgProblem& p,
                                   const TrajectoryBundle& bundle, int agent);

/// Exact expectation of the same discrete-time cost through the moments of
/// the joint linear chain. Joint dimension n(N+1) + nK is capped at 2000.
CostReport expected_cost_exact(const MmMfgProblem& p, const MfgSolution& sol,
                               const PopulationConfig& cfg, int agent);

struct ConvergenceRow {
  int N = 0;
  double rms = 0.0;
};

struct ConvergenceStudy {
  std::vector<ConvergenceRow> rows;
  double slope = 0.0;      // least-squares slope of log rms against log N
  double intercept = 0.0;
};

/// RMS over nodes and paths of |x^(N) - xbar| (per-type averages stacked)
/// for each N. Uses cfg's seed, path count, covariance and threads.
ConvergenceStudy mean_field_convergence_study(const MmMfgProblem& p,
                                              const MfgSolution& sol,
                                              const std::vector<int>& Ns,
                                              const PopulationConfig& cfg);

}  // namespace mfg_lqg
