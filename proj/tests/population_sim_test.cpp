#include "mfg_lqg/population_sim.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "mfg_lqg/errors.hpp"
#include "mfg_lqg/joint_system.hpp"
#include "mfg_lqg/rng.hpp"
#include "test_problems.hpp"

namespace mfg_lqg {
namespace {

using testing::mat;
using testing::vec;

const MmMfgProblem& toy() {
  static const MmMfgProblem p = testing::toy_problem();
  return p;
}

const MfgSolution& toy_solution() {
  static const MfgSolution sol = solve_consistency_finite(toy());
  return sol;
}

MmMfgProblem noiseless_toy(int steps = 400) {
  MmMfgProblem p = testing::toy_problem(1.0, steps);
  p.major.sigma = testing::constant(p.grid, MatrixXd::Zero(2, 2));
  for (auto& mk : p.minors) {
    mk.sigma = testing::constant(p.grid, MatrixXd::Zero(2, 2));
  }
  p.initial_cov.setZero();
  return p;
}

double sup_abs(const MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

TEST(AssignTypes, DeficitRule) {
  EXPECT_EQ(assign_types(vec({0.5, 0.5}), 4), (std::vector<int>{0, 1, 0, 1}));
  EXPECT_EQ(assign_types(vec({0.25, 0.75}), 4),
            (std::vector<int>{1, 0, 1, 1}));
  const std::vector<int> t = assign_types(vec({0.2, 0.3, 0.5}), 100);
  int counts[3] = {0, 0, 0};
  for (int k : t) ++counts[k];
  EXPECT_EQ(counts[0], 20);
  EXPECT_EQ(counts[1], 30);
  EXPECT_EQ(counts[2], 50);
}

TEST(AssignTypes, ExplicitListIsChecked) {
  PopulationConfig cfg;
  cfg.N = 3;
  cfg.types = {0, 1};
  EXPECT_THROW(resolve_types(toy(), cfg), ConfigError);
  cfg.types = {0, 1, 2};
  EXPECT_THROW(resolve_types(toy(), cfg), ConfigError);
  cfg.types = {1, 1, 0};
  EXPECT_EQ(resolve_types(toy(), cfg), cfg.types);
  cfg.N = 0;
  cfg.types.clear();
  EXPECT_THROW(resolve_types(toy(), cfg), ConfigError);
}

TEST(SimulatePopulation, QuiescentProblemStaysAtZero) {
  MmMfgProblem p = noiseless_toy();
  p.major.b = testing::constant(p.grid, MatrixXd::Zero(2, 1));
  for (auto& mk : p.minors) {
    mk.b = testing::constant(p.grid, MatrixXd::Zero(2, 1));
    mk.eta.setZero();
  }
  const MfgSolution sol = solve_consistency_finite(p);
  PopulationConfig cfg;
  cfg.N = 5;
  cfg.num_paths = 2;
  const TrajectoryBundle b = simulate_population(p, sol, cfg);
  for (const PathTrajectory& tr : b.paths) {
    EXPECT_EQ(sup_abs(tr.minors), 0.0);
    EXPECT_EQ(sup_abs(tr.major), 0.0);
    EXPECT_EQ(sup_abs(tr.xbar), 0.0);
    EXPECT_EQ(sup_abs(tr.controls), 0.0);
  }
}

TEST(SimulatePopulation, ShapesAndDeterminismAcrossThreads) {
  PopulationConfig cfg;
  cfg.N = 6;
  cfg.num_paths = 5;
  cfg.master_seed = 99;
  cfg.threads = 1;
  const TrajectoryBundle a = simulate_population(toy(), toy_solution(), cfg);
  cfg.threads = 3;
  const TrajectoryBundle b = simulate_population(toy(), toy_solution(), cfg);
  ASSERT_EQ(a.paths.size(), 5u);
  const PathTrajectory& tr = a.paths[0];
  EXPECT_EQ(tr.minors.rows(), 12);
  EXPECT_EQ(tr.minors.cols(), 401);
  EXPECT_EQ(tr.xbar.rows(), 4);
  EXPECT_EQ(tr.controls.rows(), 7);
  for (int path = 0; path < 5; ++path) {
    EXPECT_EQ(a.paths[path].minors, b.paths[path].minors);
    EXPECT_EQ(a.paths[path].major, b.paths[path].major);
    EXPECT_EQ(a.paths[path].xbar, b.paths[path].xbar);
    EXPECT_EQ(a.paths[path].controls, b.paths[path].controls);
  }
  cfg.master_seed = 100;
  const TrajectoryBundle c = simulate_population(toy(), toy_solution(), cfg);
  EXPECT_NE(a.paths[0].major, c.paths[0].major);
}

TEST(SimulatePopulation, MeanFieldStateIsTheSolverPropagation) {
  PopulationConfig cfg;
  cfg.N = 4;
  cfg.num_paths = 2;
  cfg.xbar0 = vec({0.1, -0.2, 0.3, 0.0});
  const TrajectoryBundle b = simulate_population(toy(), toy_solution(), cfg);
  for (const PathTrajectory& tr : b.paths) {
    GridFunction x0(toy().grid, 2, 1);
    for (int j = 0; j < toy().grid.num_nodes(); ++j) x0[j] = tr.major.col(j);
    const GridFunction xbar =
        mean_field_trajectory(toy_solution(), x0, *cfg.xbar0,
                              MeanFieldScheme::kEuler);
    for (int j = 0; j < toy().grid.num_nodes(); ++j) {
      EXPECT_EQ(MatrixXd(tr.xbar.col(j)), xbar[j]);
    }
  }
}

TEST(SimulatePopulation, MatchesJointChainOnSameNoise) {
  const MmMfgProblem& p = toy();
  PopulationConfig cfg;
  cfg.N = 3;
  cfg.num_paths = 2;
  cfg.master_seed = 5;
  const TrajectoryBundle b = simulate_population(p, toy_solution(), cfg);
  const JointSystem js(p, toy_solution(), b.types, 2);
  const NoiseStream noise(cfg.master_seed);
  const MatrixXd root = psd_sqrt(p.initial_cov);
  const Eigen::Index n = 2;

  for (int path = 0; path < cfg.num_paths; ++path) {
    VectorXd z = VectorXd::Zero(js.dim());
    VectorXd xi(n);
    for (int a = 0; a <= cfg.N; ++a) {
      noise.normals(0xFFFFFFFFu, a, path, xi.data(), n);
      const Eigen::Index row = a == 0 ? js.major_row() : js.minor_row(a - 1);
      z.segment(row, n) = root * xi;
    }
    const PathTrajectory& tr = b.paths[path];
    double worst = 0.0;
    for (int j = 0;; ++j) {
      VectorXd sim(js.dim());
      sim << tr.minors.col(j), tr.major.col(j), tr.xbar.col(j);
      worst = std::max(worst, sup_abs(sim - z));
      if (j == p.grid.num_steps()) break;
      const ChainStep st = js.chain_step(j);
      VectorXd w(js.noise_dim());
      for (int a = 0; a <= cfg.N; ++a) {
        noise.normals(j, a, path, w.data() + 2 * a, 2);
      }
      const VectorXd u = -js.equilibrium_gain(j) * z - js.equilibrium_offset(j);
      z = st.T * z + st.Gamma * u + st.c + st.S * w;
    }
    EXPECT_LT(worst, 1e-10);
  }
}

TEST(SimulatePopulation, DivergenceReportsPath) {
  MfgSolution sol = toy_solution();
  for (auto& mk : sol.minors) {
    for (int j = 0; j < toy().grid.num_nodes(); ++j) mk.K[j] *= -1e6;
  }
  PopulationConfig cfg;
  cfg.N = 2;
  cfg.num_paths = 3;
  try {
    simulate_population(toy(), sol, cfg);
    FAIL() << "expected divergence";
  } catch (const PathDiverged& e) {
    EXPECT_EQ(e.path(), 0);
    EXPECT_GT(e.node(), 0);
  }
}

TEST(EmpiricalMeanField, SingleAgentPerTypeAndAggregation) {
  PopulationConfig cfg;
  cfg.N = 2;
  cfg.num_paths = 1;
  const TrajectoryBundle b = simulate_population(toy(), toy_solution(), cfg);
  const std::vector<GridFunction> emp = empirical_mean_field(b);
  ASSERT_EQ(emp.size(), 1u);
  for (int j = 0; j < toy().grid.num_nodes(); ++j) {
    EXPECT_EQ(MatrixXd(emp[0][j]), MatrixXd(b.paths[0].minors.col(j)));
  }

  cfg.N = 7;
  const TrajectoryBundle big = simulate_population(toy(), toy_solution(), cfg);
  const std::vector<GridFunction> e7 = empirical_mean_field(big);
  // Types 0,1,0,1,0,1,0: four of type 0, three of type 1.
  for (int j = 0; j < toy().grid.num_nodes(); j += 50) {
    const VectorXd v = e7[0][j];
    const VectorXd global = (4.0 * v.head(2) + 3.0 * v.tail(2)) / 7.0;
    EXPECT_LT(sup_abs(global - big.paths[0].average.col(j)), 1e-15);
  }
}

TEST(EmpiricalMeanField, PermutingWithinTypeIsInvariant) {
  TrajectoryBundle b;
  b.grid = TimeGrid(1.0, 2);
  b.N = 3;
  b.K = 2;
  b.n = 1;
  b.m = 1;
  b.types = {0, 1, 0};
  PathTrajectory tr;
  tr.minors = mat({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}});
  b.paths = {tr};
  TrajectoryBundle swapped = b;
  swapped.paths[0].minors.row(0).swap(swapped.paths[0].minors.row(2));
  const GridFunction x = empirical_mean_field(b)[0];
  const GridFunction y = empirical_mean_field(swapped)[0];
  for (int j = 0; j < 3; ++j) EXPECT_EQ(x[j], y[j]);
  EXPECT_DOUBLE_EQ(x[1](0), 5.0);
  EXPECT_DOUBLE_EQ(x[1](1), 5.0);
}

TEST(FiniteCost, ZeroTrajectoriesCostNothing) {
  TrajectoryBundle b;
  b.grid = TimeGrid(1.0, 10);
  b.N = 2;
  b.K = 2;
  b.n = 2;
  b.m = 1;
  b.types = {0, 1};
  PathTrajectory tr;
  tr.minors = MatrixXd::Zero(4, 11);
  tr.major = MatrixXd::Zero(2, 11);
  tr.average = MatrixXd::Zero(2, 11);
  tr.xbar = MatrixXd::Zero(4, 11);
  tr.controls = MatrixXd::Zero(3, 11);
  b.paths = {tr, tr, tr};
  MmMfgProblem p = testing::toy_problem(1.0, 10);
  p.minors[1].eta.setZero();
  for (int agent = 0; agent <= 2; ++agent) {
    const CostReport r = finite_cost_monte_carlo(p, b, agent);
    EXPECT_EQ(r.value, 0.0);
    EXPECT_EQ(r.std_error, 0.0);
    EXPECT_EQ(r.num_paths, 3);
  }
  EXPECT_THROW(finite_cost_monte_carlo(p, b, 3), OutOfRangeError);
}

TEST(FiniteCost, DeterministicMatchesMoments) {
  const MmMfgProblem p = noiseless_toy();
  const MfgSolution sol = solve_consistency_finite(p);
  PopulationConfig cfg;
  cfg.N = 5;
  cfg.num_paths = 3;
  const TrajectoryBundle b = simulate_population(p, sol, cfg);
  for (int agent : {0, 1, 2}) {
    const CostReport mc = finite_cost_monte_carlo(p, b, agent);
    const CostReport ex = expected_cost_exact(p, sol, cfg, agent);
    EXPECT_EQ(mc.std_error, 0.0);
    EXPECT_GT(ex.value, 0.0);
    EXPECT_NEAR(mc.value, ex.value, 1e-8);
  }
}

TEST(FiniteCost, ZeroWeightsCostNothing) {
  MmMfgProblem p = toy();
  p.major.Q.setZero();
  p.major.Qhat.setZero();
  p.major.N.setZero();
  MfgSolution sol = toy_solution();
  // The cost is evaluated for the given law, so R can vanish here without a
  // re-solve.
  p.major.R.setZero();
  PopulationConfig cfg;
  cfg.N = 3;
  EXPECT_EQ(expected_cost_exact(p, sol, cfg, 0).value, 0.0);
}

TEST(FiniteCost, MonteCarloAgreesWithMoments) {
  PopulationConfig cfg;
  cfg.N = 8;
  cfg.num_paths = 4000;
  cfg.master_seed = 17;
  const TrajectoryBundle b = simulate_population(toy(), toy_solution(), cfg);
  for (int agent : {0, 1, 2}) {
    const CostReport mc = finite_cost_monte_carlo(toy(), b, agent);
    const CostReport ex = expected_cost_exact(toy(), toy_solution(), cfg, agent);
    EXPECT_GT(mc.std_error, 0.0);
    EXPECT_LT(std::abs(mc.value - ex.value), 3.0 * mc.std_error)
        << "agent " << agent << " mc " << mc.value << " exact " << ex.value;
  }
}

TEST(FiniteCost, StandardErrorShrinksWithPaths) {
  PopulationConfig cfg;
  cfg.N = 4;
  cfg.master_seed = 3;
  cfg.num_paths = 500;
  const double se1 = finite_cost_monte_carlo(
      toy(), simulate_population(toy(), toy_solution(), cfg), 1).std_error;
  cfg.num_paths = 1000;
  const double se2 = finite_cost_monte_carlo(
      toy(), simulate_population(toy(), toy_solution(), cfg), 1).std_error;
  const double ratio = se1 / se2;
  EXPECT_GE(ratio, 1.2);
  EXPECT_LE(ratio, 1.7);
}

TEST(FiniteCost, EulerChainIsFirstOrder) {
  PopulationConfig cfg;
  cfg.N = 4;
  double j[3];
  for (int level = 0; level < 3; ++level) {
    const MmMfgProblem p = testing::toy_problem(1.0, 100 << level);
    const MfgSolution sol = solve_consistency_finite(p);
    j[level] = expected_cost_exact(p, sol, cfg, 1).value;
  }
  const double ratio = (j[0] - j[1]) / (j[1] - j[2]);
  EXPECT_GE(ratio, 1.5);
  EXPECT_LE(ratio, 3.0);
}

TEST(FiniteCost, JointDimensionGuard) {
  PopulationConfig cfg;
  cfg.N = 1000;
  EXPECT_THROW(expected_cost_exact(toy(), toy_solution(), cfg, 0),
               UnsupportedError);
}

TEST(ConvergenceStudy, NoiselessPopulationTracksMeanField) {
  const MmMfgProblem p = noiseless_toy(200);
  FixedPointConfig fp;
  fp.tol = 1e-12;
  const MfgSolution sol = solve_consistency_finite(p, fp);
  PopulationConfig cfg;
  cfg.num_paths = 2;
  const ConvergenceStudy s = mean_field_convergence_study(p, sol, {2, 8}, cfg);
  ASSERT_EQ(s.rows.size(), 2u);
  // With F coupling through the finite-N average, identical agents of a type
  // still reproduce the per-type mean field exactly.
  for (const ConvergenceRow& row : s.rows) EXPECT_LT(row.rms, 1e-8);
}

TEST(ConvergenceStudy, DeviationDecreasesWithN) {
  PopulationConfig cfg;
  cfg.num_paths = 8;
  cfg.master_seed = 11;
  const ConvergenceStudy s =
      mean_field_convergence_study(toy(), toy_solution(), {4, 16, 64}, cfg);
  ASSERT_EQ(s.rows.size(), 3u);
  EXPECT_GT(s.rows[0].rms, s.rows[1].rms);
  EXPECT_GT(s.rows[1].rms, s.rows[2].rms);
  EXPECT_LT(s.slope, 0.0);
}

}  // namespace
}  // namespace mfg_lqg
