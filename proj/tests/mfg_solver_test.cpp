#include "mfg_lqg/mfg_solver.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "mfg_lqg/errors.hpp"
#include "mfg_lqg/lqg_single.hpp"
#include "test_problems.hpp"

namespace mfg_lqg {
namespace {

using testing::mat;
using testing::vec;

LqgProblem standalone_major(const MmMfgProblem& p) {
  LqgProblem lp;
  lp.grid = p.grid;
  lp.A = p.major.A;
  lp.B = p.major.B;
  lp.b = p.major.b;
  lp.sigma = p.major.sigma;
  lp.Qhat = p.major.Qhat;
  lp.Q = p.major.Q;
  lp.N_cross = p.major.N;
  lp.R = p.major.R;
  lp.eta = p.major.Q * p.major.eta;
  lp.n_lin = p.major.N.transpose() * p.major.eta;
  lp.rho = p.rho;
  lp.x0 = VectorXd::Zero(p.n());
  return lp;
}

LqgProblem standalone_minor(const MmMfgProblem& p, int k) {
  const MinorTypeParams& mk = p.minors[k];
  LqgProblem lp = standalone_major(p);
  lp.A = mk.A;
  lp.B = mk.B;
  lp.b = mk.b;
  lp.sigma = mk.sigma;
  lp.Qhat = mk.Qhat;
  lp.Q = mk.Q;
  lp.N_cross = mk.N;
  lp.R = mk.R;
  lp.eta = mk.Q * mk.eta;
  lp.n_lin = mk.N.transpose() * mk.eta;
  return lp;
}

double sup_block(const GridFunction& big, const GridFunction& small) {
  double err = 0.0;
  for (int j = 0; j < big.grid().num_nodes(); ++j) {
    const MatrixXd d =
        big[j].topLeftCorner(small.rows(), small.cols()) - small[j];
    err = std::max(err, d.cwiseAbs().maxCoeff());
  }
  return err;
}

FixedPointConfig undamped() {
  FixedPointConfig cfg;
  cfg.damping = 1.0;
  return cfg;
}

TEST(SolveConsistencyFinite, DecoupledReducesToStandalone) {
  const MmMfgProblem p = testing::decoupled_problem();
  const MfgSolution sol = solve_consistency_finite(p, undamped());
  EXPECT_LE(sol.report.iterations, 2);
  EXPECT_TRUE(sol.report.converged);

  const LqgSolution major = solve_finite_horizon(standalone_major(p));
  EXPECT_LT(sup_block(sol.major.Pi, major.Pi), 1e-10);
  EXPECT_LT(sup_block(sol.major.s, major.s), 1e-10);
  for (int k = 0; k < p.K(); ++k) {
    const LqgSolution minor = solve_finite_horizon(standalone_minor(p, k));
    EXPECT_LT(sup_block(sol.minors[k].Pi, minor.Pi), 1e-8);
    EXPECT_LT(sup_block(sol.minors[k].s, minor.s), 1e-8);
  }
}

TEST(SolveConsistencyFinite, ToyConvergesWithExactTerminals) {
  const MmMfgProblem p = testing::toy_problem();
  const MfgSolution sol = solve_consistency_finite(p);
  ASSERT_TRUE(sol.report.converged);
  EXPECT_LT(sol.report.residuals.back(), 1e-7);

  const int last = p.grid.num_steps();
  const ExtendedMajorSystem major = build_extended_major(p, sol.law);
  EXPECT_EQ(sol.major.Pi[last], major.G);
  EXPECT_EQ(sol.major.s[last], MatrixXd::Zero(6, 1));
  for (int k = 0; k < p.K(); ++k) {
    const ExtendedMinorSystem minor =
        build_extended_minor(p, k, major, sol.major.Pi, sol.major.s);
    EXPECT_EQ(sol.minors[k].Pi[last], minor.G);
    EXPECT_EQ(sol.minors[k].s[last], MatrixXd::Zero(8, 1));
  }

  // Symmetric everywhere.
  for (int j = 0; j <= last; ++j) {
    EXPECT_EQ(sol.major.Pi[j], sol.major.Pi[j].transpose());
    for (const auto& mk : sol.minors) EXPECT_EQ(mk.Pi[j], mk.Pi[j].transpose());
  }

  // One more exact pass moves nothing beyond 10 tol.
  const ConsistencyPass again = consistency_pass(p, sol.law);
  EXPECT_LT(again.next.Abar.sup_distance(sol.law.Abar), 1e-7);
  EXPECT_LT(again.next.Gbar.sup_distance(sol.law.Gbar), 1e-7);
  EXPECT_LT(again.next.mbar.sup_distance(sol.law.mbar), 1e-7);
}

TEST(SolveConsistencyFinite, DampingInvariance) {
  const MmMfgProblem p = testing::toy_problem(1.0, 200);
  const MfgSolution half = solve_consistency_finite(p);
  const MfgSolution full = solve_consistency_finite(p, undamped());
  EXPECT_LT(half.law.Abar.sup_distance(full.law.Abar), 1e-7);
  EXPECT_LT(half.law.Gbar.sup_distance(full.law.Gbar), 1e-7);
  EXPECT_LT(half.law.mbar.sup_distance(full.law.mbar), 1e-7);
}

TEST(SolveConsistencyFinite, BudgetExhaustion) {
  FixedPointConfig cfg;
  cfg.max_iters = 1;
  try {
    solve_consistency_finite(testing::toy_problem(1.0, 100), cfg);
    FAIL() << "expected fixed-point failure";
  } catch (const FixedPointFailure& e) {
    EXPECT_EQ(e.residuals().size(), 1u);
  }
  cfg.damping = 0.0;
  EXPECT_THROW(solve_consistency_finite(testing::toy_problem(), cfg),
               ConfigError);
}

// Averaging the minor law over a subpopulation and substituting xbar gives
// the mean-field law exactly.
TEST(ConsistencyUpdate, AggregationIdentity) {
  const MmMfgProblem p = testing::toy_problem(1.0, 4);
  std::mt19937_64 gen(3);
  std::normal_distribution<double> dist;
  const Eigen::Index n = p.n(), nk = p.nK(), d = 2 * n + nk;
  std::vector<GridFunction> pik, sk;
  for (int k = 0; k < p.K(); ++k) {
    const MatrixXd a = MatrixXd::NullaryExpr(d, d, [&] { return dist(gen); });
    pik.push_back(GridFunction::constant(p.grid, a + a.transpose()));
    sk.push_back(GridFunction::constant(
        p.grid, MatrixXd::NullaryExpr(d, 1, [&] { return dist(gen); })));
  }
  const MeanFieldLaw law = consistency_update(p, pik, sk);
  const MeanFieldMatrices mf = build_mean_field_matrices(p);
  const ExtendedMajorSystem major = build_extended_major(p, mf);
  const ExtendedMinorSystem dummy[] = {
      build_extended_minor(p, 0, major, pik[0], sk[0]),
      build_extended_minor(p, 1, major, pik[1], sk[1])};

  const VectorXd xbar = VectorXd::NullaryExpr(nk, [&] { return dist(gen); });
  const VectorXd x0 = VectorXd::NullaryExpr(n, [&] { return dist(gen); });
  VectorXd ubar(p.m() * p.K());
  for (int k = 0; k < p.K(); ++k) {
    const ExtendedMinorSystem& ext = dummy[k];
    VectorXd x_ext(d);
    x_ext << xbar.segment(n * k, n), x0, xbar;
    const MatrixXd kk = feedback_gain(pik[k][0], ext.Bb, ext.weights(),
                                      SpdInverse(ext.R, "R"));
    const VectorXd kff = feedforward(sk[k][0], ext.Bb, ext.weights(),
                                     SpdInverse(ext.R, "R"));
    ubar.segment(p.m() * k, p.m()) = -kk * x_ext - kff;
  }
  const VectorXd direct =
      mf.Abreve * xbar + mf.Gbreve * x0 + mf.Bbreve * ubar + mf.mbreve[0];
  const VectorXd via_law = law.Abar[0] * xbar + law.Gbar[0] * x0 + law.mbar[0];
  EXPECT_LT((direct - via_law).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EquilibriumFeedback, FormulaCases) {
  const TimeGrid grid(1.0, 4);
  MfgSolution sol;
  sol.major = {GridFunction(grid, 3, 3), GridFunction(grid, 3, 1),
               GridFunction(grid, 1, 3), GridFunction(grid, 1, 1)};
  EXPECT_EQ(equilibrium_feedback_major(sol, 0.5, vec({1.0, 2.0, 3.0}))(0), 0.0);
  EXPECT_THROW(equilibrium_feedback_major(sol, 1.5, vec({1.0, 2.0, 3.0})),
               OutOfRangeError);
  EXPECT_THROW(equilibrium_feedback_minor(sol, 0, 0.5, vec({1.0})),
               ConfigError);

  // X0 = 0: u = R0^{-1}(nbar0 - Bb0' s0(t)).
  const MmMfgProblem p = testing::scalar_game(2);
  const MfgSolution full = solve_consistency_finite(p);
  const ExtendedMajorSystem ext = build_extended_major(p, full.law);
  const double t = 0.3;
  const VectorXd expected =
      p.major.R.inverse() * (ext.nbar - ext.Bb.transpose() * full.major.s.at(t));
  EXPECT_NEAR(equilibrium_feedback_major(full, t, VectorXd::Zero(3))(0),
              expected(0), 1e-14);
}

TEST(EquilibriumFeedback, DecoupledScalarMatchesStandalone) {
  MmMfgProblem p = testing::scalar_game(1);
  p.major.F.setZero();
  p.major.H.setZero();
  p.minors[0].F.setZero();
  p.minors[0].G.setZero();
  p.minors[0].H.setZero();
  p.minors[0].Hhat.setZero();
  const MfgSolution sol = solve_consistency_finite(p, undamped());
  const LqgSolution major = solve_finite_horizon(standalone_major(p));
  const LqgSolution minor = solve_finite_horizon(standalone_minor(p, 0));
  for (double t : {0.0, 0.25, 0.61, 1.0}) {
    const double x = 0.7;
    EXPECT_NEAR(equilibrium_feedback_major(sol, t, vec({x, -0.4}))(0),
                feedback_control(major, t, vec({x}))(0), 1e-9);
    EXPECT_NEAR(equilibrium_feedback_minor(sol, 0, t, vec({x, 0.2, -0.4}))(0),
                feedback_control(minor, t, vec({x}))(0), 1e-8);
  }
}

TEST(MeanFieldTrajectory, ZeroDrive) {
  const TimeGrid grid(1.0, 50);
  const MeanFieldLaw law{GridFunction::constant(grid, mat({{-0.3}})),
                         GridFunction(grid, 1, 1), GridFunction(grid, 1, 1)};
  const GridFunction x0 = GridFunction::constant(grid, mat({{2.0}}));
  const GridFunction xbar = mean_field_trajectory(law, x0, vec({0.0}));
  for (int j = 0; j <= 50; ++j) EXPECT_EQ(xbar[j](0, 0), 0.0);

  // Gbar = 0: the major path is irrelevant.
  const MeanFieldLaw drift{GridFunction::constant(grid, mat({{-0.3}})),
                           GridFunction(grid, 1, 1),
                           GridFunction::constant(grid, mat({{0.4}}))};
  const GridFunction other = GridFunction::constant(grid, mat({{-5.0}}));
  EXPECT_EQ(mean_field_trajectory(drift, x0, vec({1.0})).sup_distance(
                mean_field_trajectory(drift, other, vec({1.0}))),
            0.0);
}

TEST(MeanFieldTrajectory, VariationOfConstants) {
  const TimeGrid grid(2.0, 400);
  const double a = -0.7, g = 0.5, m = 0.2, c = 1.3, x_init = 0.4;
  const MeanFieldLaw law{GridFunction::constant(grid, mat({{a}})),
                         GridFunction::constant(grid, mat({{g}})),
                         GridFunction::constant(grid, mat({{m}}))};
  const GridFunction x0 = GridFunction::constant(grid, mat({{c}}));
  const GridFunction xbar = mean_field_trajectory(law, x0, vec({x_init}));
  for (int j = 0; j <= 400; j += 40) {
    const double t = grid.node(j);
    const double exact = std::exp(a * t) * x_init +
                         (g * c + m) * (std::exp(a * t) - 1.0) / a;
    EXPECT_NEAR(xbar[j](0, 0), exact, 1e-8);
  }
}

TEST(MeanFieldPropagator, MatchesRk4OnLinearPath) {
  // Time-varying law and a major path that is linear between nodes.
  const MmMfgProblem p = testing::toy_problem(1.0, 40);
  const MfgSolution sol = solve_consistency_finite(p);
  GridFunction x0(p.grid, 2, 1);
  for (int j = 0; j <= 40; ++j) {
    x0[j] = vec({std::sin(3.0 * j / 40.0), std::cos(j / 10.0)});
  }
  const GridFunction via_prop = mean_field_trajectory(sol, x0, VectorXd::Zero(4));
  const GridFunction via_rk4 = integrate_forward(
      [&](double t, const MatrixXd& y) -> MatrixXd {
        return sol.law.Abar.at(t) * y + sol.law.Gbar.at(t) * x0.at(t) +
               sol.law.mbar.at(t);
      },
      VectorXd::Zero(4), p.grid);
  EXPECT_LT(via_prop.sup_distance(via_rk4), 1e-14);
}

TEST(SolveConsistencyInfinite, DecoupledMatchesStandaloneAre) {
  MmMfgProblem p = testing::decoupled_problem();
  p.rho = 0.1;
  const StationaryMfgSolution sol = solve_consistency_infinite(p, undamped());
  const StationaryLqgSolution major =
      solve_infinite_horizon(standalone_major(p), p.major.b[0]);
  EXPECT_LT((sol.major.Pi.topLeftCorner(2, 2) - major.Pi).cwiseAbs().maxCoeff(),
            1e-8);
  EXPECT_LT((sol.major.s.head(2) - major.s).cwiseAbs().maxCoeff(), 1e-8);
  for (int k = 0; k < p.K(); ++k) {
    const StationaryLqgSolution minor =
        solve_infinite_horizon(standalone_minor(p, k), p.minors[k].b[0]);
    EXPECT_LT(
        (sol.minors[k].Pi.topLeftCorner(2, 2) - minor.Pi).cwiseAbs().maxCoeff(),
        1e-8);
    EXPECT_LT((sol.minors[k].s.head(2) - minor.s).cwiseAbs().maxCoeff(), 1e-8);
  }
  EXPECT_TRUE(stationary_stability_report(p, sol).passed());
}

TEST(SolveConsistencyInfinite, Turnpike) {
  MmMfgProblem p = testing::toy_problem(50.0, 5000);
  p.rho = 0.2;
  const StationaryMfgSolution stat = solve_consistency_infinite(p);
  const MfgSolution fin = solve_consistency_finite(p);
  EXPECT_LT((fin.major.Pi[0] - stat.major.Pi).cwiseAbs().maxCoeff(), 1e-4);
  for (int k = 0; k < p.K(); ++k) {
    EXPECT_LT((fin.minors[k].Pi[0] - stat.minors[k].Pi).cwiseAbs().maxCoeff(),
              1e-4);
  }
  EXPECT_LT((fin.law.Abar[0] - stat.Abar).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(SolveConsistencyInfinite, RejectsUnstabilizableMajor) {
  MmMfgProblem p = testing::toy_problem();
  p.rho = 0.1;
  p.major.B.setZero();
  p.major.N.setZero();
  p.major.A = mat({{1.0, 0.0}, {0.0, 0.5}});
  EXPECT_THROW(solve_consistency_infinite(p), AssumptionViolation);
}

TEST(SolveConsistencyInfinite, StabilityCheckerRejectsUnstableLoop) {
  MmMfgProblem p = testing::toy_problem();
  p.rho = 0.1;
  StationaryMfgSolution sol = solve_consistency_infinite(p);
  EXPECT_TRUE(stationary_stability_report(p, sol).passed());
  // Same gains applied to a much more unstable major plant.
  p.major.A = mat({{5.0, 0.0}, {0.0, 5.0}});
  const ValidationReport r = stationary_stability_report(p, sol);
  EXPECT_FALSE(r.passed());
  EXPECT_NE(r.failures().find("major closed loop not asymptotically stable"),
            std::string::npos);
}

TEST(SolveConsistencyInfinite, RequiresDiscount) {
  EXPECT_THROW(solve_consistency_infinite(testing::toy_problem()), ConfigError);
}

}  // namespace
}  // namespace mfg_lqg
