#pragma once

#include <Eigen/Dense>

#include "mfg_lqg/numerics.hpp"
#include "mfg_lqg/report.hpp"
#include "mfg_lqg/riccati.hpp"

namespace mfg_lqg {

/// dx = (A x + B u + b(t)) dt + sigma(t) dw, x(0) = x0, with cost
///   1/2 E[ e^{-rho T} x_T' Qhat x_T + int_0^T e^{-rho t}{x'Qx + 2x'N u
///          + u'R u - 2x'eta - 2u'n} dt ].
struct LqgProblem {
  MatrixXd A;
  MatrixXd B;
  GridFunction b;      // n x 1
  GridFunction sigma;  // n x r
  MatrixXd Qhat;
  MatrixXd Q;
  MatrixXd N_cross;
  MatrixXd R;
  VectorXd eta;
  VectorXd n_lin;
  double rho = 0.0;
  TimeGrid grid;
  VectorXd x0;

  Eigen::Index state_dim() const { return A.rows(); }
  Eigen::Index control_dim() const { return B.cols(); }

  LqWeights weights() const;
  LqDynamics dynamics() const;
};

/// Riccati matrix, offset and the feedback u = -K(t) x - kff(t).
struct LqgSolution {
  GridFunction Pi;   // n x n
  GridFunction s;    // n x 1
  GridFunction K;    // m x n, R^{-1}(N' + B'Pi)
  GridFunction kff;  // m x 1, R^{-1}(B's - n)
};

/// Affine law u = -K(t) x + k(t).
struct LinearLaw {
  GridFunction K;
  GridFunction k;

  static LinearLaw from_solution(const LqgSolution& sol);
  /// Open-loop control u(t) (K = 0).
  static LinearLaw open_loop(const GridFunction& u, Eigen::Index state_dim);
};

/// Default PSD tolerance, relative to the largest eigenvalue magnitude.
inline constexpr double kPsdTol = 1e-9;

/// Shape audit (throws ConfigError) plus the convexity conditions
/// Qhat >= 0, R > 0, Q - N R^{-1} N' >= 0.
ValidationReport validate_convexity(const LqgProblem& p, double tol = kPsdTol);

LqgSolution solve_finite_horizon(const LqgProblem& p);

/// u* = -R^{-1}(N'x - n + B'[Pi(t) x + s(t)]).
VectorXd feedback_control(const LqgSolution& sol, double t, const VectorXd& x);

/// Exact expected cost of an affine law through the mean/covariance ODEs.
double expected_cost(const LqgProblem& p, const LinearLaw& law);

/// <DJ(u), omega> for a deterministic problem (sigma == 0). Controls are
/// piecewise linear on the problem grid.
double gateaux_derivative_det(const LqgProblem& p, const GridFunction& u,
                              const GridFunction& omega);

/// State trajectory of the closed loop under an affine law (sigma ignored).
GridFunction closed_loop_mean(const LqgProblem& p, const LinearLaw& law);

struct StabilityReport {
  HautusReport stabilizable;
  HautusReport detectable;
  bool passed() const { return stabilizable.passed && detectable.passed; }
};

/// Hautus tests on (A - rho/2 I, B) and (Q^{1/2}, A - rho/2 I).
StabilityReport detectability_stabilizability(const LqgProblem& p,
                                              double tol = 1e-9);

struct StationaryLqgSolution {
  MatrixXd Pi;
  VectorXd s;
  MatrixXd K;
  VectorXd kff;
  double are_residual = 0.0;
};

/// Discounted ARE plus steady offset for a constant drift b.
StationaryLqgSolution solve_infinite_horizon(const LqgProblem& p,
                                             const VectorXd& b_const);

}  // namespace mfg_lqg
