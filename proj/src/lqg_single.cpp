#include "mfg_lqg/lqg_single.hpp"

#include <cmath>
#include <sstream>

#include "mfg_lqg/errors.hpp"
#include "mfg_lqg/moments.hpp"

namespace mfg_lqg {

namespace {

void require_shape(const MatrixXd& m, Eigen::Index rows, Eigen::Index cols,
                   const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << "shape mismatch: " << name << " is " << m.rows() << "x" << m.cols()
       << ", expected " << rows << "x" << cols;
    throw ConfigError(os.str());
  }
}

double relative_tol(const MatrixXd& m, double tol) {
  if (m.size() == 0) return tol;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m),
                                             Eigen::EigenvaluesOnly);
  return tol * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
}

void check_psd(ValidationReport& report, const MatrixXd& m, double tol,
               const std::string& name) {
  const double lo = min_symmetric_eigenvalue(m);
  const bool ok = lo >= -relative_tol(m, tol);
  std::ostringstream os;
  if (!ok) os << name << " not positive semidefinite (min eigenvalue " << lo
              << ")";
  report.add(name + " >= 0", ok, os.str(), lo);
}

}  // namespace

LqWeights LqgProblem::weights() const {
  LqWeights w;
  w.Q = Q;
  w.N = N_cross;
  w.R = R;
  w.eta = eta;
  w.n_lin = n_lin;
  w.rho = rho;
  w.terminal = Qhat;
  return w;
}

LqDynamics LqgProblem::dynamics() const {
  return {[a = A](double) { return a; }, B,
          [drift = b](double t) { return drift.at(t); }};
}

LinearLaw LinearLaw::from_solution(const LqgSolution& sol) {
  GridFunction k(sol.kff.grid(), sol.kff.rows(), 1);
  for (int j = 0; j < k.grid().num_nodes(); ++j) k[j] = -sol.kff[j];
  return {sol.K, std::move(k)};
}

LinearLaw LinearLaw::open_loop(const GridFunction& u, Eigen::Index state_dim) {
  return {GridFunction(u.grid(), u.rows(), state_dim), u};
}

ValidationReport validate_convexity(const LqgProblem& p, double tol) {
  const Eigen::Index n = p.A.rows();
  const Eigen::Index m = p.B.cols();
  require_shape(p.A, n, n, "A");
  require_shape(p.B, n, m, "B");
  require_shape(p.Qhat, n, n, "Qhat");
  require_shape(p.Q, n, n, "Q");
  require_shape(p.N_cross, n, m, "N");
  require_shape(p.R, m, m, "R");
  require_shape(p.eta, n, 1, "eta");
  require_shape(p.n_lin, m, 1, "n");
  require_shape(p.x0, n, 1, "x0");
  if (p.b.rows() != n || p.b.cols() != 1 || !(p.b.grid() == p.grid)) {
    throw ConfigError("shape mismatch: b must be n x 1 on the problem grid");
  }
  if (p.sigma.rows() != n || !(p.sigma.grid() == p.grid)) {
    throw ConfigError("shape mismatch: sigma must be n x r on the problem grid");
  }
  if (!std::isfinite(p.rho) || p.rho < 0.0) {
    throw ConfigError("rho must be finite and >= 0");
  }

  ValidationReport report;
  const double r_min = min_symmetric_eigenvalue(p.R);
  const bool r_sym = (p.R - p.R.transpose()).cwiseAbs().maxCoeff() <=
                     1e-12 * std::max(1.0, p.R.cwiseAbs().maxCoeff());
  const bool r_ok = r_sym && r_min > 0.0;
  {
    std::ostringstream os;
    if (!r_ok) os << "R not positive definite (min eigenvalue " << r_min << ")";
    report.add("R > 0", r_ok, os.str(), r_min);
  }
  check_psd(report, p.Qhat, tol, "Qhat");
  if (r_ok) {
    const MatrixXd schur =
        p.Q - p.N_cross * p.R.llt().solve(p.N_cross.transpose());
    check_psd(report, schur, tol, "Q - N R^-1 N'");
  } else {
    report.add("Q - N R^-1 N' >= 0", false,
               "Q - N R^-1 N' not evaluated: R not positive definite");
  }
  return report;
}

LqgSolution solve_finite_horizon(const LqgProblem& p) {
  const ValidationReport report = validate_convexity(p);
  if (!report.passed()) {
    throw AssumptionViolation("convexity assumptions violated: " +
                              report.failures());
  }
  const LqWeights w = p.weights();
  RiccatiSweep sweep = solve_riccati_sweep(p.dynamics(), w, p.grid);

  const SpdInverse r_inv(p.R, "R");
  GridFunction k(p.grid, p.control_dim(), p.state_dim());
  GridFunction kff(p.grid, p.control_dim(), 1);
  for (int j = 0; j < p.grid.num_nodes(); ++j) {
    k[j] = feedback_gain(sweep.Pi[j], p.B, w, r_inv);
    kff[j] = feedforward(sweep.s[j], p.B, w, r_inv);
  }
  return {std::move(sweep.Pi), std::move(sweep.s), std::move(k),
          std::move(kff)};
}

VectorXd feedback_control(const LqgSolution& sol, double t, const VectorXd& x) {
  return -sol.K.at(t) * x - sol.kff.at(t);
}

double expected_cost(const LqgProblem& p, const LinearLaw& law) {
  const Eigen::Index n = p.state_dim();
  const Eigen::Index m = p.control_dim();
  const Eigen::Index d = n + 1;  // augmented [x; 1]

  MatrixXd x_map = MatrixXd::Zero(n, d);
  x_map.leftCols(n).setIdentity();

  // Packed state: top-left d x d block is E[zeta zeta'], corner (d, d) is the
  // accumulated running cost.
  auto rhs = [&](double t, const MatrixXd& y) -> MatrixXd {
    const MatrixXd k = law.K.at(t);
    const VectorXd kv = law.k.at(t);
    const MatrixXd sig = p.sigma.at(t);

    MatrixXd a_aug = MatrixXd::Zero(d, d);
    a_aug.topLeftCorner(n, n) = p.A - p.B * k;
    a_aug.topRightCorner(n, 1) = p.B * kv + p.b.at(t);

    MatrixXd u_map(m, d);
    u_map << -k, kv;

    const MatrixXd s = y.topLeftCorner(d, d);
    MatrixXd ds = a_aug * s + s * a_aug.transpose();
    ds.topLeftCorner(n, n) += sig * sig.transpose();

    const MatrixXd w =
        quadratic_weight(x_map, u_map, p.Q, p.N_cross, p.R) +
        linear_weight(x_map, p.eta, u_map, p.n_lin);

    MatrixXd dy = MatrixXd::Zero(d + 1, d + 1);
    dy.topLeftCorner(d, d) = ds;
    dy(d, d) = 0.5 * std::exp(-p.rho * t) * expected_quadratic(w, s);
    return dy;
  };

  MatrixXd y0 = MatrixXd::Zero(d + 1, d + 1);
  y0.topLeftCorner(d, d) = augmented_moment(p.x0, MatrixXd::Zero(n, n));
  const GridFunction y = integrate_forward(rhs, y0, p.grid);
  const MatrixXd& yt = y[p.grid.num_steps()];
  const double terminal = 0.5 * std::exp(-p.rho * p.grid.t_end()) *
                          (p.Qhat.cwiseProduct(yt.topLeftCorner(n, n))).sum();
  return yt(d, d) + terminal;
}

GridFunction closed_loop_mean(const LqgProblem& p, const LinearLaw& law) {
  return integrate_forward(
      [&](double t, const MatrixXd& x) -> MatrixXd {
        return (p.A - p.B * law.K.at(t)) * x + p.B * law.k.at(t) + p.b.at(t);
      },
      p.x0, p.grid);
}

double gateaux_derivative_det(const LqgProblem& p, const GridFunction& u,
                              const GridFunction& omega) {
  for (const auto& s : p.sigma.values()) {
    if (s.size() > 0 && s.cwiseAbs().maxCoeff() != 0.0) {
      throw UnsupportedError(
          "gateaux_derivative_det: deterministic oracle requires sigma == 0");
    }
  }
  if (!(u.grid() == p.grid) || !(omega.grid() == p.grid)) {
    throw ConfigError("gateaux_derivative_det: controls must live on the "
                      "problem grid");
  }
  const double t_end = p.grid.t_end();
  const int m_steps = p.grid.num_steps();

  // Simpson on every grid interval needs x and the costate at midpoints; the
  // costate's own RK4 stages need x at quarter points.
  const TimeGrid half(t_end, 2 * m_steps);
  const TimeGrid quarter(t_end, 4 * m_steps);

  const GridFunction x = integrate_forward(
      [&](double t, const MatrixXd& xv) -> MatrixXd {
        return p.A * xv + p.B * u.at(t) + p.b.at(t);
      },
      p.x0, quarter);

  // Costate  p(t) = e^{-rho T} e^{A'(T-t)} Qhat x_T
  //               + int_t^T e^{-rho s} e^{A'(s-t)} (Q x + N u - eta) ds.
  const VectorXd x_t = x[quarter.num_steps()];
  const GridFunction costate = integrate_backward(
      [&](double t, const MatrixXd& pv) -> MatrixXd {
        return -p.A.transpose() * pv -
               std::exp(-p.rho * t) *
                   (p.Q * x.at(t) + p.N_cross * u.at(t) - p.eta);
      },
      std::exp(-p.rho * t_end) * p.Qhat * x_t, half);

  auto integrand = [&](double t, const VectorXd& xv, const VectorXd& pv) {
    const VectorXd g = std::exp(-p.rho * t) *
                           (p.N_cross.transpose() * xv + p.R * u.at(t) -
                            p.n_lin) +
                       p.B.transpose() * pv;
    return omega.at(t).col(0).dot(g);
  };

  double total = 0.0;
  for (int j = 0; j < m_steps; ++j) {
    const double t0 = p.grid.node(j);
    const double t1 = p.grid.node(j + 1);
    const double f0 = integrand(t0, x[4 * j], costate[2 * j]);
    const double fm = integrand(half.node(2 * j + 1), x[4 * j + 2],
                                costate[2 * j + 1]);
    const double f1 = integrand(t1, x[4 * j + 4], costate[2 * j + 2]);
    total += (t1 - t0) / 6.0 * (f0 + 4.0 * fm + f1);
  }
  return total;
}

StabilityReport detectability_stabilizability(const LqgProblem& p,
                                              double tol) {
  const Eigen::Index n = p.state_dim();
  const MatrixXd shifted = p.A - 0.5 * p.rho * MatrixXd::Identity(n, n);
  return {stabilizability(shifted, p.B, tol),
          detectability(psd_sqrt(p.Q), shifted, tol)};
}

StationaryLqgSolution solve_infinite_horizon(const LqgProblem& p,
                                             const VectorXd& b_const) {
  const ValidationReport report = validate_convexity(p);
  if (!report.passed()) {
    throw AssumptionViolation("convexity assumptions violated: " +
                              report.failures());
  }
  if (b_const.size() != p.state_dim()) {
    throw ConfigError("solve_infinite_horizon: constant b has wrong size");
  }
  const StabilityReport stab = detectability_stabilizability(p);
  if (!stab.stabilizable.passed) {
    throw AssumptionViolation("(A - rho/2 I, B) is not stabilizable");
  }
  if (!stab.detectable.passed) {
    throw AssumptionViolation("(Q^{1/2}, A - rho/2 I) is not detectable");
  }
  LqWeights w = p.weights();
  w.terminal = MatrixXd::Zero(p.state_dim(), p.state_dim());
  const AreSolution are = solve_are(p.A, p.B, w);
  const SpdInverse r_inv(p.R, "R");
  StationaryLqgSolution out;
  out.Pi = are.Pi;
  out.s = steady_offset(are.Pi, p.A, b_const, p.B, w, r_inv);
  out.K = feedback_gain(out.Pi, p.B, w, r_inv);
  out.kff = feedforward(out.s, p.B, w, r_inv);
  out.are_residual = are.residual;
  return out;
}

}  // namespace mfg_lqg
