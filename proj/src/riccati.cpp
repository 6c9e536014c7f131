#include "mfg_lqg/riccati.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "mfg_lqg/errors.hpp"

namespace mfg_lqg {

namespace {

// Fixed step of the long-horizon ARE sweep.
constexpr double kAreStep = 1.0 / 400.0;
constexpr double kAreMaxHorizon = 200.0;
constexpr double kAreDerivativeTol = 1e-10;

VectorXd or_zero(const VectorXd& v, Eigen::Index n) {
  return v.size() == 0 ? VectorXd::Zero(n) : v;
}

}  // namespace

SpdInverse::SpdInverse(const MatrixXd& r, const std::string& name) {
  if (r.rows() != r.cols() || r.rows() == 0) {
    throw ConfigError(name + " must be a non-empty square matrix");
  }
  if ((r - r.transpose()).cwiseAbs().maxCoeff() >
      1e-12 * std::max(1.0, r.cwiseAbs().maxCoeff())) {
    throw AssumptionViolation(name + " not symmetric");
  }
  llt_.compute(r);
  if (llt_.info() != Eigen::Success || min_symmetric_eigenvalue(r) <= 0.0) {
    throw AssumptionViolation(name + " not positive definite");
  }
  inverse_ = llt_.solve(MatrixXd::Identity(r.rows(), r.cols()));
}

MatrixXd riccati_derivative(const MatrixXd& pi, const MatrixXd& a,
                            const MatrixXd& b, const LqWeights& w,
                            const SpdInverse& r_inv) {
  const MatrixXd pbn = pi * b + w.N;
  return w.rho * pi - pi * a - a.transpose() * pi +
         pbn * r_inv.solve(pbn.transpose()) - w.Q;
}

VectorXd offset_derivative(const VectorXd& s, const MatrixXd& pi,
                           const MatrixXd& a, const VectorXd& drift,
                           const MatrixXd& b, const LqWeights& w,
                           const SpdInverse& r_inv) {
  const MatrixXd rinv_bt = r_inv.solve(b.transpose());
  const MatrixXd rinv_nt = r_inv.solve(w.N.transpose());
  const VectorXd rinv_n = r_inv.solve(w.n_lin);
  const MatrixXd lambda = (a - b * rinv_nt).transpose() - pi * b * rinv_bt;
  return w.rho * s - lambda * s - pi * (drift + b * rinv_n) - w.N * rinv_n +
         w.eta;
}

RiccatiSweep solve_riccati_sweep(const LqDynamics& dyn, const LqWeights& w,
                                 const TimeGrid& grid) {
  const SpdInverse r_inv(w.R, "R");
  const Eigen::Index n = w.terminal.rows();

  GridFunction pi(grid, n, n);
  try {
    pi = integrate_backward(
        [&](double t, const MatrixXd& p) {
          return riccati_derivative(p, dyn.A(t), dyn.B, w, r_inv);
        },
        w.terminal, grid, [](MatrixXd& p) { p = symmetrize(p); });
  } catch (const IntegrationDiverged& e) {
    std::ostringstream os;
    os << "Riccati blowup: last finite node " << e.node() + 1;
    throw RiccatiBlowup(os.str(), e.node() + 1);
  }

  const VectorXd s_terminal = -or_zero(w.terminal_linear, n);
  GridFunction s = integrate_backward(
      [&](double t, const MatrixXd& sv) -> MatrixXd {
        return offset_derivative(sv, pi.at(t), dyn.A(t), dyn.drift(t), dyn.B,
                                 w, r_inv);
      },
      s_terminal, grid);
  return {std::move(pi), std::move(s)};
}

MatrixXd feedback_gain(const MatrixXd& pi, const MatrixXd& b,
                       const LqWeights& w, const SpdInverse& r_inv) {
  return r_inv.solve(w.N.transpose() + b.transpose() * pi);
}

VectorXd feedforward(const VectorXd& s, const MatrixXd& b, const LqWeights& w,
                     const SpdInverse& r_inv) {
  return r_inv.solve(b.transpose() * s - w.n_lin);
}

MatrixXd are_residual(const MatrixXd& pi, const MatrixXd& a, const MatrixXd& b,
                      const LqWeights& w, const SpdInverse& r_inv) {
  const MatrixXd pbn = pi * b + w.N;
  return pi * a + a.transpose() * pi - pbn * r_inv.solve(pbn.transpose()) +
         w.Q - w.rho * pi;
}

MatrixXd solve_lyapunov(const MatrixXd& a, const MatrixXd& c) {
  const Eigen::Index n = a.rows();
  const MatrixXd eye = MatrixXd::Identity(n, n);
  MatrixXd op = MatrixXd::Zero(n * n, n * n);
  // column-major vec: vec(A'X) = (I kron A') vec X, vec(XA) = (A' kron I) vec X
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      op.block(i * n, j * n, n, n) += eye(i, j) * a.transpose();
      op.block(i * n, j * n, n, n) += a(j, i) * eye;
    }
  }
  const VectorXd rhs = -Eigen::Map<const VectorXd>(c.data(), n * n);
  const VectorXd x = op.fullPivLu().solve(rhs);
  return Eigen::Map<const MatrixXd>(x.data(), n, n);
}

double spectral_abscissa(const MatrixXd& a) {
  if (a.size() == 0) return -std::numeric_limits<double>::infinity();
  Eigen::EigenSolver<MatrixXd> es(a, false);
  return es.eigenvalues().real().maxCoeff();
}

AreSolution solve_are(const MatrixXd& a, const MatrixXd& b, const LqWeights& w,
                      const std::optional<MatrixXd>& warm_start) {
  const SpdInverse r_inv(w.R, "R");
  const Eigen::Index n = a.rows();
  const MatrixXd shift = 0.5 * w.rho * MatrixXd::Identity(n, n);

  AreSolution out;
  MatrixXd pi = warm_start.value_or(MatrixXd::Zero(n, n));
  const MatrixOde rhs = [&](double, const MatrixXd& p) {
    return riccati_derivative(p, a, b, w, r_inv);
  };
  double t = 0.0;
  while (t < kAreMaxHorizon) {
    if (rhs(0.0, pi).cwiseAbs().maxCoeff() < kAreDerivativeTol) break;
    pi = symmetrize(rk4_step(rhs, 0.0, pi, -kAreStep));
    t += kAreStep;
    if (!pi.allFinite()) {
      throw NumericalError(
          "ARE failure: long-horizon Riccati sweep diverged; no stabilizing "
          "solution");
    }
  }
  out.horizon_used = t;

  // Newton (Kleinman) polishing on the residual.
  double res = are_residual(pi, a, b, w, r_inv).norm();
  for (int it = 0; it < 8; ++it) {
    const MatrixXd k = r_inv.solve(b.transpose() * pi + w.N.transpose());
    const MatrixXd a_cl = a - shift - b * k;
    const MatrixXd f = are_residual(pi, a, b, w, r_inv);
    const MatrixXd delta = symmetrize(solve_lyapunov(a_cl, f));
    const MatrixXd next = symmetrize(pi + delta);
    const double next_res = are_residual(next, a, b, w, r_inv).norm();
    if (!next.allFinite() || (it > 0 && !(next_res < res))) break;
    pi = next;
    res = next_res;
    ++out.newton_steps;
    if (res < 1e-14 * std::max(1.0, pi.norm())) break;
  }

  const MatrixXd k = r_inv.solve(b.transpose() * pi + w.N.transpose());
  const double abscissa = spectral_abscissa(a - shift - b * k);
  if (!(abscissa < 0.0) || !pi.allFinite()) {
    std::ostringstream os;
    os << "ARE failure: no stabilizing solution found (closed-loop spectral "
          "abscissa "
       << abscissa << ")";
    throw NumericalError(os.str());
  }
  out.Pi = pi;
  out.residual = res;
  return out;
}

VectorXd steady_offset(const MatrixXd& pi, const MatrixXd& a,
                       const VectorXd& drift, const MatrixXd& b,
                       const LqWeights& w, const SpdInverse& r_inv) {
  const Eigen::Index n = a.rows();
  const MatrixXd rinv_bt = r_inv.solve(b.transpose());
  const MatrixXd rinv_nt = r_inv.solve(w.N.transpose());
  const VectorXd rinv_n = r_inv.solve(w.n_lin);
  const MatrixXd lambda = (a - b * rinv_nt).transpose() - pi * b * rinv_bt;
  const MatrixXd lhs = w.rho * MatrixXd::Identity(n, n) - lambda;
  const VectorXd rhs = pi * (drift + b * rinv_n) + w.N * rinv_n - w.eta;
  return lhs.fullPivLu().solve(rhs);
}

namespace {

HautusReport hautus(const MatrixXd& a, const MatrixXd& extra, bool stacked_below,
                    double tol) {
  HautusReport report;
  const Eigen::Index n = a.rows();
  if (n == 0) return report;
  Eigen::EigenSolver<MatrixXd> es(a, false);
  const Eigen::VectorXcd eig = es.eigenvalues();
  const double scale = std::max({1.0, a.norm(), extra.norm()});
  for (Eigen::Index i = 0; i < eig.size(); ++i) {
    const std::complex<double> lambda = eig(i);
    if (lambda.real() < -tol) continue;
    const Eigen::MatrixXcd shifted =
        lambda * Eigen::MatrixXcd::Identity(n, n) - a.cast<std::complex<double>>();
    Eigen::MatrixXcd test;
    if (stacked_below) {
      test.resize(n + extra.rows(), n);
      test << shifted, extra.cast<std::complex<double>>();
    } else {
      test.resize(n, n + extra.cols());
      test << shifted, extra.cast<std::complex<double>>();
    }
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(test);
    const auto& sv = svd.singularValues();
    int rank = 0;
    for (Eigen::Index k = 0; k < sv.size(); ++k) {
      if (sv(k) > 1e-9 * scale) ++rank;
    }
    const bool ok = rank == n;
    report.entries.push_back({lambda, rank, ok});
    report.passed = report.passed && ok;
  }
  return report;
}

}  // namespace

HautusReport stabilizability(const MatrixXd& a, const MatrixXd& b, double tol) {
  return hautus(a, b, false, tol);
}

HautusReport detectability(const MatrixXd& l, const MatrixXd& a, double tol) {
  return hautus(a, l, true, tol);
}

MatrixXd psd_sqrt(const MatrixXd& q) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(q));
  const VectorXd d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace mfg_lqg
