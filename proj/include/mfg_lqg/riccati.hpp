#pragma once

#include <complex>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfg_lqg/numerics.hpp"

namespace mfg_lqg {

using MatrixFn = std::function<MatrixXd(double)>;

/// Quadratic cost
///   1/2 E[ e^{-rho T}(x'G x - 2 x'g) + int e^{-rho t}{x'Qx + 2x'Nu + u'Ru
///          - 2x'eta - 2u'n} dt ].
struct LqWeights {
  MatrixXd Q;
  MatrixXd N;
  MatrixXd R;
  VectorXd eta;
  VectorXd n_lin;
  double rho = 0.0;
  MatrixXd terminal;         // G
  VectorXd terminal_linear;  // g, empty means zero
};

/// dx = (A(t) x + B u + drift(t)) dt + noise
struct LqDynamics {
  MatrixFn A;
  MatrixXd B;
  MatrixFn drift;
};

/// Cached R^{-1} via LLT. Throws AssumptionViolation when R is not SPD.
class SpdInverse {
 public:
  SpdInverse() = default;
  SpdInverse(const MatrixXd& r, const std::string& name);
  MatrixXd solve(const MatrixXd& rhs) const { return llt_.solve(rhs); }
  const MatrixXd& inverse() const { return inverse_; }

 private:
  Eigen::LLT<MatrixXd> llt_;
  MatrixXd inverse_;
};

struct RiccatiSweep {
  GridFunction Pi;
  GridFunction s;
};

/// dPi/dt for  rho Pi = Pi' + Pi A + A'Pi - (Pi B + N) R^{-1} (B'Pi + N') + Q.
MatrixXd riccati_derivative(const MatrixXd& pi, const MatrixXd& a,
                            const MatrixXd& b, const LqWeights& w,
                            const SpdInverse& r_inv);

/// ds/dt for
///   rho s = s' + [(A - B R^{-1} N')' - Pi B R^{-1} B'] s
///           + Pi (drift + B R^{-1} n) + N R^{-1} n - eta.
VectorXd offset_derivative(const VectorXd& s, const MatrixXd& pi,
                           const MatrixXd& a, const VectorXd& drift,
                           const MatrixXd& b, const LqWeights& w,
                           const SpdInverse& r_inv);

/// Backward RK4 sweep of Pi (symmetrized each step) then of s with Pi
/// interpolated. Pi(T) = G, s(T) = -g.
RiccatiSweep solve_riccati_sweep(const LqDynamics& dyn, const LqWeights& w,
                                 const TimeGrid& grid);

/// Feedback gain R^{-1}(N' + B'Pi).
MatrixXd feedback_gain(const MatrixXd& pi, const MatrixXd& b,
                       const LqWeights& w, const SpdInverse& r_inv);
/// Feedforward R^{-1}(B's - n); the control is u = -K x - kff.
VectorXd feedforward(const VectorXd& s, const MatrixXd& b, const LqWeights& w,
                     const SpdInverse& r_inv);

struct AreSolution {
  MatrixXd Pi;
  double residual = 0.0;     // Frobenius norm of the ARE residual
  double horizon_used = 0.0;  // length of the backward integration
  int newton_steps = 0;
};

/// rho Pi = Pi A + A'Pi - (Pi B + N) R^{-1}(B'Pi + N') + Q, stabilizing root.
/// Long-horizon backward integration from `warm_start` (zero by default)
/// until ||dPi/dt||_inf < 1e-10 or a horizon of 200, then Newton polishing.
AreSolution solve_are(const MatrixXd& a, const MatrixXd& b, const LqWeights& w,
                      const std::optional<MatrixXd>& warm_start = std::nullopt);

MatrixXd are_residual(const MatrixXd& pi, const MatrixXd& a, const MatrixXd& b,
                      const LqWeights& w, const SpdInverse& r_inv);

/// Steady offset obtained by setting ds/dt = 0 with constant drift.
VectorXd steady_offset(const MatrixXd& pi, const MatrixXd& a,
                       const VectorXd& drift, const MatrixXd& b,
                       const LqWeights& w, const SpdInverse& r_inv);

/// X solving A'X + X A + C = 0 (dense Kronecker solve).
MatrixXd solve_lyapunov(const MatrixXd& a, const MatrixXd& c);

/// max real part of the spectrum.
double spectral_abscissa(const MatrixXd& a);

struct HautusEntry {
  std::complex<double> eigenvalue;
  int rank = 0;
  bool passed = false;
};

struct HautusReport {
  bool passed = true;
  std::vector<HautusEntry> entries;  // only modes with Re >= -tol
};

/// (A, B) stabilizable: rank [lambda I - A, B] = n for Re lambda >= -tol.
HautusReport stabilizability(const MatrixXd& a, const MatrixXd& b, double tol);
/// (L, A) detectable: rank [lambda I - A; L] = n for Re lambda >= -tol.
HautusReport detectability(const MatrixXd& l, const MatrixXd& a, double tol);

/// Symmetric PSD square root (negative eigenvalues clipped to zero).
MatrixXd psd_sqrt(const MatrixXd& q);

}  // namespace mfg_lqg
