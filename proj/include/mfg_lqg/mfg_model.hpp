#pragma once

#include <vector>

#include <Eigen/Dense>

#include "mfg_lqg/numerics.hpp"
#include "mfg_lqg/report.hpp"
#include "mfg_lqg/riccati.hpp"

namespace mfg_lqg {

/// dx0 = (A x0 + F x^(N) + B u0 + b(t)) dt + sigma(t) dw0, tracking
/// Phi = H x^(N) + eta.
struct MajorParams {
  MatrixXd A, F, B;
  GridFunction b;      // n x 1
  GridFunction sigma;  // n x r0
  MatrixXd Qhat, Q, N, R, H;
  VectorXd eta;
};

/// dxi = (A xi + F x^(N) + G x0 + B ui + b(t)) dt + sigma(t) dwi, tracking
/// Psi = H x0 + Hhat x^(N) + eta.
struct MinorTypeParams {
  MatrixXd A, F, G, B;
  GridFunction b;
  GridFunction sigma;
  MatrixXd Qhat, Q, N, R, H, Hhat;
  VectorXd eta;
};

struct MmMfgProblem {
  MajorParams major;
  std::vector<MinorTypeParams> minors;
  VectorXd pi;  // limiting type fractions
  TimeGrid grid;
  double rho = 0.0;
  // Every initial state is drawn independently from N(initial_mean, cov).
  VectorXd initial_mean;
  MatrixXd initial_cov;

  Eigen::Index n() const { return major.A.rows(); }
  Eigen::Index m() const { return major.B.cols(); }
  int K() const { return static_cast<int>(minors.size()); }
  Eigen::Index nK() const { return n() * K(); }
};

/// Shape audit (throws ConfigError), convexity of every agent, pi a
/// distribution, zero-mean PSD initial law. Warns when the terminal cost has
/// a linear part, which the extended cost leaves out.
ValidationReport validate_problem(const MmMfgProblem& p, double tol = 1e-9);

/// pi (x) M = [pi_1 M, ..., pi_K M].
MatrixXd pi_kron(const VectorXd& pi, const MatrixXd& m);

/// n x nK selector with I_n in block k.
MatrixXd selector(Eigen::Index n, int K, int k);

struct MeanFieldMatrices {
  MatrixXd Abreve;     // nK x nK
  MatrixXd Gbreve;     // nK x n
  MatrixXd Bbreve;     // nK x mK
  GridFunction mbreve;  // nK x 1
};

MeanFieldMatrices build_mean_field_matrices(const MmMfgProblem& p);

/// Closed-loop mean field dxbar = (Abar xbar + Gbar x0 + mbar) dt.
struct MeanFieldLaw {
  GridFunction Abar;  // nK x nK
  GridFunction Gbar;  // nK x n
  GridFunction mbar;  // nK x 1
};

/// Extended major state X0 = [x0; xbar].
struct ExtendedMajorSystem {
  MatrixFn A;        // (n+nK)^2
  MatrixXd Bb;       // (n+nK) x m
  MatrixXd Btilde;   // (n+nK) x mK
  MatrixFn M;        // (n+nK) x 1
  MatrixFn Sigma;    // (n+nK) x r0
  MatrixXd L;        // [I, -H0^pi]
  MatrixXd G, Q, N;  // terminal, running, cross weights
  VectorXd etabar;
  VectorXd nbar;
  MatrixXd R;
  double rho = 0.0;

  Eigen::Index dim() const { return Bb.rows(); }
  LqWeights weights() const;
  LqDynamics dynamics() const;
};

/// Open-loop form with the raw mean-field matrices (A-tilde, M-tilde).
ExtendedMajorSystem build_extended_major(const MmMfgProblem& p,
                                         const MeanFieldMatrices& mf);
/// Closed-loop form with a mean-field law.
ExtendedMajorSystem build_extended_major(const MmMfgProblem& p,
                                         const MeanFieldLaw& law);

/// Extended minor state Xi = [xi; x0; xbar] for type k (0-based).
struct ExtendedMinorSystem {
  MatrixFn A;       // (2n+nK)^2, lower-right block is the major closed loop
  MatrixXd Bb;      // (2n+nK) x m
  MatrixXd Btilde;  // (2n+nK) x mK
  MatrixFn M;
  MatrixFn Sigma;   // (2n+nK) x (r_k + r0)
  MatrixXd L;       // [I, -H_k, -Hhat_k^pi]
  MatrixXd G, Q, N;
  VectorXd etabar;
  VectorXd nbar;
  MatrixXd R;
  double rho = 0.0;

  Eigen::Index dim() const { return Bb.rows(); }
  LqWeights weights() const;
  LqDynamics dynamics() const;
};

/// Pi0, s0 are the major's Riccati matrix and offset on the problem grid.
ExtendedMinorSystem build_extended_minor(const MmMfgProblem& p, int k,
                                         const ExtendedMajorSystem& major,
                                         const GridFunction& pi0,
                                         const GridFunction& s0);

/// Stationary variant: constant Pi0, s0.
ExtendedMinorSystem build_extended_minor(const MmMfgProblem& p, int k,
                                         const ExtendedMajorSystem& major,
                                         const MatrixXd& pi0,
                                         const VectorXd& s0);

/// First block row of a (2n+nK) square matrix.
struct PiBlocks {
  MatrixXd P11;  // n x n
  MatrixXd P12;  // n x n
  MatrixXd P13;  // n x nK
};
PiBlocks extract_pi_blocks(const MatrixXd& pik, Eigen::Index n, int K);

/// Row split of a (2n+nK) x m matrix.
struct NBlocks {
  MatrixXd N11;  // n x m
  MatrixXd N21;  // n x m
  MatrixXd N31;  // nK x m
};
NBlocks split_n_blocks(const MatrixXd& nk, Eigen::Index n, int K);

}  // namespace mfg_lqg
