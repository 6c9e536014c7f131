#pragma once

#include <vector>

#include "mfg_lqg/mfg_solver.hpp"
#include "mfg_lqg/population_sim.hpp"

namespace mfg_lqg {

// Joint state z = [x^1; ...; x^N; x0; xbar] of a finite population where
// every agent except one ("the deviator") plays its equilibrium law. xbar is
// the solver's mean field, driven by the realized major state.

inline constexpr Eigen::Index kMaxJointDim = 2000;

/// One Euler step z_{j+1} = T z_j + Gamma u_j + c + S xi_j, with xi standard
/// normal. The xbar rows take the same explicit Euler step.
struct ChainStep {
  MatrixXd T;
  MatrixXd Gamma;
  VectorXd c;
  MatrixXd S;
};

class JointSystem {
 public:
  /// deviator: 0 = major, i = minor i (1-based).
  JointSystem(const MmMfgProblem& p, const MfgSolution& sol,
              std::vector<int> types, int deviator);

  const TimeGrid& grid() const { return p_->grid; }
  Eigen::Index dim() const { return dim_; }
  Eigen::Index control_dim() const { return bdev_.cols(); }
  int deviator() const { return deviator_; }
  int N() const { return static_cast<int>(types_.size()); }
  Eigen::Index minor_row(int i) const { return p_->n() * i; }  // 0-based i
  Eigen::Index major_row() const { return p_->n() * N(); }
  Eigen::Index xbar_row() const { return p_->n() * (N() + 1); }

  /// Continuous closed-loop drift matrix and vector (deviator open loop).
  MatrixXd A(double t) const;
  VectorXd drift(double t) const;
  const MatrixXd& Bdev() const { return bdev_; }
  /// Noise loading, columns grouped per agent (major first).
  MatrixXd Sigma(double t) const;
  Eigen::Index noise_dim() const { return noise_dim_; }

  ChainStep chain_step(int j) const;

  /// Deviator cost ½ e^{-rho t}[e'Qe + 2e'Nu + u'Ru] with e = C z - eta,
  /// terminal ½ e^{-rho T} e'Qhat e.
  const MatrixXd& C() const { return c_; }
  const VectorXd& eta() const { return eta_; }
  const MatrixXd& Q() const { return q_; }
  const MatrixXd& Qhat() const { return qhat_; }
  const MatrixXd& Ncross() const { return n_; }
  const MatrixXd& R() const { return r_; }
  double rho() const { return p_->rho; }

  /// LQ weights of the deviator's control problem in z.
  LqWeights weights() const;

  /// Deviator's equilibrium law written on z: u = -K z - k.
  MatrixXd equilibrium_gain(int j) const;
  VectorXd equilibrium_offset(int j) const;

  /// Mean and covariance of z(0).
  VectorXd initial_mean(const PopulationConfig& cfg) const;
  MatrixXd initial_cov(const PopulationConfig& cfg) const;

 private:
  const MmMfgProblem* p_;
  const MfgSolution* sol_;
  std::vector<int> types_;
  int deviator_;
  Eigen::Index dim_ = 0;
  Eigen::Index noise_dim_ = 0;
  std::vector<Eigen::Index> noise_offset_;  // per agent, major first
  MeanFieldPropagator prop_;
  MatrixXd bdev_;
  MatrixXd c_;
  VectorXd eta_;
  MatrixXd q_, qhat_, n_, r_;
};

/// Feedback law on the chain nodes: u_j = -K[j] z_j - k[j].
struct ChainLaw {
  std::vector<MatrixXd> K;
  std::vector<VectorXd> k;
};

ChainLaw equilibrium_chain_law(const JointSystem& js);

/// Exact expected discrete cost of the deviator on the Euler chain
/// (trapezoid in time) via second moments of [z; 1].
double chain_expected_cost(const JointSystem& js, const ChainLaw& law,
                           const VectorXd& z0_mean, const MatrixXd& z0_cov);

}  // namespace mfg_lqg
