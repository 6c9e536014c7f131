#pragma once

#include <optional>
#include <vector>

#include "mfg_lqg/mfg_model.hpp"

namespace mfg_lqg {

struct FixedPointConfig {
  double damping = 0.5;  // theta in (0, 1]
  double tol = 1e-8;
  int max_iters = 500;
  // Optional starting law; by default the one induced by Pi_k = 0, s_k = 0.
  std::optional<MeanFieldLaw> warm_start;
};

struct FixedPointReport {
  int iterations = 0;
  std::vector<double> residuals;  // sup |F(x) - x| per iteration
  bool converged = false;
};

/// Solution of one agent class on the grid: u = -K X - kff.
struct AgentSolution {
  GridFunction Pi;
  GridFunction s;
  GridFunction K;
  GridFunction kff;
};

struct MfgSolution {
  AgentSolution major;               // extended state [x0; xbar]
  std::vector<AgentSolution> minors;  // extended state [xi; x0; xbar]
  MeanFieldLaw law;
  FixedPointReport report;
};

void check_fixed_point_config(const FixedPointConfig& cfg);

/// Law induced by given minor Riccati matrices and offsets (one per type,
/// each a (2n+nK) grid function).
MeanFieldLaw consistency_update(const MmMfgProblem& p,
                                const std::vector<GridFunction>& pik,
                                const std::vector<GridFunction>& sk);

/// One exact pass: Riccati sweeps under `law`, then the consistency update.
struct ConsistencyPass {
  AgentSolution major;
  std::vector<AgentSolution> minors;
  MeanFieldLaw next;
};
ConsistencyPass consistency_pass(const MmMfgProblem& p,
                                 const MeanFieldLaw& law);

/// Damped Picard iteration on (Abar, Gbar, mbar).
MfgSolution solve_consistency_finite(const MmMfgProblem& p,
                                     const FixedPointConfig& cfg = {});

/// u0 = -R0^{-1}[N0ext' X0 - nbar0 + Bb0'(Pi0(t) X0 + s0(t))].
VectorXd equilibrium_feedback_major(const MfgSolution& sol, double t,
                                    const VectorXd& x0_ext);
/// Same for type k (0-based) with Xi = [xi; x0; xbar].
VectorXd equilibrium_feedback_minor(const MfgSolution& sol, int k, double t,
                                    const VectorXd& xi_ext);

/// kRk4 treats the major path as linear between nodes; kEuler is the
/// explicit scheme the population simulator uses for the agents.
enum class MeanFieldScheme { kRk4, kEuler };

/// Per-step affine map of the xbar update driven by a major path:
///   xbar_{j+1} = P_j xbar_j + Q0_j x0_j + Q1_j x0_{j+1} + c_j.
class MeanFieldPropagator {
 public:
  MeanFieldPropagator() = default;
  explicit MeanFieldPropagator(const MeanFieldLaw& law,
                               MeanFieldScheme scheme = MeanFieldScheme::kRk4);

  int num_steps() const { return static_cast<int>(p_.size()); }
  const MatrixXd& P(int j) const { return p_[j]; }
  const MatrixXd& Q0(int j) const { return q0_[j]; }
  const MatrixXd& Q1(int j) const { return q1_[j]; }
  const VectorXd& c(int j) const { return c_[j]; }

  VectorXd step(int j, const VectorXd& xbar, const VectorXd& x0_j,
                const VectorXd& x0_next) const {
    return p_[j] * xbar + q0_[j] * x0_j + q1_[j] * x0_next + c_[j];
  }

 private:
  std::vector<MatrixXd> p_, q0_, q1_;
  std::vector<VectorXd> c_;
};

/// dxbar = (Abar xbar + Gbar x0 + mbar) dt along a given major path.
GridFunction mean_field_trajectory(
    const MeanFieldLaw& law, const GridFunction& x0_path,
    const VectorXd& xbar0, MeanFieldScheme scheme = MeanFieldScheme::kRk4);
GridFunction mean_field_trajectory(
    const MfgSolution& sol, const GridFunction& x0_path,
    const VectorXd& xbar0, MeanFieldScheme scheme = MeanFieldScheme::kRk4);

/// Stationary solution of the discounted problem.
struct StationaryAgent {
  MatrixXd Pi;
  VectorXd s;
  MatrixXd K;
  VectorXd kff;
  double are_residual = 0.0;
};

struct StationaryMfgSolution {
  StationaryAgent major;
  std::vector<StationaryAgent> minors;
  MatrixXd Abar, Gbar;
  VectorXd mbar;
  FixedPointReport report;
};

/// Picard iteration with AREs and steady offsets. Requires rho > 0 and
/// constant drifts. Hautus tests on every extended pair run before each
/// solve; closed-loop stability is checked on the result.
StationaryMfgSolution solve_consistency_infinite(
    const MmMfgProblem& p, const FixedPointConfig& cfg = {});

/// Spectral abscissae of A_ext - Bb K - rho/2 I for the major and each type;
/// passes when all are negative.
ValidationReport stationary_stability_report(const MmMfgProblem& p,
                                             const StationaryMfgSolution& sol);

}  // namespace mfg_lqg
