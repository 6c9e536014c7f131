#pragma once

#include <vector>

#include "mfg_lqg/joint_system.hpp"
#include "mfg_lqg/population_sim.hpp"

namespace mfg_lqg {

/// Optimal response of the deviator when all others keep their equilibrium
/// laws: a Riccati sweep on the joint closed-loop dynamics, read off at the
/// chain nodes.
struct BestResponse {
  RiccatiSweep sweep;
  ChainLaw law;
};

BestResponse solve_best_response(const JointSystem& js);

struct NashGapReport {
  int agent = 0;  // 0 = major, i = minor i (1-based)
  double cost_equilibrium = 0.0;
  double cost_best_response = 0.0;
  double gap = 0.0;  // cost_equilibrium - cost_best_response
};

/// Expected-cost improvement available to one agent by deviating. Both costs
/// are evaluated exactly on the same Euler chain.
NashGapReport epsilon_nash_gap(const MmMfgProblem& p, const MfgSolution& sol,
                               const PopulationConfig& cfg, int agent);

struct GapRow {
  int N = 0;
  double major_gap = 0.0;
  std::vector<double> type_gaps;  // first minor of each type; NaN if absent
  double worst = 0.0;             // max over the major and the types
};

/// Gap of the major and of one representative minor per type, for each N.
std::vector<GapRow> gap_vs_population(const MmMfgProblem& p,
                                      const MfgSolution& sol,
                                      const std::vector<int>& Ns,
                                      const PopulationConfig& cfg);

}  // namespace mfg_lqg
