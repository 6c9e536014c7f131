#include "mfg_lqg/nash_gap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mfg_lqg/parallel.hpp"

namespace mfg_lqg {

BestResponse solve_best_response(const JointSystem& js) {
  const LqWeights w = js.weights();
  LqDynamics dyn;
  dyn.A = [&js](double t) { return js.A(t); };
  dyn.B = js.Bdev();
  dyn.drift = [&js](double t) { return MatrixXd(js.drift(t)); };

  BestResponse br;
  br.sweep = solve_riccati_sweep(dyn, w, js.grid());
  const SpdInverse r_inv(w.R, "deviator R");
  const int nodes = js.grid().num_nodes();
  br.law.K.reserve(nodes);
  br.law.k.reserve(nodes);
  for (int j = 0; j < nodes; ++j) {
    br.law.K.push_back(feedback_gain(br.sweep.Pi[j], dyn.B, w, r_inv));
    br.law.k.push_back(feedforward(br.sweep.s[j], dyn.B, w, r_inv));
  }
  return br;
}

NashGapReport epsilon_nash_gap(const MmMfgProblem& p, const MfgSolution& sol,
                               const PopulationConfig& cfg, int agent) {
  const JointSystem js(p, sol, resolve_types(p, cfg), agent);
  const VectorXd mean = js.initial_mean(cfg);
  const MatrixXd cov = js.initial_cov(cfg);
  NashGapReport rep;
  rep.agent = agent;
  rep.cost_equilibrium =
      chain_expected_cost(js, equilibrium_chain_law(js), mean, cov);
  rep.cost_best_response =
      chain_expected_cost(js, solve_best_response(js).law, mean, cov);
  rep.gap = rep.cost_equilibrium - rep.cost_best_response;
  return rep;
}

std::vector<GapRow> gap_vs_population(const MmMfgProblem& p,
                                      const MfgSolution& sol,
                                      const std::vector<int>& Ns,
                                      const PopulationConfig& cfg) {
  // One cell per (N, deviator); slot 0 of each row is the major.
  struct Cell {
    int row, slot, agent;
  };
  std::vector<GapRow> rows;
  std::vector<PopulationConfig> cfgs;
  std::vector<Cell> cells;
  for (int N : Ns) {
    PopulationConfig c = cfg;
    c.N = N;
    c.types.clear();
    const std::vector<int> types = resolve_types(p, c);
    const int r = static_cast<int>(rows.size());
    GapRow row;
    row.N = N;
    row.type_gaps.assign(p.K(), std::numeric_limits<double>::quiet_NaN());
    rows.push_back(row);
    cfgs.push_back(c);
    cells.push_back({r, 0, 0});
    for (int k = 0; k < p.K(); ++k) {
      const auto it = std::find(types.begin(), types.end(), k);
      if (it != types.end()) {
        cells.push_back({r, k + 1, static_cast<int>(it - types.begin()) + 1});
      }
    }
  }

  std::vector<double> gaps(cells.size());
  parallel_for(static_cast<int>(cells.size()), resolve_threads(cfg.threads),
               [&](int i) {
                 const Cell& c = cells[i];
                 gaps[i] = epsilon_nash_gap(p, sol, cfgs[c.row], c.agent).gap;
               });

  for (std::size_t i = 0; i < cells.size(); ++i) {
    GapRow& row = rows[cells[i].row];
    if (cells[i].slot == 0) {
      row.major_gap = gaps[i];
    } else {
      row.type_gaps[cells[i].slot - 1] = gaps[i];
    }
  }
  for (GapRow& row : rows) {
    row.worst = row.major_gap;
    for (double g : row.type_gaps) {
      if (!std::isnan(g)) row.worst = std::max(row.worst, g);
    }
  }
  return rows;
}

}  // namespace mfg_lqg
