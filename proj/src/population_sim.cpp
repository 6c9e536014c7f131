#include "mfg_lqg/population_sim.hpp"

#include <cmath>
#include <string>

#include "mfg_lqg/errors.hpp"
#include "mfg_lqg/joint_system.hpp"
#include "mfg_lqg/parallel.hpp"
#include "mfg_lqg/rng.hpp"

namespace mfg_lqg {

namespace {

// Step index reserved for initial-state draws.
constexpr std::uint32_t kInitialStep = 0xFFFFFFFFu;

std::vector<int> counts_of(const std::vector<int>& types, int K) {
  std::vector<int> c(K, 0);
  for (int k : types) ++c[k];
  return c;
}

// Euler-Maruyama under the equilibrium laws for one path; calls
// obs(j, X, x0, xbar, U) at every node before stepping. X is n x N (one
// column per minor), U is m x (N+1) (major first).
class PathRunner {
 public:
  PathRunner(const MmMfgProblem& p, const MfgSolution& sol,
             const std::vector<int>& types, const PopulationConfig& cfg)
      : p_(p), sol_(sol), types_(types), noise_(cfg.master_seed),
        prop_(sol.law, MeanFieldScheme::kEuler) {
    const MatrixXd& cov = cfg.initial_cov ? *cfg.initial_cov : p.initial_cov;
    if (cov.rows() != p.n() || cov.cols() != p.n()) {
      throw ConfigError("initial covariance must be n x n");
    }
    if (!psd_check(cov, 1e-12)) {
      throw ConfigError("initial covariance not positive semidefinite");
    }
    cov_root_ = psd_sqrt(cov);
    xbar0_ = cfg.xbar0 ? *cfg.xbar0 : VectorXd::Zero(p.nK());
    if (xbar0_.size() != p.nK()) throw ConfigError("xbar0 must have nK rows");
  }

  template <class Obs>
  void run(int path, Obs&& obs) const {
    const Eigen::Index n = p_.n(), m = p_.m(), nk = p_.nK();
    const int N = static_cast<int>(types_.size());
    const int K = p_.K();
    const TimeGrid& grid = p_.grid;
    const double h = grid.step(), sqrt_h = std::sqrt(h);
    const auto pth = static_cast<std::uint32_t>(path);

    MatrixXd X(n, N), Xn(n, N), U(m, N + 1);
    VectorXd x0(n), x0n(n), xbar = xbar0_, avg(n);
    std::vector<double> xi(std::max<Eigen::Index>(n, 1));

    auto draw = [&](std::uint32_t step, int agent, Eigen::Index count) {
      if (static_cast<Eigen::Index>(xi.size()) < count) xi.resize(count);
      noise_.normals(step, static_cast<std::uint32_t>(agent), pth, xi.data(),
                     static_cast<int>(count));
      return Eigen::Map<const VectorXd>(xi.data(), count);
    };

    x0 = p_.initial_mean + cov_root_ * draw(kInitialStep, 0, n);
    for (int i = 0; i < N; ++i) {
      X.col(i) = p_.initial_mean + cov_root_ * draw(kInitialStep, i + 1, n);
    }

    std::vector<VectorXd> common(K), offset(K);
    const int steps = grid.num_steps();
    for (int j = 0; j <= steps; ++j) {
      avg = X.rowwise().mean();

      // Controls at node j.
      const MatrixXd& k0 = sol_.major.K[j];
      U.col(0) = -k0.leftCols(n) * x0 - k0.rightCols(nk) * xbar -
                 sol_.major.kff[j];
      for (int k = 0; k < K; ++k) {
        const MatrixXd& g = sol_.minors[k].K[j];
        offset[k] = g.middleCols(n, n) * x0 + g.rightCols(nk) * xbar +
                    sol_.minors[k].kff[j];
      }
      for (int i = 0; i < N; ++i) {
        const int k = types_[i];
        U.col(i + 1) =
            -sol_.minors[k].K[j].leftCols(n) * X.col(i) - offset[k];
      }
      if (!all_finite(X) || !all_finite(x0) || !all_finite(xbar)) {
        throw PathDiverged("simulated state not finite", path, j);
      }
      obs(j, X, x0, xbar, U);
      if (j == steps) break;

      // Euler-Maruyama step.
      const MajorParams& mj = p_.major;
      x0n = x0 + h * (mj.A * x0 + mj.F * avg + mj.B * U.col(0) + mj.b[j]);
      const MatrixXd s0 = mj.sigma[j];
      if (s0.cols() > 0) x0n += sqrt_h * s0 * draw(j, 0, s0.cols());
      for (int k = 0; k < K; ++k) {
        const MinorTypeParams& mk = p_.minors[k];
        common[k] = mk.F * avg + mk.G * x0 + mk.b[j];
      }
      for (int i = 0; i < N; ++i) {
        const MinorTypeParams& mk = p_.minors[types_[i]];
        Xn.col(i) = X.col(i) + h * (mk.A * X.col(i) + mk.B * U.col(i + 1) +
                                    common[types_[i]]);
        const MatrixXd& si = mk.sigma[j];
        if (si.cols() > 0) Xn.col(i) += sqrt_h * si * draw(j, i + 1, si.cols());
      }
      xbar = prop_.step(j, xbar, x0, x0n);
      x0.swap(x0n);
      X.swap(Xn);
    }
  }

 private:
  const MmMfgProblem& p_;
  const MfgSolution& sol_;
  const std::vector<int>& types_;
  NoiseStream noise_;
  MeanFieldPropagator prop_;
  MatrixXd cov_root_;
  VectorXd xbar0_;
};

void check_population_config(const PopulationConfig& cfg) {
  if (cfg.N < 1) throw ConfigError("N must be at least 1");
  if (cfg.num_paths < 1) throw ConfigError("num_paths must be at least 1");
}

// Mean and standard error; deviations taken against the first sample so
// identical samples give exactly zero error.
void mean_and_se(const std::vector<double>& v, double& mean, double& se) {
  const double base = v.front();
  double sum = 0.0;
  for (double x : v) sum += x - base;
  const double shift = sum / static_cast<double>(v.size());
  mean = base + shift;
  se = 0.0;
  if (v.size() < 2) return;
  double ss = 0.0;
  for (double x : v) ss += (x - base - shift) * (x - base - shift);
  se = std::sqrt(ss / static_cast<double>(v.size() - 1) /
                 static_cast<double>(v.size()));
}

}  // namespace

std::vector<int> assign_types(const VectorXd& pi, int N) {
  if (N < 0) throw ConfigError("N must be nonnegative");
  const int K = static_cast<int>(pi.size());
  if (K == 0) throw ConfigError("pi is empty");
  std::vector<int> types(N), count(K, 0);
  for (int j = 1; j <= N; ++j) {
    int best = 0;
    double best_deficit = pi(0) * j - count[0];
    for (int k = 1; k < K; ++k) {
      const double d = pi(k) * j - count[k];
      if (d > best_deficit) {
        best = k;
        best_deficit = d;
      }
    }
    types[j - 1] = best;
    ++count[best];
  }
  return types;
}

std::vector<int> resolve_types(const MmMfgProblem& p,
                               const PopulationConfig& cfg) {
  check_population_config(cfg);
  if (cfg.types.empty()) return assign_types(p.pi, cfg.N);
  if (static_cast<int>(cfg.types.size()) != cfg.N) {
    throw ConfigError("types list has " + std::to_string(cfg.types.size()) +
                      " entries, expected N = " + std::to_string(cfg.N));
  }
  for (int k : cfg.types) {
    if (k < 0 || k >= p.K()) {
      throw ConfigError("type " + std::to_string(k) + " out of range");
    }
  }
  return cfg.types;
}

TrajectoryBundle simulate_population(const MmMfgProblem& p,
                                     const MfgSolution& sol,
                                     const PopulationConfig& cfg) {
  TrajectoryBundle b;
  b.types = resolve_types(p, cfg);
  b.grid = p.grid;
  b.N = cfg.N;
  b.K = p.K();
  b.n = p.n();
  b.m = p.m();
  const Eigen::Index n = b.n, m = b.m, nk = p.nK();
  const int nodes = p.grid.num_nodes();
  const PathRunner runner(p, sol, b.types, cfg);

  b.paths.resize(cfg.num_paths);
  parallel_for(cfg.num_paths, resolve_threads(cfg.threads), [&](int path) {
    PathTrajectory tr;
    tr.minors.resize(n * cfg.N, nodes);
    tr.major.resize(n, nodes);
    tr.xbar.resize(nk, nodes);
    tr.average.resize(n, nodes);
    tr.controls.resize(m * (cfg.N + 1), nodes);
    runner.run(path, [&](int j, const MatrixXd& X, const VectorXd& x0,
                         const VectorXd& xbar, const MatrixXd& U) {
      tr.minors.col(j) = Eigen::Map<const VectorXd>(X.data(), X.size());
      tr.major.col(j) = x0;
      tr.xbar.col(j) = xbar;
      tr.average.col(j) = X.rowwise().mean();
      tr.controls.col(j) = Eigen::Map<const VectorXd>(U.data(), U.size());
    });
    b.paths[path] = std::move(tr);
  });
  return b;
}

std::vector<GridFunction> empirical_mean_field(const TrajectoryBundle& b) {
  const std::vector<int> counts = counts_of(b.types, b.K);
  const int nodes = b.grid.num_nodes();
  std::vector<GridFunction> out;
  out.reserve(b.paths.size());
  for (const PathTrajectory& tr : b.paths) {
    GridFunction gf(b.grid, b.n * b.K, 1);
    for (int j = 0; j < nodes; ++j) {
      VectorXd v = VectorXd::Zero(b.n * b.K);
      for (int i = 0; i < b.N; ++i) {
        v.segment(b.n * b.types[i], b.n) += tr.minors.col(j).segment(b.n * i, b.n);
      }
      // Types without agents report zeros.
      for (int k = 0; k < b.K; ++k) {
        if (counts[k] > 0) v.segment(b.n * k, b.n) /= counts[k];
      }
      gf[j] = v;
    }
    out.push_back(std::move(gf));
  }
  return out;
}

CostReport finite_cost_monte_carlo(const MmMfgProblem& p,
                                   const TrajectoryBundle& b, int agent) {
  if (agent < 0 || agent > b.N) {
    throw OutOfRangeError("agent index " + std::to_string(agent) +
                          " outside [0, " + std::to_string(b.N) + "]");
  }
  if (b.paths.empty()) throw ConfigError("bundle has no paths");
  const Eigen::Index n = b.n, m = b.m;
  const TimeGrid& grid = b.grid;
  const std::vector<double> wts = trapezoid_weights(grid);
  const int steps = grid.num_steps();

  const MatrixXd *q, *qhat, *ncross, *r;
  if (agent == 0) {
    q = &p.major.Q;
    qhat = &p.major.Qhat;
    ncross = &p.major.N;
    r = &p.major.R;
  } else {
    const MinorTypeParams& mk = p.minors[b.types[agent - 1]];
    q = &mk.Q;
    qhat = &mk.Qhat;
    ncross = &mk.N;
    r = &mk.R;
  }

  std::vector<double> values;
  values.reserve(b.paths.size());
  for (const PathTrajectory& tr : b.paths) {
    auto error_at = [&](int j) -> VectorXd {
      const VectorXd x0 = tr.major.col(j);
      const VectorXd avg = tr.average.col(j);
      if (agent == 0) return x0 - p.major.H * avg - p.major.eta;
      const MinorTypeParams& mk = p.minors[b.types[agent - 1]];
      return tr.minors.col(j).segment(n * (agent - 1), n) - mk.H * x0 -
             mk.Hhat * avg - mk.eta;
    };
    double cost = 0.0;
    for (int j = 0; j <= steps; ++j) {
      const VectorXd e = error_at(j);
      const VectorXd u = tr.controls.col(j).segment(m * agent, m);
      const double running = e.dot(*q * e) + 2.0 * e.dot(*ncross * u) +
                             u.dot(*r * u);
      cost += 0.5 * wts[j] * std::exp(-p.rho * grid.node(j)) * running;
    }
    const VectorXd e = error_at(steps);
    cost += 0.5 * std::exp(-p.rho * grid.t_end()) * e.dot(*qhat * e);
    values.push_back(cost);
  }

  CostReport rep;
  rep.agent = agent;
  rep.method = "monte_carlo";
  rep.num_paths = static_cast<int>(values.size());
  mean_and_se(values, rep.value, rep.std_error);
  return rep;
}

CostReport expected_cost_exact(const MmMfgProblem& p, const MfgSolution& sol,
                               const PopulationConfig& cfg, int agent) {
  const JointSystem js(p, sol, resolve_types(p, cfg), agent);
  CostReport rep;
  rep.agent = agent;
  rep.method = "moment";
  rep.value = chain_expected_cost(js, equilibrium_chain_law(js),
                                  js.initial_mean(cfg), js.initial_cov(cfg));
  return rep;
}

ConvergenceStudy mean_field_convergence_study(const MmMfgProblem& p,
                                              const MfgSolution& sol,
                                              const std::vector<int>& Ns,
                                              const PopulationConfig& cfg) {
  if (Ns.empty()) throw ConfigError("convergence study needs population sizes");
  ConvergenceStudy study;
  const Eigen::Index n = p.n();
  const int nodes = p.grid.num_nodes();
  for (int N : Ns) {
    PopulationConfig c = cfg;
    c.N = N;
    c.types.clear();
    const std::vector<int> types = resolve_types(p, c);
    const std::vector<int> counts = counts_of(types, p.K());
    const PathRunner runner(p, sol, types, c);
    std::vector<double> sums(c.num_paths, 0.0);
    parallel_for(c.num_paths, resolve_threads(c.threads), [&](int path) {
      VectorXd v(p.nK());
      double acc = 0.0;
      runner.run(path, [&](int, const MatrixXd& X, const VectorXd&,
                           const VectorXd& xbar, const MatrixXd&) {
        v.setZero();
        for (int i = 0; i < N; ++i) v.segment(n * types[i], n) += X.col(i);
        for (int k = 0; k < p.K(); ++k) {
          if (counts[k] == 0) continue;
          acc += (v.segment(n * k, n) / counts[k] - xbar.segment(n * k, n))
                     .squaredNorm();
        }
      });
      sums[path] = acc;
    });
    double total = 0.0;
    for (double s : sums) total += s;
    study.rows.push_back(
        {N, std::sqrt(total / (static_cast<double>(c.num_paths) * nodes))});
  }

  // Least squares on (log N, log rms).
  const double cnt = static_cast<double>(study.rows.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const ConvergenceRow& row : study.rows) {
    const double x = std::log(static_cast<double>(row.N));
    const double y = std::log(row.rms);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = cnt * sxx - sx * sx;
  if (study.rows.size() >= 2 && denom > 0.0) {
    study.slope = (cnt * sxy - sx * sy) / denom;
    study.intercept = (sy - study.slope * sx) / cnt;
  }
  return study;
}

}  // namespace mfg_lqg
