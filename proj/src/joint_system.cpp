#include "mfg_lqg/joint_system.hpp"

#include <cmath>
#include <string>

#include "mfg_lqg/errors.hpp"
#include "mfg_lqg/moments.hpp"

namespace mfg_lqg {

JointSystem::JointSystem(const MmMfgProblem& p, const MfgSolution& sol,
                         std::vector<int> types, int deviator)
    : p_(&p), sol_(&sol), types_(std::move(types)), deviator_(deviator) {
  const int n_agents = N();
  const Eigen::Index n = p.n();
  if (n_agents < 1) throw ConfigError("population needs at least one minor");
  if (deviator < 0 || deviator > n_agents) {
    throw OutOfRangeError("deviator index " + std::to_string(deviator) +
                          " outside [0, " + std::to_string(n_agents) + "]");
  }
  for (int k : types_) {
    if (k < 0 || k >= p.K()) throw ConfigError("minor type out of range");
  }
  dim_ = n * (n_agents + 1) + p.nK();
  if (dim_ > kMaxJointDim) {
    throw UnsupportedError("joint dimension " + std::to_string(dim_) +
                           " exceeds " + std::to_string(kMaxJointDim));
  }

  noise_offset_.resize(n_agents + 1);
  noise_offset_[0] = 0;
  noise_dim_ = p.major.sigma.cols();
  for (int i = 0; i < n_agents; ++i) {
    noise_offset_[i + 1] = noise_dim_;
    noise_dim_ += p.minors[types_[i]].sigma.cols();
  }

  prop_ = MeanFieldPropagator(sol.law, MeanFieldScheme::kEuler);

  MatrixXd avg = MatrixXd::Zero(n, dim_);
  for (int i = 0; i < n_agents; ++i) {
    avg.middleCols(minor_row(i), n) =
        MatrixXd::Identity(n, n) / static_cast<double>(n_agents);
  }
  c_ = MatrixXd::Zero(n, dim_);
  if (deviator == 0) {
    const MajorParams& mj = p.major;
    c_.middleCols(major_row(), n).setIdentity();
    c_ -= mj.H * avg;
    eta_ = mj.eta;
    q_ = mj.Q;
    qhat_ = mj.Qhat;
    n_ = mj.N;
    r_ = mj.R;
    bdev_ = MatrixXd::Zero(dim_, mj.B.cols());
    bdev_.middleRows(major_row(), n) = mj.B;
  } else {
    const int i = deviator - 1;
    const MinorTypeParams& mk = p.minors[types_[i]];
    c_.middleCols(minor_row(i), n).setIdentity();
    c_.middleCols(major_row(), n) -= mk.H;
    c_ -= mk.Hhat * avg;
    eta_ = mk.eta;
    q_ = mk.Q;
    qhat_ = mk.Qhat;
    n_ = mk.N;
    r_ = mk.R;
    bdev_ = MatrixXd::Zero(dim_, mk.B.cols());
    bdev_.middleRows(minor_row(i), n) = mk.B;
  }
}

MatrixXd JointSystem::A(double t) const {
  const MmMfgProblem& p = *p_;
  const Eigen::Index n = p.n(), nk = p.nK();
  const Eigen::Index r0 = major_row(), rb = xbar_row();
  const int n_agents = N();
  const double inv_n = 1.0 / n_agents;
  MatrixXd a = MatrixXd::Zero(dim_, dim_);

  std::vector<MatrixXd> gains(p.K());
  for (int k = 0; k < p.K(); ++k) gains[k] = sol_->minors[k].K.at(t);

  for (int i = 0; i < n_agents; ++i) {
    const MinorTypeParams& mk = p.minors[types_[i]];
    const Eigen::Index r = minor_row(i);
    for (int l = 0; l < n_agents; ++l) {
      a.block(r, minor_row(l), n, n) += mk.F * inv_n;
    }
    a.block(r, r, n, n) += mk.A;
    a.block(r, r0, n, n) += mk.G;
    if (deviator_ != i + 1) {
      const MatrixXd& g = gains[types_[i]];
      a.block(r, r, n, n) -= mk.B * g.leftCols(n);
      a.block(r, r0, n, n) -= mk.B * g.middleCols(n, n);
      a.block(r, rb, n, nk) -= mk.B * g.rightCols(nk);
    }
  }

  const MajorParams& mj = p.major;
  for (int l = 0; l < n_agents; ++l) {
    a.block(r0, minor_row(l), n, n) += mj.F * inv_n;
  }
  a.block(r0, r0, n, n) += mj.A;
  if (deviator_ != 0) {
    const MatrixXd g = sol_->major.K.at(t);
    a.block(r0, r0, n, n) -= mj.B * g.leftCols(n);
    a.block(r0, rb, n, nk) -= mj.B * g.rightCols(nk);
  }

  a.block(rb, rb, nk, nk) = sol_->law.Abar.at(t);
  a.block(rb, r0, nk, n) = sol_->law.Gbar.at(t);
  return a;
}

VectorXd JointSystem::drift(double t) const {
  const MmMfgProblem& p = *p_;
  const Eigen::Index n = p.n();
  VectorXd f = VectorXd::Zero(dim_);
  for (int i = 0; i < N(); ++i) {
    const MinorTypeParams& mk = p.minors[types_[i]];
    f.segment(minor_row(i), n) = mk.b.at(t);
    if (deviator_ != i + 1) {
      f.segment(minor_row(i), n) -= mk.B * sol_->minors[types_[i]].kff.at(t);
    }
  }
  f.segment(major_row(), n) = p.major.b.at(t);
  if (deviator_ != 0) {
    f.segment(major_row(), n) -= p.major.B * sol_->major.kff.at(t);
  }
  f.tail(p.nK()) = sol_->law.mbar.at(t);
  return f;
}

MatrixXd JointSystem::Sigma(double t) const {
  const MmMfgProblem& p = *p_;
  const Eigen::Index n = p.n();
  MatrixXd s = MatrixXd::Zero(dim_, noise_dim_);
  const MatrixXd s0 = p.major.sigma.at(t);
  s.block(major_row(), 0, n, s0.cols()) = s0;
  for (int i = 0; i < N(); ++i) {
    const MatrixXd si = p.minors[types_[i]].sigma.at(t);
    s.block(minor_row(i), noise_offset_[i + 1], n, si.cols()) = si;
  }
  return s;
}

ChainStep JointSystem::chain_step(int j) const {
  const Eigen::Index n = p_->n(), nk = p_->nK();
  const Eigen::Index r0 = major_row(), rb = xbar_row();
  const double h = grid().step();
  const double t = grid().node(j);

  ChainStep st;
  st.T = h * A(t);
  st.T.diagonal().array() += 1.0;
  st.c = h * drift(t);
  st.S = std::sqrt(h) * Sigma(t);
  st.Gamma = h * bdev_;

  // xbar_{j+1} = P xbar + Q0 x0_j + Q1 x0_{j+1} + c with x0_{j+1} the
  // major row of this same step.
  const MatrixXd& q1 = prop_.Q1(j);
  MatrixXd t_bar = q1 * st.T.middleRows(r0, n);
  t_bar.block(0, rb, nk, nk) += prop_.P(j);
  t_bar.block(0, r0, nk, n) += prop_.Q0(j);
  st.T.middleRows(rb, nk) = t_bar;
  st.c.segment(rb, nk) = prop_.c(j) + q1 * st.c.segment(r0, n);
  st.S.middleRows(rb, nk) = q1 * st.S.middleRows(r0, n);
  st.Gamma.middleRows(rb, nk) = q1 * st.Gamma.middleRows(r0, n);
  return st;
}

LqWeights JointSystem::weights() const {
  LqWeights w;
  w.Q = c_.transpose() * q_ * c_;
  w.N = c_.transpose() * n_;
  w.R = r_;
  w.eta = c_.transpose() * q_ * eta_;
  w.n_lin = n_.transpose() * eta_;
  w.rho = p_->rho;
  w.terminal = c_.transpose() * qhat_ * c_;
  w.terminal_linear = c_.transpose() * qhat_ * eta_;
  return w;
}

MatrixXd JointSystem::equilibrium_gain(int j) const {
  const Eigen::Index n = p_->n(), nk = p_->nK();
  MatrixXd k = MatrixXd::Zero(control_dim(), dim_);
  if (deviator_ == 0) {
    const MatrixXd& g = sol_->major.K[j];
    k.middleCols(major_row(), n) = g.leftCols(n);
    k.middleCols(xbar_row(), nk) = g.rightCols(nk);
  } else {
    const int i = deviator_ - 1;
    const MatrixXd& g = sol_->minors[types_[i]].K[j];
    k.middleCols(minor_row(i), n) = g.leftCols(n);
    k.middleCols(major_row(), n) = g.middleCols(n, n);
    k.middleCols(xbar_row(), nk) = g.rightCols(nk);
  }
  return k;
}

VectorXd JointSystem::equilibrium_offset(int j) const {
  if (deviator_ == 0) return sol_->major.kff[j];
  return sol_->minors[types_[deviator_ - 1]].kff[j];
}

VectorXd JointSystem::initial_mean(const PopulationConfig& cfg) const {
  VectorXd z = VectorXd::Zero(dim_);
  const Eigen::Index n = p_->n();
  for (int i = 0; i < N(); ++i) z.segment(minor_row(i), n) = p_->initial_mean;
  z.segment(major_row(), n) = p_->initial_mean;
  if (cfg.xbar0) z.tail(p_->nK()) = *cfg.xbar0;
  return z;
}

MatrixXd JointSystem::initial_cov(const PopulationConfig& cfg) const {
  const Eigen::Index n = p_->n();
  const MatrixXd& cov = cfg.initial_cov ? *cfg.initial_cov : p_->initial_cov;
  MatrixXd v = MatrixXd::Zero(dim_, dim_);
  for (int a = 0; a <= N(); ++a) v.block(n * a, n * a, n, n) = cov;
  return v;
}

ChainLaw equilibrium_chain_law(const JointSystem& js) {
  ChainLaw law;
  const int nodes = js.grid().num_nodes();
  law.K.reserve(nodes);
  law.k.reserve(nodes);
  for (int j = 0; j < nodes; ++j) {
    law.K.push_back(js.equilibrium_gain(j));
    law.k.push_back(js.equilibrium_offset(j));
  }
  return law;
}

double chain_expected_cost(const JointSystem& js, const ChainLaw& law,
                           const VectorXd& z0_mean, const MatrixXd& z0_cov) {
  const TimeGrid& grid = js.grid();
  const int steps = grid.num_steps();
  const Eigen::Index d = js.dim();
  const std::vector<double> wts = trapezoid_weights(grid);

  MatrixXd e_map(js.C().rows(), d + 1);
  e_map << js.C(), -js.eta();

  MatrixXd s = augmented_moment(z0_mean, z0_cov);
  double cost = 0.0;
  for (int j = 0; j <= steps; ++j) {
    const double disc = std::exp(-js.rho() * grid.node(j));
    MatrixXd u_map(law.K[j].rows(), d + 1);
    u_map << -law.K[j], -law.k[j];
    const MatrixXd w =
        quadratic_weight(e_map, u_map, js.Q(), js.Ncross(), js.R());
    cost += 0.5 * wts[j] * disc * expected_quadratic(w, s);
    if (j == steps) break;

    const ChainStep st = js.chain_step(j);
    // Closed-loop augmented transition [[T - Gamma K, c - Gamma k], [0, 1]].
    MatrixXd tt = MatrixXd::Zero(d + 1, d + 1);
    tt.topLeftCorner(d, d) = st.T - st.Gamma * law.K[j];
    tt.topRightCorner(d, 1) = st.c - st.Gamma * law.k[j];
    tt(d, d) = 1.0;
    MatrixXd next = tt * s * tt.transpose();
    next.topLeftCorner(d, d).noalias() += st.S * st.S.transpose();
    s = symmetrize(next);
  }
  const MatrixXd wt =
      quadratic_weight(e_map, MatrixXd(), js.Qhat(), MatrixXd(), MatrixXd());
  cost += 0.5 * std::exp(-js.rho() * grid.t_end()) * expected_quadratic(wt, s);
  return cost;
}

}  // namespace mfg_lqg
