#include "mfg_lqg/mfg_model.hpp"

#include <cmath>
#include <sstream>

#include "mfg_lqg/errors.hpp"
#include "mfg_lqg/lqg_single.hpp"

namespace mfg_lqg {

namespace {

LqgProblem agent_problem(const MmMfgProblem& p, const MatrixXd& a,
                         const MatrixXd& b_mat, const GridFunction& drift,
                         const GridFunction& sigma, const MatrixXd& qhat,
                         const MatrixXd& q, const MatrixXd& n_cross,
                         const MatrixXd& r, const VectorXd& eta) {
  LqgProblem lp;
  lp.A = a;
  lp.B = b_mat;
  lp.b = drift;
  lp.sigma = sigma;
  lp.Qhat = qhat;
  lp.Q = q;
  lp.N_cross = n_cross;
  lp.R = r;
  lp.eta = eta;
  lp.n_lin = VectorXd::Zero(b_mat.cols());
  lp.rho = p.rho;
  lp.grid = p.grid;
  lp.x0 = VectorXd::Zero(a.rows());
  return lp;
}

void require_shape(const MatrixXd& m, Eigen::Index rows, Eigen::Index cols,
                   const std::string& name) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << "shape mismatch: " << name << " is " << m.rows() << "x" << m.cols()
       << ", expected " << rows << "x" << cols;
    throw ConfigError(os.str());
  }
}

void merge(ValidationReport& into, const ValidationReport& from,
           const std::string& prefix) {
  for (const auto& c : from.checks) {
    into.add(prefix + c.name, c.passed,
             c.detail.empty() ? c.detail : prefix + c.detail, c.value);
  }
}

bool nonzero(const MatrixXd& m) {
  return m.size() > 0 && m.cwiseAbs().maxCoeff() != 0.0;
}

// Congruences of PSD weights must stay PSD.
void assert_congruence(const MatrixXd& inner, const MatrixXd& outer,
                       const char* name) {
  const double scale = std::max(1.0, inner.cwiseAbs().maxCoeff());
  if (psd_check(inner, 1e-12 * scale) &&
      !psd_check(outer, 1e-9 * scale * std::max(1.0, double(outer.rows())))) {
    throw NumericalError(std::string("extended weight ") + name +
                         " lost positive semidefiniteness");
  }
}

struct Weights {
  MatrixXd G, Q, N;
  VectorXd etabar, nbar;
};

Weights extended_weights(const MatrixXd& l, const MatrixXd& qhat,
                         const MatrixXd& q, const MatrixXd& n_cross,
                         const VectorXd& eta, const char* who) {
  Weights w;
  w.G = symmetrize(l.transpose() * qhat * l);
  w.Q = symmetrize(l.transpose() * q * l);
  w.N = l.transpose() * n_cross;
  w.etabar = l.transpose() * q * eta;
  w.nbar = n_cross.transpose() * eta;
  assert_congruence(qhat, w.G, who);
  assert_congruence(q, w.Q, who);
  return w;
}

LqWeights to_lq(const MatrixXd& g, const MatrixXd& q, const MatrixXd& n,
                const MatrixXd& r, const VectorXd& etabar,
                const VectorXd& nbar, double rho) {
  LqWeights w;
  w.Q = q;
  w.N = n;
  w.R = r;
  w.eta = etabar;
  w.n_lin = nbar;
  w.rho = rho;
  w.terminal = g;
  return w;
}

ExtendedMajorSystem major_common(const MmMfgProblem& p) {
  const Eigen::Index n = p.n(), nk = p.nK();
  const auto& mj = p.major;
  ExtendedMajorSystem ext;
  ext.Bb = MatrixXd::Zero(n + nk, p.m());
  ext.Bb.topRows(n) = mj.B;
  const MeanFieldMatrices mf = build_mean_field_matrices(p);
  ext.Btilde = MatrixXd::Zero(n + nk, mf.Bbreve.cols());
  ext.Btilde.bottomRows(nk) = mf.Bbreve;
  ext.Sigma = [sigma = mj.sigma, nk](double t) {
    const MatrixXd s = sigma.at(t);
    MatrixXd out = MatrixXd::Zero(s.rows() + nk, s.cols());
    out.topRows(s.rows()) = s;
    return out;
  };
  ext.L.resize(n, n + nk);
  ext.L << MatrixXd::Identity(n, n), -pi_kron(p.pi, mj.H);
  const Weights w =
      extended_weights(ext.L, mj.Qhat, mj.Q, mj.N, mj.eta, "major");
  ext.G = w.G;
  ext.Q = w.Q;
  ext.N = w.N;
  ext.etabar = w.etabar;
  ext.nbar = w.nbar;
  ext.R = mj.R;
  ext.rho = p.rho;
  return ext;
}

MatrixXd stack_major(const MatrixXd& a0, const MatrixXd& f0pi,
                     const MatrixXd& g, const MatrixXd& a) {
  const Eigen::Index n = a0.rows(), nk = a.rows();
  MatrixXd out(n + nk, n + nk);
  out << a0, f0pi, g, a;
  return out;
}

MatrixXd stack_vec(const MatrixXd& top, const MatrixXd& bottom) {
  MatrixXd out(top.rows() + bottom.rows(), 1);
  out << top, bottom;
  return out;
}

ExtendedMinorSystem minor_common(const MmMfgProblem& p, int k,
                                 const ExtendedMajorSystem& major,
                                 MatrixFn pi0, MatrixFn s0) {
  if (k < 0 || k >= p.K()) throw ConfigError("minor type index out of range");
  const Eigen::Index n = p.n(), nk = p.nK();
  const Eigen::Index d = 2 * n + nk;
  const MinorTypeParams& mk = p.minors[k];

  ExtendedMinorSystem ext;
  ext.Bb = MatrixXd::Zero(d, p.m());
  ext.Bb.topRows(n) = mk.B;
  ext.Btilde = MatrixXd::Zero(d, major.Btilde.cols());
  ext.Btilde.bottomRows(n + nk) = major.Btilde;

  const SpdInverse r0_inv(major.R, "R0");
  const MatrixXd bb0 = major.Bb;
  const MatrixXd gain_n = r0_inv.solve(major.N.transpose());  // R0^-1 N0ext'
  const MatrixXd r0_bt = r0_inv.solve(bb0.transpose());       // R0^-1 Bb0'
  const VectorXd feed_n = bb0 * r0_inv.solve(major.nbar);

  MatrixXd top(n, n + nk);
  top << mk.G, pi_kron(p.pi, mk.F);

  ext.A = [a_major = major.A, pi0, bb0, gain_n, r0_bt, ak = mk.A, top, n,
           d](double t) {
    MatrixXd out = MatrixXd::Zero(d, d);
    out.topLeftCorner(n, n) = ak;
    out.topRightCorner(n, d - n) = top;
    out.bottomRightCorner(d - n, d - n) =
        a_major(t) - bb0 * (gain_n + r0_bt * pi0(t));
    return out;
  };
  ext.M = [m_major = major.M, s0, bb0, r0_bt, feed_n, bk = mk.b](double t) {
    return stack_vec(bk.at(t), m_major(t) + feed_n - bb0 * (r0_bt * s0(t)));
  };
  ext.Sigma = [sig_k = mk.sigma, sig0 = major.Sigma](double t) {
    return block_diagonal({sig_k.at(t), sig0(t)});
  };
  ext.L.resize(n, d);
  ext.L << MatrixXd::Identity(n, n), -mk.H, -pi_kron(p.pi, mk.Hhat);
  const std::string who = "minor " + std::to_string(k + 1);
  const Weights w =
      extended_weights(ext.L, mk.Qhat, mk.Q, mk.N, mk.eta, who.c_str());
  ext.G = w.G;
  ext.Q = w.Q;
  ext.N = w.N;
  ext.etabar = w.etabar;
  ext.nbar = w.nbar;
  ext.R = mk.R;
  ext.rho = p.rho;
  return ext;
}

}  // namespace

MatrixXd pi_kron(const VectorXd& pi, const MatrixXd& m) {
  MatrixXd out(m.rows(), m.cols() * pi.size());
  for (Eigen::Index k = 0; k < pi.size(); ++k) {
    out.middleCols(k * m.cols(), m.cols()) = pi(k) * m;
  }
  return out;
}

MatrixXd selector(Eigen::Index n, int K, int k) {
  MatrixXd e = MatrixXd::Zero(n, n * K);
  e.middleCols(n * k, n).setIdentity();
  return e;
}

ValidationReport validate_problem(const MmMfgProblem& p, double tol) {
  const Eigen::Index n = p.n(), m = p.m();
  if (n == 0) throw ConfigError("shape mismatch: major A is empty");
  if (p.K() == 0) throw ConfigError("at least one minor type is required");
  const auto& mj = p.major;
  require_shape(mj.F, n, n, "major F");
  require_shape(mj.H, n, n, "major H");
  require_shape(p.initial_mean, n, 1, "initial_mean");
  require_shape(p.initial_cov, n, n, "initial_cov");
  if (p.pi.size() != p.K()) {
    throw ConfigError("shape mismatch: pi has " + std::to_string(p.pi.size()) +
                      " entries for " + std::to_string(p.K()) + " types");
  }

  ValidationReport report;
  merge(report,
        validate_convexity(agent_problem(p, mj.A, mj.B, mj.b, mj.sigma,
                                         mj.Qhat, mj.Q, mj.N, mj.R, mj.eta),
                           tol),
        "major: ");
  for (int k = 0; k < p.K(); ++k) {
    const MinorTypeParams& mk = p.minors[k];
    const std::string prefix = "minor " + std::to_string(k + 1) + ": ";
    require_shape(mk.F, n, n, prefix + "F");
    require_shape(mk.G, n, n, prefix + "G");
    require_shape(mk.H, n, n, prefix + "H");
    require_shape(mk.Hhat, n, n, prefix + "Hhat");
    require_shape(mk.B, n, m, prefix + "B");
    merge(report,
          validate_convexity(agent_problem(p, mk.A, mk.B, mk.b, mk.sigma,
                                           mk.Qhat, mk.Q, mk.N, mk.R, mk.eta),
                             tol),
          prefix);
    if (nonzero(mk.Qhat * mk.eta)) {
      report.warnings.push_back(
          prefix + "Qhat * eta != 0; the terminal tracking term is linear in "
                   "the state and is not carried by the extended cost");
    }
  }
  if (nonzero(mj.Qhat * mj.eta)) {
    report.warnings.push_back(
        "major: Qhat * eta != 0; the terminal tracking term is linear in the "
        "state and is not carried by the extended cost");
  }

  {
    double sum = 0.0;
    bool ok = true;
    for (Eigen::Index k = 0; k < p.pi.size(); ++k) {
      ok = ok && std::isfinite(p.pi(k)) && p.pi(k) >= 0.0;
      sum += p.pi(k);
    }
    ok = ok && std::abs(sum - 1.0) <= 1e-12;
    std::ostringstream os;
    if (!ok) os << "π not a distribution (entries must be >= 0 and sum to 1, sum = " << sum << ")";
    report.add("pi is a distribution", ok, os.str(), sum);
  }
  {
    const bool ok = !nonzero(p.initial_mean);
    report.add("initial mean is zero", ok,
               ok ? "" : "initial states must have zero mean");
  }
  {
    const bool sym = (p.initial_cov - p.initial_cov.transpose())
                         .cwiseAbs()
                         .maxCoeff() <= 1e-12;
    const double lo = min_symmetric_eigenvalue(p.initial_cov);
    const bool ok = sym && lo >= -tol;
    report.add("initial covariance >= 0", ok,
               ok ? "" : "initial covariance not symmetric positive semidefinite",
               lo);
  }
  return report;
}

MeanFieldMatrices build_mean_field_matrices(const MmMfgProblem& p) {
  const Eigen::Index n = p.n(), m = p.m(), nk = p.nK();
  const int K = p.K();
  MeanFieldMatrices mf;
  mf.Abreve.resize(nk, nk);
  mf.Gbreve.resize(nk, n);
  mf.Bbreve = MatrixXd::Zero(nk, m * K);
  for (int k = 0; k < K; ++k) {
    const MinorTypeParams& mk = p.minors[k];
    mf.Abreve.middleRows(n * k, n) =
        mk.A * selector(n, K, k) + pi_kron(p.pi, mk.F);
    mf.Gbreve.middleRows(n * k, n) = mk.G;
    mf.Bbreve.block(n * k, m * k, n, m) = mk.B;
  }
  mf.mbreve = GridFunction(p.grid, nk, 1);
  for (int j = 0; j < p.grid.num_nodes(); ++j) {
    for (int k = 0; k < K; ++k) {
      mf.mbreve[j].middleRows(n * k, n) = p.minors[k].b[j];
    }
  }
  return mf;
}

LqWeights ExtendedMajorSystem::weights() const {
  return to_lq(G, Q, N, R, etabar, nbar, rho);
}

LqDynamics ExtendedMajorSystem::dynamics() const { return {A, Bb, M}; }

LqWeights ExtendedMinorSystem::weights() const {
  return to_lq(G, Q, N, R, etabar, nbar, rho);
}

LqDynamics ExtendedMinorSystem::dynamics() const { return {A, Bb, M}; }

ExtendedMajorSystem build_extended_major(const MmMfgProblem& p,
                                         const MeanFieldMatrices& mf) {
  ExtendedMajorSystem ext = major_common(p);
  const MatrixXd a = stack_major(p.major.A, pi_kron(p.pi, p.major.F),
                                 mf.Gbreve, mf.Abreve);
  ext.A = [a](double) { return a; };
  ext.M = [b0 = p.major.b, mb = mf.mbreve](double t) {
    return stack_vec(b0.at(t), mb.at(t));
  };
  return ext;
}

ExtendedMajorSystem build_extended_major(const MmMfgProblem& p,
                                         const MeanFieldLaw& law) {
  if (law.Abar.rows() != p.nK() || law.Gbar.cols() != p.n() ||
      law.mbar.rows() != p.nK()) {
    throw ConfigError("shape mismatch: mean-field law does not match problem");
  }
  ExtendedMajorSystem ext = major_common(p);
  ext.A = [a0 = p.major.A, f0pi = pi_kron(p.pi, p.major.F), law](double t) {
    return stack_major(a0, f0pi, law.Gbar.at(t), law.Abar.at(t));
  };
  ext.M = [b0 = p.major.b, mbar = law.mbar](double t) {
    return stack_vec(b0.at(t), mbar.at(t));
  };
  return ext;
}

ExtendedMinorSystem build_extended_minor(const MmMfgProblem& p, int k,
                                         const ExtendedMajorSystem& major,
                                         const GridFunction& pi0,
                                         const GridFunction& s0) {
  if (!(pi0.grid() == p.grid) || !(s0.grid() == p.grid)) {
    throw ConfigError("build_extended_minor: Pi0 and s0 must be on the "
                      "problem grid");
  }
  return minor_common(
      p, k, major, [pi0](double t) { return pi0.at(t); },
      [s0](double t) { return s0.at(t); });
}

ExtendedMinorSystem build_extended_minor(const MmMfgProblem& p, int k,
                                         const ExtendedMajorSystem& major,
                                         const MatrixXd& pi0,
                                         const VectorXd& s0) {
  return minor_common(
      p, k, major, [pi0](double) { return pi0; },
      [s = MatrixXd(s0)](double) { return s; });
}

PiBlocks extract_pi_blocks(const MatrixXd& pik, Eigen::Index n, int K) {
  const Eigen::Index d = 2 * n + n * K;
  if (pik.rows() != d || pik.cols() != d) {
    throw ConfigError("extract_pi_blocks: matrix is not (2n+nK) square");
  }
  return {pik.block(0, 0, n, n), pik.block(0, n, n, n),
          pik.block(0, 2 * n, n, n * K)};
}

NBlocks split_n_blocks(const MatrixXd& nk, Eigen::Index n, int K) {
  if (nk.rows() != 2 * n + n * K) {
    throw ConfigError("split_n_blocks: matrix does not have 2n+nK rows");
  }
  return {nk.topRows(n), nk.middleRows(n, n), nk.bottomRows(n * K)};
}

}  // namespace mfg_lqg
