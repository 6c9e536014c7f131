#include "mfg_lqg/mfg_solver.hpp"

#include <cmath>
#include <sstream>

#include "mfg_lqg/errors.hpp"

namespace mfg_lqg {

namespace {

// Per-type constants of the consistency update.
struct TypeTerms {
  MatrixXd A, F_pi, G, B, r_inv_bt;  // r_inv_bt = R^{-1} B'
  NBlocks nb;
  VectorXd feed;  // B R^{-1} nbar
  MatrixXd e;
};

std::vector<TypeTerms> type_terms(const MmMfgProblem& p) {
  const Eigen::Index n = p.n();
  std::vector<TypeTerms> out;
  for (int k = 0; k < p.K(); ++k) {
    const MinorTypeParams& mk = p.minors[k];
    const SpdInverse r_inv(mk.R, "R_" + std::to_string(k + 1));
    MatrixXd l(n, 2 * n + p.nK());
    l << MatrixXd::Identity(n, n), -mk.H, -pi_kron(p.pi, mk.Hhat);
    TypeTerms t;
    t.A = mk.A;
    t.F_pi = pi_kron(p.pi, mk.F);
    t.G = mk.G;
    t.B = mk.B;
    t.r_inv_bt = r_inv.solve(mk.B.transpose());
    t.nb = split_n_blocks(l.transpose() * mk.N, n, p.K());
    t.feed = mk.B * r_inv.solve(mk.N.transpose() * mk.eta);
    t.e = selector(n, p.K(), k);
    out.push_back(std::move(t));
  }
  return out;
}

struct LawNode {
  MatrixXd Abar, Gbar;
  VectorXd mbar;
};

// Abar_k = [A_k - B_k R_k^{-1}(N11' + B_k'P11)] e_k + F_k^pi
//          - B_k R_k^{-1}(N31' + B_k'P13)
// Gbar_k = G_k - B_k R_k^{-1}(N21' + B_k'P12)
// mbar_k = b_k + B_k R_k^{-1} nbar_k - B_k R_k^{-1} Bb_k' s_k
LawNode update_node(const MmMfgProblem& p, const std::vector<TypeTerms>& terms,
                    const std::vector<MatrixXd>& pik,
                    const std::vector<VectorXd>& sk,
                    const std::vector<VectorXd>& bk) {
  const Eigen::Index n = p.n(), nk = p.nK();
  LawNode out{MatrixXd(nk, nk), MatrixXd(nk, n), VectorXd(nk)};
  for (int k = 0; k < p.K(); ++k) {
    const TypeTerms& t = terms[k];
    const PiBlocks pb = extract_pi_blocks(pik[k], n, p.K());
    const MatrixXd rb = t.r_inv_bt;
    // R^{-1}(N' + B'P) = R^{-1}N' + (R^{-1}B') P
    const SpdInverse r_inv(p.minors[k].R, "R");
    const MatrixXd g11 = r_inv.solve(t.nb.N11.transpose()) + rb * pb.P11;
    const MatrixXd g12 = r_inv.solve(t.nb.N21.transpose()) + rb * pb.P12;
    const MatrixXd g13 = r_inv.solve(t.nb.N31.transpose()) + rb * pb.P13;
    out.Abar.middleRows(n * k, n) =
        (t.A - t.B * g11) * t.e + t.F_pi - t.B * g13;
    out.Gbar.middleRows(n * k, n) = t.G - t.B * g12;
    out.mbar.segment(n * k, n) = bk[k] + t.feed - t.B * (rb * sk[k].head(n));
  }
  return out;
}

double law_distance(const MeanFieldLaw& a, const MeanFieldLaw& b) {
  return std::max({a.Abar.sup_distance(b.Abar), a.Gbar.sup_distance(b.Gbar),
                   a.mbar.sup_distance(b.mbar)});
}

GridFunction blend(const GridFunction& next, const GridFunction& prev,
                   double theta) {
  if (theta == 1.0) return next;
  GridFunction out = prev;
  for (int j = 0; j < out.grid().num_nodes(); ++j) {
    out[j] = theta * next[j] + (1.0 - theta) * prev[j];
  }
  return out;
}

AgentSolution agent_solution(RiccatiSweep sweep, const MatrixXd& bb,
                             const LqWeights& w, const SpdInverse& r_inv) {
  const TimeGrid& grid = sweep.Pi.grid();
  GridFunction k(grid, bb.cols(), bb.rows());
  GridFunction kff(grid, bb.cols(), 1);
  for (int j = 0; j < grid.num_nodes(); ++j) {
    k[j] = feedback_gain(sweep.Pi[j], bb, w, r_inv);
    kff[j] = feedforward(sweep.s[j], bb, w, r_inv);
  }
  return {std::move(sweep.Pi), std::move(sweep.s), std::move(k),
          std::move(kff)};
}

std::string fixed_point_message(const FixedPointReport& rep) {
  std::ostringstream os;
  os << "consistency iteration did not converge after " << rep.iterations
     << " iterations (last residual "
     << (rep.residuals.empty() ? NAN : rep.residuals.back()) << ")";
  return os.str();
}

MeanFieldLaw constant_law(const TimeGrid& grid, const LawNode& node) {
  return {GridFunction::constant(grid, node.Abar),
          GridFunction::constant(grid, node.Gbar),
          GridFunction::constant(grid, node.mbar)};
}

struct AffineStage {
  MatrixXd y, a, b;
  VectorXd c;
};

}  // namespace

void check_fixed_point_config(const FixedPointConfig& cfg) {
  if (!(cfg.damping > 0.0 && cfg.damping <= 1.0)) {
    throw ConfigError("damping must lie in (0, 1]");
  }
  if (!(cfg.tol > 0.0)) throw ConfigError("tol must be positive");
  if (cfg.max_iters < 1) throw ConfigError("max_iters must be positive");
}

MeanFieldLaw consistency_update(const MmMfgProblem& p,
                                const std::vector<GridFunction>& pik,
                                const std::vector<GridFunction>& sk) {
  const std::vector<TypeTerms> terms = type_terms(p);
  const Eigen::Index n = p.n(), nk = p.nK();
  MeanFieldLaw law{GridFunction(p.grid, nk, nk), GridFunction(p.grid, nk, n),
                   GridFunction(p.grid, nk, 1)};
  std::vector<MatrixXd> pi_j(p.K());
  std::vector<VectorXd> s_j(p.K()), b_j(p.K());
  for (int j = 0; j < p.grid.num_nodes(); ++j) {
    for (int k = 0; k < p.K(); ++k) {
      pi_j[k] = pik[k][j];
      s_j[k] = sk[k][j];
      b_j[k] = p.minors[k].b[j];
    }
    LawNode node = update_node(p, terms, pi_j, s_j, b_j);
    law.Abar[j] = std::move(node.Abar);
    law.Gbar[j] = std::move(node.Gbar);
    law.mbar[j] = std::move(node.mbar);
  }
  return law;
}

ConsistencyPass consistency_pass(const MmMfgProblem& p,
                                 const MeanFieldLaw& law) {
  ConsistencyPass out;
  const ExtendedMajorSystem major = build_extended_major(p, law);
  const LqWeights w0 = major.weights();
  out.major = agent_solution(solve_riccati_sweep(major.dynamics(), w0, p.grid),
                             major.Bb, w0, SpdInverse(major.R, "R0"));

  std::vector<GridFunction> pik, sk;
  for (int k = 0; k < p.K(); ++k) {
    const ExtendedMinorSystem minor =
        build_extended_minor(p, k, major, out.major.Pi, out.major.s);
    const LqWeights wk = minor.weights();
    out.minors.push_back(
        agent_solution(solve_riccati_sweep(minor.dynamics(), wk, p.grid),
                       minor.Bb, wk,
                       SpdInverse(minor.R, "R_" + std::to_string(k + 1))));
    pik.push_back(out.minors.back().Pi);
    sk.push_back(out.minors.back().s);
  }
  out.next = consistency_update(p, pik, sk);
  return out;
}

MfgSolution solve_consistency_finite(const MmMfgProblem& p,
                                     const FixedPointConfig& cfg) {
  check_fixed_point_config(cfg);
  const ValidationReport report = validate_problem(p);
  if (!report.passed()) {
    throw AssumptionViolation("problem assumptions violated: " +
                              report.failures());
  }

  MeanFieldLaw law;
  if (cfg.warm_start) {
    law = *cfg.warm_start;
  } else {
    const Eigen::Index d = 2 * p.n() + p.nK();
    const std::vector<GridFunction> zero_pi(p.K(), GridFunction(p.grid, d, d));
    const std::vector<GridFunction> zero_s(p.K(), GridFunction(p.grid, d, 1));
    law = consistency_update(p, zero_pi, zero_s);
  }

  FixedPointReport rep;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    ConsistencyPass pass = consistency_pass(p, law);
    const double r = law_distance(pass.next, law);
    rep.iterations = it;
    rep.residuals.push_back(r);
    if (!std::isfinite(r)) break;
    if (r < cfg.tol) {
      rep.converged = true;
      return {std::move(pass.major), std::move(pass.minors), std::move(law),
              std::move(rep)};
    }
    law = {blend(pass.next.Abar, law.Abar, cfg.damping),
           blend(pass.next.Gbar, law.Gbar, cfg.damping),
           blend(pass.next.mbar, law.mbar, cfg.damping)};
  }
  throw FixedPointFailure(fixed_point_message(rep), rep.residuals);
}

VectorXd equilibrium_feedback_major(const MfgSolution& sol, double t,
                                    const VectorXd& x0_ext) {
  return -sol.major.K.at(t) * x0_ext - sol.major.kff.at(t);
}

VectorXd equilibrium_feedback_minor(const MfgSolution& sol, int k, double t,
                                    const VectorXd& xi_ext) {
  if (k < 0 || k >= static_cast<int>(sol.minors.size())) {
    throw ConfigError("minor type index out of range");
  }
  return -sol.minors[k].K.at(t) * xi_ext - sol.minors[k].kff.at(t);
}

MeanFieldPropagator::MeanFieldPropagator(const MeanFieldLaw& law,
                                         MeanFieldScheme scheme) {
  const TimeGrid& grid = law.Abar.grid();
  const Eigen::Index nk = law.Abar.rows(), n = law.Gbar.cols();
  const double h = grid.step();
  const MatrixXd eye = MatrixXd::Identity(nk, nk);

  if (scheme == MeanFieldScheme::kEuler) {
    for (int j = 0; j < grid.num_steps(); ++j) {
      p_.push_back(eye + h * law.Abar[j]);
      q0_.push_back(h * law.Gbar[j]);
      q1_.push_back(MatrixXd::Zero(nk, n));
      c_.push_back(h * law.mbar[j]);
    }
    return;
  }

  // RK4 stage k = A(t)(y + c h k_prev) + G(t) x0(t) + m(t) written as an
  // affine map of (y, x0_j, x0_{j+1}).
  auto stage = [&](const MatrixXd& a, const MatrixXd& g, const VectorXd& m,
                   double wa, double wb, const AffineStage* prev,
                   double frac) {
    AffineStage s;
    if (prev == nullptr) {
      s.y = a;
      s.a = MatrixXd::Zero(nk, n);
      s.b = MatrixXd::Zero(nk, n);
      s.c = VectorXd::Zero(nk);
    } else {
      s.y = a * (eye + frac * h * prev->y);
      s.a = a * (frac * h * prev->a);
      s.b = a * (frac * h * prev->b);
      s.c = a * (frac * h * prev->c);
    }
    s.a += wa * g;
    s.b += wb * g;
    s.c += m;
    return s;
  };

  for (int j = 0; j < grid.num_steps(); ++j) {
    const double tm = grid.node(j) + 0.5 * h;
    const MatrixXd a0 = law.Abar[j], a1 = law.Abar[j + 1];
    const MatrixXd am = law.Abar.at(tm);
    const MatrixXd g0 = law.Gbar[j], g1 = law.Gbar[j + 1];
    const MatrixXd gm = law.Gbar.at(tm);
    const VectorXd m0 = law.mbar[j], m1 = law.mbar[j + 1];
    const VectorXd mm = law.mbar.at(tm);

    const AffineStage k1 = stage(a0, g0, m0, 1.0, 0.0, nullptr, 0.0);
    const AffineStage k2 = stage(am, gm, mm, 0.5, 0.5, &k1, 0.5);
    const AffineStage k3 = stage(am, gm, mm, 0.5, 0.5, &k2, 0.5);
    const AffineStage k4 = stage(a1, g1, m1, 0.0, 1.0, &k3, 1.0);
    const double w = h / 6.0;
    p_.push_back(eye + w * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y));
    q0_.push_back(w * (k1.a + 2.0 * k2.a + 2.0 * k3.a + k4.a));
    q1_.push_back(w * (k1.b + 2.0 * k2.b + 2.0 * k3.b + k4.b));
    c_.push_back(w * (k1.c + 2.0 * k2.c + 2.0 * k3.c + k4.c));
  }
}

GridFunction mean_field_trajectory(const MeanFieldLaw& law,
                                   const GridFunction& x0_path,
                                   const VectorXd& xbar0,
                                   MeanFieldScheme scheme) {
  const TimeGrid& grid = law.Abar.grid();
  if (!(x0_path.grid() == grid) || x0_path.rows() != law.Gbar.cols() ||
      x0_path.cols() != 1) {
    throw ConfigError("mean_field_trajectory: major path does not match law");
  }
  if (xbar0.size() != law.Abar.rows()) {
    throw ConfigError("mean_field_trajectory: xbar0 has wrong size");
  }
  const MeanFieldPropagator prop(law, scheme);
  GridFunction out(grid, xbar0.size(), 1);
  out[0] = xbar0;
  for (int j = 0; j < grid.num_steps(); ++j) {
    out[j + 1] = prop.step(j, out[j], x0_path[j], x0_path[j + 1]);
  }
  return out;
}

GridFunction mean_field_trajectory(const MfgSolution& sol,
                                   const GridFunction& x0_path,
                                   const VectorXd& xbar0,
                                   MeanFieldScheme scheme) {
  return mean_field_trajectory(sol.law, x0_path, xbar0, scheme);
}

namespace {

void require_hautus(const MatrixXd& a, const MatrixXd& b, const MatrixXd& l,
                    double rho, const std::string& who) {
  const MatrixXd shifted =
      a - 0.5 * rho * MatrixXd::Identity(a.rows(), a.cols());
  if (!stabilizability(shifted, b, 1e-9).passed) {
    throw AssumptionViolation(who + ": extended pair (A - rho/2 I, B) is not "
                                    "stabilizable");
  }
  if (!detectability(l, shifted, 1e-9).passed) {
    throw AssumptionViolation(who + ": extended pair (L, A - rho/2 I) is not "
                                    "detectable");
  }
}

StationaryAgent stationary_agent(const MatrixXd& a, const MatrixXd& bb,
                                 const VectorXd& drift, const LqWeights& w,
                                 const std::optional<MatrixXd>& warm,
                                 const std::string& r_name) {
  const AreSolution are = solve_are(a, bb, w, warm);
  const SpdInverse r_inv(w.R, r_name);
  StationaryAgent out;
  out.Pi = are.Pi;
  out.s = steady_offset(are.Pi, a, drift, bb, w, r_inv);
  out.K = feedback_gain(out.Pi, bb, w, r_inv);
  out.kff = feedforward(out.s, bb, w, r_inv);
  out.are_residual = are.residual;
  return out;
}

void require_constant(const GridFunction& gf, const std::string& name) {
  for (int j = 1; j < gf.grid().num_nodes(); ++j) {
    if (gf[j] != gf[0]) {
      throw ConfigError("infinite horizon requires constant " + name);
    }
  }
}

}  // namespace

StationaryMfgSolution solve_consistency_infinite(const MmMfgProblem& p,
                                                 const FixedPointConfig& cfg) {
  check_fixed_point_config(cfg);
  if (!(p.rho > 0.0)) {
    throw ConfigError("infinite horizon requires a discount rho > 0");
  }
  const ValidationReport report = validate_problem(p);
  if (!report.passed()) {
    throw AssumptionViolation("problem assumptions violated: " +
                              report.failures());
  }
  require_constant(p.major.b, "major b");
  for (int k = 0; k < p.K(); ++k) {
    require_constant(p.minors[k].b, "minor b");
  }

  const std::vector<TypeTerms> terms = type_terms(p);
  const Eigen::Index d = 2 * p.n() + p.nK();
  std::vector<VectorXd> b_k(p.K());
  for (int k = 0; k < p.K(); ++k) b_k[k] = p.minors[k].b[0];

  LawNode law;
  if (cfg.warm_start) {
    law = {cfg.warm_start->Abar[0], cfg.warm_start->Gbar[0],
           cfg.warm_start->mbar[0]};
  } else {
    law = update_node(p, terms, std::vector<MatrixXd>(p.K(), MatrixXd::Zero(d, d)),
                      std::vector<VectorXd>(p.K(), VectorXd::Zero(d)), b_k);
  }

  StationaryMfgSolution sol;
  std::optional<MatrixXd> warm0;
  std::vector<std::optional<MatrixXd>> warm_k(p.K());
  FixedPointReport rep;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    const ExtendedMajorSystem major =
        build_extended_major(p, constant_law(p.grid, law));
    const MatrixXd a0 = major.A(0.0);
    require_hautus(a0, major.Bb, psd_sqrt(p.major.Q) * major.L, p.rho,
                   "major");
    sol.major = stationary_agent(a0, major.Bb, major.M(0.0), major.weights(),
                                 warm0, "R0");
    warm0 = sol.major.Pi;

    sol.minors.clear();
    std::vector<MatrixXd> pik;
    std::vector<VectorXd> sk;
    for (int k = 0; k < p.K(); ++k) {
      const ExtendedMinorSystem minor =
          build_extended_minor(p, k, major, sol.major.Pi, sol.major.s);
      const MatrixXd ak = minor.A(0.0);
      const std::string who = "minor " + std::to_string(k + 1);
      require_hautus(ak, minor.Bb, psd_sqrt(p.minors[k].Q) * minor.L, p.rho,
                     who);
      sol.minors.push_back(stationary_agent(ak, minor.Bb, minor.M(0.0),
                                            minor.weights(), warm_k[k],
                                            "R_" + std::to_string(k + 1)));
      warm_k[k] = sol.minors.back().Pi;
      pik.push_back(sol.minors.back().Pi);
      sk.push_back(sol.minors.back().s);
    }
    const LawNode next = update_node(p, terms, pik, sk, b_k);
    const double r = std::max({(next.Abar - law.Abar).cwiseAbs().maxCoeff(),
                               (next.Gbar - law.Gbar).cwiseAbs().maxCoeff(),
                               (next.mbar - law.mbar).cwiseAbs().maxCoeff()});
    rep.iterations = it;
    rep.residuals.push_back(r);
    if (!std::isfinite(r)) break;
    if (r < cfg.tol) {
      rep.converged = true;
      sol.Abar = law.Abar;
      sol.Gbar = law.Gbar;
      sol.mbar = law.mbar;
      sol.report = rep;
      const ValidationReport stab = stationary_stability_report(p, sol);
      if (!stab.passed()) {
        throw AssumptionViolation("closed-loop stability violated: " +
                                  stab.failures());
      }
      return sol;
    }
    const double th = cfg.damping;
    law.Abar = th * next.Abar + (1.0 - th) * law.Abar;
    law.Gbar = th * next.Gbar + (1.0 - th) * law.Gbar;
    law.mbar = th * next.mbar + (1.0 - th) * law.mbar;
  }
  throw FixedPointFailure(fixed_point_message(rep), rep.residuals);
}

ValidationReport stationary_stability_report(
    const MmMfgProblem& p, const StationaryMfgSolution& sol) {
  ValidationReport report;
  const ExtendedMajorSystem major = build_extended_major(
      p, constant_law(p.grid, {sol.Abar, sol.Gbar, sol.mbar}));
  auto check = [&](const MatrixXd& a, const MatrixXd& bb, const MatrixXd& k,
                   const std::string& who) {
    const MatrixXd cl =
        a - bb * k - 0.5 * p.rho * MatrixXd::Identity(a.rows(), a.cols());
    const double abscissa = spectral_abscissa(cl);
    const bool ok = abscissa < 0.0;
    std::ostringstream os;
    if (!ok) {
      os << who << " closed loop not asymptotically stable (spectral abscissa "
         << abscissa << ")";
    }
    report.add(who + " closed loop stable", ok, os.str(), abscissa);
  };
  check(major.A(0.0), major.Bb, sol.major.K, "major");
  for (int k = 0; k < p.K() && k < static_cast<int>(sol.minors.size()); ++k) {
    const ExtendedMinorSystem minor =
        build_extended_minor(p, k, major, sol.major.Pi, sol.major.s);
    check(minor.A(0.0), minor.Bb, sol.minors[k].K,
          "minor " + std::to_string(k + 1));
  }
  return report;
}

}  // namespace mfg_lqg
