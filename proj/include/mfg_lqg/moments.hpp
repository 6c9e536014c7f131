#pragma once

#include <Eigen/Dense>

namespace mfg_lqg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Expected quadratic costs are evaluated on the augmented state
// zeta = [z; 1], whose second moment is [[V + mu mu', mu], [mu', 1]].

/// Second moment of [z; 1] from mean and covariance.
MatrixXd augmented_moment(const VectorXd& mean, const MatrixXd& cov);

/// Weight W with e'Qe + 2e'Nu + u'Ru = zeta' W zeta for e = E zeta,
/// u = U zeta. Either of N/U may be empty (no control term).
MatrixXd quadratic_weight(const MatrixXd& e_map, const MatrixXd& u_map,
                          const MatrixXd& q, const MatrixXd& n,
                          const MatrixXd& r);

/// Weight of the linear part -2 x'eta - 2 u'n with x = X zeta, u = U zeta.
MatrixXd linear_weight(const MatrixXd& x_map, const VectorXd& eta,
                       const MatrixXd& u_map, const VectorXd& n_lin);

/// tr(W S) for symmetric-use W.
double expected_quadratic(const MatrixXd& w, const MatrixXd& moment);

}  // namespace mfg_lqg
