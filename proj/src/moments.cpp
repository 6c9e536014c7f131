#include "mfg_lqg/moments.hpp"

namespace mfg_lqg {

MatrixXd augmented_moment(const VectorXd& mean, const MatrixXd& cov) {
  const Eigen::Index d = mean.size();
  MatrixXd s(d + 1, d + 1);
  s.topLeftCorner(d, d) = cov + mean * mean.transpose();
  s.topRightCorner(d, 1) = mean;
  s.bottomLeftCorner(1, d) = mean.transpose();
  s(d, d) = 1.0;
  return s;
}

MatrixXd quadratic_weight(const MatrixXd& e_map, const MatrixXd& u_map,
                          const MatrixXd& q, const MatrixXd& n,
                          const MatrixXd& r) {
  MatrixXd w = e_map.transpose() * q * e_map;
  if (u_map.size() > 0) {
    const MatrixXd cross = e_map.transpose() * n * u_map;
    w += cross + cross.transpose() + u_map.transpose() * r * u_map;
  }
  return w;
}

MatrixXd linear_weight(const MatrixXd& x_map, const VectorXd& eta,
                       const MatrixXd& u_map, const VectorXd& n_lin) {
  const Eigen::Index d = x_map.cols();
  // Row vector a with a zeta = -(x'eta + u'n); symmetrized against the
  // constant coordinate zeta_last = 1.
  Eigen::RowVectorXd a = -(eta.transpose() * x_map);
  if (u_map.size() > 0) a -= n_lin.transpose() * u_map;
  MatrixXd w = MatrixXd::Zero(d, d);
  w.row(d - 1) += a;
  w.col(d - 1) += a.transpose();
  return w;
}

double expected_quadratic(const MatrixXd& w, const MatrixXd& moment) {
  return (w.cwiseProduct(moment)).sum();
}

}  // namespace mfg_lqg
