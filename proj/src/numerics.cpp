#include "mfg_lqg/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mfg_lqg/errors.hpp"

namespace mfg_lqg {

TimeGrid::TimeGrid(double t_end, int num_steps)
    : t_end_(t_end), num_steps_(num_steps), step_(0.0) {
  if (!(t_end > 0.0) || !std::isfinite(t_end)) {
    throw ConfigError("TimeGrid: horizon T must be finite and > 0");
  }
  if (num_steps < 1) {
    throw ConfigError("TimeGrid: number of steps must be >= 1");
  }
  step_ = t_end / num_steps;
}

double TimeGrid::node(int j) const {
  if (j == num_steps_) return t_end_;
  return j * step_;
}

int TimeGrid::interval(double t) const {
  if (!(t >= 0.0 && t <= t_end_)) {
    std::ostringstream os;
    os << "time " << t << " outside grid [0, " << t_end_ << "]";
    throw OutOfRangeError(os.str());
  }
  int j = static_cast<int>(std::floor(t / step_));
  return std::clamp(j, 0, num_steps_ - 1);
}

GridFunction::GridFunction(TimeGrid grid, Eigen::Index rows, Eigen::Index cols)
    : grid_(grid),
      rows_(rows),
      cols_(cols),
      values_(grid.num_nodes(), MatrixXd::Zero(rows, cols)) {}

GridFunction::GridFunction(TimeGrid grid, std::vector<MatrixXd> values)
    : grid_(grid), rows_(0), cols_(0), values_(std::move(values)) {
  if (static_cast<int>(values_.size()) != grid_.num_nodes()) {
    throw ConfigError("GridFunction: expected one value per grid node");
  }
  rows_ = values_.front().rows();
  cols_ = values_.front().cols();
  for (const auto& v : values_) {
    if (v.rows() != rows_ || v.cols() != cols_) {
      throw ConfigError("GridFunction: all node values must share one shape");
    }
  }
}

GridFunction GridFunction::constant(TimeGrid grid, const MatrixXd& value) {
  return GridFunction(grid, std::vector<MatrixXd>(grid.num_nodes(), value));
}

MatrixXd GridFunction::at(double t) const {
  const int j = grid_.interval(t);
  const double t0 = grid_.node(j);
  const double t1 = grid_.node(j + 1);
  if (t == t0) return values_[j];
  if (t == t1) return values_[j + 1];
  const double w = (t - t0) / (t1 - t0);
  return (1.0 - w) * values_[j] + w * values_[j + 1];
}

double GridFunction::sup_distance(const GridFunction& other) const {
  if (values_.size() != other.values_.size() || rows_ != other.rows_ ||
      cols_ != other.cols_) {
    throw ConfigError("GridFunction::sup_distance: shape mismatch");
  }
  double d = 0.0;
  for (std::size_t j = 0; j < values_.size(); ++j) {
    if (rows_ * cols_ == 0) continue;
    d = std::max(d, (values_[j] - other.values_[j]).cwiseAbs().maxCoeff());
  }
  return d;
}

MatrixXd interp(const GridFunction& gf, double t) { return gf.at(t); }

bool all_finite(const MatrixXd& m) { return m.allFinite(); }

MatrixXd rk4_step(const MatrixOde& rhs, double t, const MatrixXd& x,
                  double h) {
  const MatrixXd k1 = rhs(t, x);
  const MatrixXd k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1);
  const MatrixXd k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2);
  const MatrixXd k4 = rhs(t + h, x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

namespace {

void check_finite(const MatrixXd& x, int node) {
  if (!x.allFinite()) {
    std::ostringstream os;
    os << "integration diverged: non-finite value at node " << node;
    throw IntegrationDiverged(os.str(), node);
  }
}

}  // namespace

GridFunction integrate_backward(const MatrixOde& rhs, const MatrixXd& terminal,
                                const TimeGrid& grid,
                                const StepProjection& project) {
  GridFunction out(grid, terminal.rows(), terminal.cols());
  const int m = grid.num_steps();
  out[m] = terminal;
  MatrixXd x = terminal;
  for (int j = m; j > 0; --j) {
    const double t = grid.node(j);
    const double h = grid.node(j - 1) - t;
    x = rk4_step(rhs, t, x, h);
    if (project) project(x);
    check_finite(x, j - 1);
    out[j - 1] = x;
  }
  return out;
}

GridFunction integrate_forward(const MatrixOde& rhs, const MatrixXd& initial,
                               const TimeGrid& grid,
                               const StepProjection& project) {
  GridFunction out(grid, initial.rows(), initial.cols());
  out[0] = initial;
  MatrixXd x = initial;
  for (int j = 0; j < grid.num_steps(); ++j) {
    const double t = grid.node(j);
    const double h = grid.node(j + 1) - t;
    x = rk4_step(rhs, t, x, h);
    if (project) project(x);
    check_finite(x, j + 1);
    out[j + 1] = x;
  }
  return out;
}

MatrixXd symmetrize(const MatrixXd& p) {
  if (p.rows() != p.cols()) {
    throw ConfigError("symmetrize: matrix must be square");
  }
  return 0.5 * (p + p.transpose());
}

double min_symmetric_eigenvalue(const MatrixXd& p) {
  if (p.rows() != p.cols()) {
    throw ConfigError("min_symmetric_eigenvalue: matrix must be square");
  }
  if (p.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(p),
                                             Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

bool psd_check(const MatrixXd& p, double tol) {
  return min_symmetric_eigenvalue(p) >= -tol;
}

MatrixXd block_diagonal(const std::vector<MatrixXd>& blocks) {
  Eigen::Index rows = 0, cols = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    cols += b.cols();
  }
  MatrixXd out = MatrixXd::Zero(rows, cols);
  Eigen::Index r = 0, c = 0;
  for (const auto& b : blocks) {
    out.block(r, c, b.rows(), b.cols()) = b;
    r += b.rows();
    c += b.cols();
  }
  return out;
}

std::vector<double> trapezoid_weights(const TimeGrid& grid) {
  std::vector<double> w(grid.num_nodes());
  for (int j = 0; j < grid.num_steps(); ++j) {
    const double h = grid.node(j + 1) - grid.node(j);
    w[j] += 0.5 * h;
    w[j + 1] += 0.5 * h;
  }
  return w;
}

}  // namespace mfg_lqg
