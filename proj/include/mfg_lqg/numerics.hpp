#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace mfg_lqg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Uniform grid t_j = j * h on [0, T], j = 0..M.
class TimeGrid {
 public:
  /// Unit horizon with the default resolution of 400 steps.
  TimeGrid() : TimeGrid(1.0, 400) {}
  TimeGrid(double t_end, int num_steps);

  double t_end() const { return t_end_; }
  int num_steps() const { return num_steps_; }
  int num_nodes() const { return num_steps_ + 1; }
  double step() const { return step_; }
  double node(int j) const;

  /// Index j of the interval [t_j, t_{j+1}] containing t; the last interval
  /// for t == t_end.
  int interval(double t) const;

  bool operator==(const TimeGrid& other) const {
    return t_end_ == other.t_end_ && num_steps_ == other.num_steps_;
  }

 private:
  double t_end_;
  int num_steps_;
  double step_;
};

/// One fixed-shape matrix per grid node.
class GridFunction {
 public:
  GridFunction() = default;
  GridFunction(TimeGrid grid, Eigen::Index rows, Eigen::Index cols);
  GridFunction(TimeGrid grid, std::vector<MatrixXd> values);

  /// Same matrix at every node.
  static GridFunction constant(TimeGrid grid, const MatrixXd& value);

  const TimeGrid& grid() const { return grid_; }
  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }

  const MatrixXd& operator[](int j) const { return values_[j]; }
  MatrixXd& operator[](int j) { return values_[j]; }
  const std::vector<MatrixXd>& values() const { return values_; }

  /// Linear interpolation; exact at nodes.
  MatrixXd at(double t) const;

  /// max over nodes of the max-abs entry of (this - other).
  double sup_distance(const GridFunction& other) const;

 private:
  TimeGrid grid_;
  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
  std::vector<MatrixXd> values_;
};

MatrixXd interp(const GridFunction& gf, double t);

/// dX/dt = rhs(t, X)
using MatrixOde = std::function<MatrixXd(double, const MatrixXd&)>;
/// Applied to the state after every completed step (e.g. symmetrize).
using StepProjection = std::function<void(MatrixXd&)>;

/// Classic RK4 sweep from t_end down to 0; result[M] == terminal.
GridFunction integrate_backward(const MatrixOde& rhs, const MatrixXd& terminal,
                                const TimeGrid& grid,
                                const StepProjection& project = {});

/// Classic RK4 sweep from 0 up to t_end; result[0] == initial.
GridFunction integrate_forward(const MatrixOde& rhs, const MatrixXd& initial,
                               const TimeGrid& grid,
                               const StepProjection& project = {});

/// Single RK4 step of size h (negative h steps backward).
MatrixXd rk4_step(const MatrixOde& rhs, double t, const MatrixXd& x, double h);

MatrixXd symmetrize(const MatrixXd& p);

/// min eigenvalue of the symmetrized matrix >= -tol.
bool psd_check(const MatrixXd& p, double tol);

/// Smallest eigenvalue of the symmetric part.
double min_symmetric_eigenvalue(const MatrixXd& p);

/// Block-diagonal assembly.
MatrixXd block_diagonal(const std::vector<MatrixXd>& blocks);

bool all_finite(const MatrixXd& m);

/// Composite trapezoid weights on the grid (h/2 at the ends, h inside).
std::vector<double> trapezoid_weights(const TimeGrid& grid);

}  // namespace mfg_lqg
