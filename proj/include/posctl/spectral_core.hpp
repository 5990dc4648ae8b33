#pragma once

#include <Eigen/Dense>

#include "posctl/system_model.hpp"

namespace posctl {

/// Neumann eigenbasis of -d^2/dx^2 on (0,1): e_0 = 1, e_p = sqrt(2) cos(p pi x),
/// with eigenvalues (p pi)^2 for p = 0..J.
class NeumannBasis {
 public:
  explicit NeumannBasis(int highest_mode);

  int highest_mode() const { return highest_mode_; }
  int mode_count() const { return highest_mode_ + 1; }
  static double eigenvalue(int p);
  static double eval(int p, double x);
  Eigen::VectorXd eigenvalues() const;

 private:
  int highest_mode_;
};

/// Mode coefficients of an n-component field: row p holds the coefficient
/// vector of e_p, column i the component.
struct SpectralState {
  Eigen::MatrixXd coeff;

  static SpectralState zero(int highest_mode, int components);
  /// Spatially constant field with the given component values.
  static SpectralState constant(int highest_mode, const Eigen::VectorXd& values);

  int highest_mode() const { return static_cast<int>(coeff.rows()) - 1; }
  int mode_count() const { return static_cast<int>(coeff.rows()); }
  int components() const { return static_cast<int>(coeff.cols()); }
  /// L2(0,1)^n norm (Parseval).
  double l2_norm() const { return coeff.norm(); }
  /// Spatial mean of each component.
  Eigen::VectorXd mean() const { return coeff.row(0).transpose(); }

  SpectralState operator+(const SpectralState& o) const { return {coeff + o.coeff}; }
  SpectralState operator-(const SpectralState& o) const { return {coeff - o.coeff}; }
  SpectralState operator*(double s) const { return {coeff * s}; }
};

/// x_i = i / (points - 1), endpoints included.
Eigen::VectorXd uniform_grid(int points);

/// Projects samples (points x n, on uniform_grid(points)) onto modes 0..J
/// with composite Simpson quadrature. Requires points >= 4 J.
SpectralState project(const Eigen::MatrixXd& samples, const NeumannBasis& basis);

/// Evaluates the field on uniform_grid(points): result is points x n.
Eigen::MatrixXd reconstruct(const SpectralState& state, int points);

/// Precomputed basis table for repeated reconstruction on one grid.
class GridEvaluator {
 public:
  GridEvaluator(int highest_mode, int points);

  int points() const { return static_cast<int>(table_.rows()); }
  int highest_mode() const { return static_cast<int>(table_.cols()) - 1; }
  Eigen::MatrixXd values(const SpectralState& state) const;
  /// Componentwise minimum over the grid.
  Eigen::VectorXd minima(const SpectralState& state) const;
  const Eigen::MatrixXd& table() const { return table_; }

 private:
  Eigen::MatrixXd table_;  // points x (J+1)
};

/// Grid size giving 8 points per wavelength of the highest mode, never below
/// 4 J + 1 and never below 65.
int default_grid_points(int highest_mode);

/// Componentwise minimum of the reconstruction on uniform_grid(points).
Eigen::VectorXd min_on_grid(const SpectralState& state, int grid_points);

/// Gram matrix of the basis restricted to the control window,
/// G(p, q) = integral over omega of e_p e_q.
struct ControlCoupling {
  Interval omega;
  Eigen::MatrixXd G;
};

ControlCoupling coupling_matrix(const Interval& omega, const NeumannBasis& basis);

/// Composite Simpson weights on a uniform grid of `points` nodes over [lo, hi];
/// an odd number of intervals is closed with a 3/8 panel.
Eigen::VectorXd simpson_weights(int points, double lo = 0.0, double hi = 1.0);

}  // namespace posctl
