#include "posctl/spectral_core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Eigenvalues>

#include "posctl/errors.hpp"

namespace posctl {

namespace {

constexpr double kPi = std::numbers::pi;
const double kSqrt2 = std::sqrt(2.0);

// Integral over [a, b] of cos(k pi x); k = 0 gives the length.
double cos_integral(int k, double a, double b) {
  if (k == 0) return b - a;
  const double w = k * kPi;
  return (std::sin(w * b) - std::sin(w * a)) / w;
}

double basis_product_integral(int p, int q, double a, double b) {
  if (p == 0 && q == 0) return b - a;
  if (p == 0 || q == 0) return kSqrt2 * cos_integral(std::max(p, q), a, b);
  // 2 cos(p pi x) cos(q pi x) = cos((p-q) pi x) + cos((p+q) pi x)
  return cos_integral(std::abs(p - q), a, b) + cos_integral(p + q, a, b);
}

}  // namespace

NeumannBasis::NeumannBasis(int highest_mode) : highest_mode_(highest_mode) {
  if (highest_mode < 0) throw StructuralError("highest mode must be nonnegative");
}

double NeumannBasis::eigenvalue(int p) { return std::pow(p * kPi, 2); }

double NeumannBasis::eval(int p, double x) {
  return p == 0 ? 1.0 : kSqrt2 * std::cos(p * kPi * x);
}

Eigen::VectorXd NeumannBasis::eigenvalues() const {
  Eigen::VectorXd ev(mode_count());
  for (int p = 0; p <= highest_mode_; ++p) ev(p) = eigenvalue(p);
  return ev;
}

SpectralState SpectralState::zero(int highest_mode, int components) {
  return {Eigen::MatrixXd::Zero(highest_mode + 1, components)};
}

SpectralState SpectralState::constant(int highest_mode, const Eigen::VectorXd& values) {
  SpectralState s = zero(highest_mode, static_cast<int>(values.size()));
  s.coeff.row(0) = values.transpose();
  return s;
}

Eigen::VectorXd uniform_grid(int points) {
  if (points < 2) throw ResolutionError("a grid needs at least two points");
  return Eigen::VectorXd::LinSpaced(points, 0.0, 1.0);
}

Eigen::VectorXd simpson_weights(int points, double lo, double hi) {
  if (points < 2) throw ResolutionError("quadrature needs at least two nodes");
  const int intervals = points - 1;
  const double h = (hi - lo) / intervals;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(points);
  if (intervals == 1) {
    w << 0.5 * h, 0.5 * h;
    return w;
  }
  const int simpson_intervals = (intervals % 2 == 0) ? intervals : intervals - 3;
  for (int i = 0; i < simpson_intervals; i += 2) {
    w(i) += h / 3.0;
    w(i + 1) += 4.0 * h / 3.0;
    w(i + 2) += h / 3.0;
  }
  if (simpson_intervals != intervals) {
    const int s = simpson_intervals;
    w(s) += 3.0 * h / 8.0;
    w(s + 1) += 9.0 * h / 8.0;
    w(s + 2) += 9.0 * h / 8.0;
    w(s + 3) += 3.0 * h / 8.0;
  }
  return w;
}

SpectralState project(const Eigen::MatrixXd& samples, const NeumannBasis& basis) {
  const int points = static_cast<int>(samples.rows());
  const int J = basis.highest_mode();
  if (points < std::max(4 * J, 2)) {
    throw ResolutionError("projection onto " + std::to_string(J) + " modes needs at least " +
                          std::to_string(4 * J) + " grid points, got " + std::to_string(points));
  }
  const Eigen::VectorXd x = uniform_grid(points);
  const Eigen::VectorXd w = simpson_weights(points);
  Eigen::MatrixXd weighted_table(basis.mode_count(), points);
  for (int p = 0; p <= J; ++p) {
    for (int i = 0; i < points; ++i) weighted_table(p, i) = w(i) * NeumannBasis::eval(p, x(i));
  }
  return {weighted_table * samples};
}

GridEvaluator::GridEvaluator(int highest_mode, int points) {
  const Eigen::VectorXd x = uniform_grid(points);
  table_.resize(points, highest_mode + 1);
  for (int i = 0; i < points; ++i) {
    for (int p = 0; p <= highest_mode; ++p) table_(i, p) = NeumannBasis::eval(p, x(i));
  }
}

Eigen::MatrixXd GridEvaluator::values(const SpectralState& state) const {
  if (state.highest_mode() != highest_mode()) {
    throw StructuralError("state truncation does not match the grid evaluator");
  }
  return table_ * state.coeff;
}

Eigen::VectorXd GridEvaluator::minima(const SpectralState& state) const {
  return values(state).colwise().minCoeff().transpose();
}

int default_grid_points(int highest_mode) {
  return std::max({4 * highest_mode + 1, 65});
}

Eigen::MatrixXd reconstruct(const SpectralState& state, int points) {
  return GridEvaluator(state.highest_mode(), points).values(state);
}

Eigen::VectorXd min_on_grid(const SpectralState& state, int grid_points) {
  if (grid_points < 4 * state.highest_mode()) {
    throw ResolutionError("constraint grid needs at least 4 J points");
  }
  return GridEvaluator(state.highest_mode(), grid_points).minima(state);
}

ControlCoupling coupling_matrix(const Interval& omega, const NeumannBasis& basis) {
  if (!(omega.a >= 0.0 && omega.a < omega.b && omega.b <= 1.0)) {
    throw StructuralError("control window must be a nonempty subinterval of (0,1)");
  }
  const int size = basis.mode_count();
  ControlCoupling coupling{omega, Eigen::MatrixXd(size, size)};
  for (int p = 0; p < size; ++p) {
    for (int q = p; q < size; ++q) {
      const double v = basis_product_integral(p, q, omega.a, omega.b);
      coupling.G(p, q) = v;
      coupling.G(q, p) = v;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(coupling.G, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, eig.eigenvalues().maxCoeff())) {
    throw StructuralError("coupling matrix lost positive semidefiniteness");
  }
  return coupling;
}

}  // namespace posctl
