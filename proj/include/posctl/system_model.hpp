#pragma once

#include <complex>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace posctl {

/// Open subinterval (a, b) of the unit interval.
struct Interval {
  double a = 0.0;
  double b = 1.0;

  double length() const { return b - a; }
  bool contains(double x) const { return x > a && x < b; }
  /// (0,1) minus the closure of the window contains an open interval.
  bool has_uncontrolled_region() const { return a > 0.0 || b < 1.0; }
};

enum class BoundaryCondition { neumann, dirichlet };

/// Coupled reaction-diffusion system
///   dY/dt - D Y_xx = A Y + B U 1_omega   on (0,1),
/// with homogeneous boundary conditions of type `bc`.
struct SystemSpec {
  Eigen::MatrixXd D;
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Interval omega;
  BoundaryCondition bc = BoundaryCondition::neumann;

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }

  /// Throws StructuralError on inconsistent shapes or an invalid window.
  void check_dimensions() const;
};

struct StructureReport {
  bool is_elliptic = false;
  double alpha = 0.0;  // smallest eigenvalue of (D + D^T)/2
  bool is_diagonal_D = false;
  bool is_scalar_D = false;
  bool is_quasipositive_A = false;
  std::vector<std::complex<double>> A_spectrum;
  bool eigenvalues_nonneg_real = false;
  double max_symmetric_A = 0.0;  // largest eigenvalue of (A + A^T)/2
  double tol = 0.0;
};

StructureReport validate_structure(const SystemSpec& spec, double tol = 1e-10);

/// Kalman block [M^{n-1} B | ... | M B | B] with M = -lambda D + A.
Eigen::MatrixXd kalman_matrix(const SystemSpec& spec, double lambda);

/// Numerical rank of the Kalman block: singular values above tol * sigma_1.
int kalman_rank(const SystemSpec& spec, double lambda, double tol = 1e-10);

struct KalmanVerdict {
  bool satisfied_up_to_p_max = false;
  std::optional<int> failed_at;
  int p_max = 0;
  /// rank [A | B], evaluated only when D is a multiple of the identity.
  std::optional<int> reduced_rank;
  /// True when the reduced test applies and passes: the condition then holds
  /// for every mode, not only for the checked prefix.
  bool all_modes_certified = false;
};

KalmanVerdict kalman_condition_all_modes(const SystemSpec& spec, int p_max = 200,
                                         double tol = 1e-10);

}  // namespace posctl
