#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "posctl/evolution.hpp"

namespace posctl {

/// Radial Sturm-Liouville problem on the unit ball, specialized to d = 1:
///   p'' + a p = -lambda p on (0,1), p'(0) = 0, p(1) = 0,
/// with p_n = cos(mu_n r), mu_n = (n - 1/2) pi, lambda_n = mu_n^2 - a,
/// normalization omega_0 int_0^1 p_n^2 = 1 (omega_0 = 2) and flux alpha_n = p_n'(1).
struct SturmLiouvilleBasis {
  double a = 0.0;
  int n_max = 0;
  double omega0 = 2.0;
  std::vector<double> mu;      // index n - 1
  std::vector<double> lambda;
  std::vector<double> alpha;
  /// lambda_1 <= 0 (a >= mu_1^2); allowed, reported for information.
  bool nonpositive_first = false;

  double eval(int n, double r) const;
  /// omega_0 alpha_n^2 / (2 (lambda_n + a)); equals 1 for every mode.
  double identity(int n) const;
  double max_identity_error() const;
};

SturmLiouvilleBasis sl_basis(double a, int n_max);

/// Ball B = (center - radius, center + radius) inside the uncontrolled region.
struct ProbeBall {
  double center = 0.5;
  double radius = 0.1;
};

struct GammaCertificate {
  std::vector<double> gamma_candidates;  // (y0_n - yf_n) / (-alpha_n)
  bool is_constant = false;
  double spread = 0.0;
  double common_value = 0.0;
  /// spread above tolerance, or a constant nonzero value: either way the
  /// minimal time is positive.
  bool certifies_positive_time = false;
};

GammaCertificate gamma_certificate_from_coefficients(const Eigen::VectorXd& y0_coeff,
                                                     const Eigen::VectorXd& yf0_coeff,
                                                     const SturmLiouvilleBasis& basis,
                                                     double tol = 1e-9);

/// Coefficients int_{-1}^{1} y(center + radius r) p_n(|r|) dr, n = 1..n_max.
Eigen::VectorXd sl_coefficients(const std::function<double(double)>& field, const ProbeBall& ball,
                                const SturmLiouvilleBasis& basis, int quad_points = 4001);

GammaCertificate gamma_certificate(const std::function<double(double)>& y0_restricted,
                                   const std::function<double(double)>& yf0_restricted,
                                   const ProbeBall& ball, const SturmLiouvilleBasis& basis,
                                   double tol = 1e-9);

/// Potential of the restricted first equation on the ball after rescaling
/// it to unit radius: a11 radius^2 / d11.
double ball_potential(const SystemSpec& spec, const ProbeBall& ball);

/// Result of min 1/2 |x|^2 subject to C x >= b.
struct QpResult {
  bool converged = false;
  bool feasible = false;
  Eigen::VectorXd x;
  int iterations = 0;
  int active = 0;
};

/// Dual active-set method of Goldfarb and Idnani for an identity Hessian.
/// Rows of C should be normalized; tol is the accepted constraint violation.
QpResult min_norm_qp(const Eigen::MatrixXd& C, const Eigen::VectorXd& b, int max_iterations,
                     double tol);

enum class Verdict { feasible, infeasible, indeterminate };
std::string to_string(Verdict v);

/// Minimum-norm control on [0, T] matching the free trajectory from
/// target_seed at T on modes 0..J, subject to state >= -M on the constraint
/// grid. M = infinity drops the state constraint.
struct FeasibilityProblem {
  SystemSpec spec;
  SpectralState y0;
  SpectralState target_seed;
  double T = 1.0;
  double M = std::numeric_limits<double>::infinity();
  int control_highest_mode = 8;
  int knots = 20;
  int state_modes = kDefaultModes;
  int constraint_points = 128;
  int audit_factor = 4;
  double steer_tol = 1e-6;
  double certify_tol = kCertifyTol;
  int max_iterations = 100000;
  double kkt_tol = 1e-7;
};

struct FeasibilityResult {
  Verdict verdict = Verdict::indeterminate;
  double T = 0.0;
  std::optional<ControlSignal> control;
  double min_state = 0.0;       // audit-grid minimum
  double endpoint_defect = 0.0; // controlled modes
  double control_norm = 0.0;
  int iterations = 0;
  int active_constraints = 0;
  std::string detail;
};

FeasibilityResult feasibility(const FeasibilityProblem& problem);

struct BisectionRecord {
  double T = 0.0;
  Verdict verdict = Verdict::indeterminate;
  double min_state = 0.0;
};

struct BisectionResult {
  double T_bar_estimate = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<BisectionRecord> evaluations;
  /// No evaluation found feasible below an infeasible T.
  bool monotone_consistent = true;
};

BisectionResult bisect_minimal_time(const FeasibilityProblem& problem, double T_lo, double T_hi,
                                    int iterations);

enum class ObstructionVerdict { obstructed, not_obstructed, not_applicable };
std::string to_string(ObstructionVerdict v);

/// Mass calculus for systems shaped like
///   y1' = d1 y1'' + c y2,  y2' = d2 y2'' - c y2 + (B u)_2,  c >= 0,
/// where int (y1 + y2) is conserved without control and int y1 is
/// nondecreasing whenever y2 >= 0.
struct MassObstruction {
  ObstructionVerdict verdict = ObstructionVerdict::not_applicable;
  double controlled_lower = 0.0;  // int y1(0): lower bound for the controlled int y1(t)
  double target_upper = 0.0;      // int (yf1 + yf2)(0): upper bound for int yf1(t)
  double target_mass = 0.0;       // int yf1(T)
  std::string reason;
};

bool matches_mass_pattern(const SystemSpec& spec, std::string* why = nullptr);

MassObstruction mass_obstruction(const SystemSpec& spec, const SpectralState& y0,
                                 const SpectralState& yf0, double T);

}  // namespace posctl
