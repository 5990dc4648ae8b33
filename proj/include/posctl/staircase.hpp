#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "posctl/evolution.hpp"
#include "posctl/hum_control.hpp"
#include "posctl/minimal_time.hpp"

namespace posctl {

enum class StaircaseVariant { identity_diffusion, general_diagonal };
enum class FloorMode { approximate, zeta_shifted, exact };

std::string to_string(StaircaseVariant v);
std::string to_string(FloorMode f);

struct StaircaseOptions {
  int modes = kDefaultModes;
  int control_highest_mode = 4;
  int steps_per_tau = 100;
  /// Each step controls during this fraction of tau and then lets the
  /// system dissipate, so modes above J_ctrl settle before the next step.
  double control_fraction = 0.5;
  bool envelope = false;
  double safety_factor = 2.0;
  int grid_points = kDefaultGridPoints;
  int max_steps = 4000;
  double wait_cap = 200.0;
  double shift_margin = 0.05;
  double zeta_horizon = 20.0;
  FloorMode floor_mode = FloorMode::approximate;
  double certify_tol = kCertifyTol;
  double accept_tol = 1e-3;
  double zero_component_tol = 1e-8;
};

struct StaircasePlan {
  StaircaseVariant variant = StaircaseVariant::identity_diffusion;
  double tau = 0.5;
  int N = 1;
  double delta = 0.0;
  double C_tau = 0.0;
  double M = 1.0;
  double zeta = 0.0;
  /// Identity variant: wait before the first step, and the spectral-gap
  /// estimate of the same quantity kept as a cross-check.
  double T0 = 0.0;
  double T0_gap_estimate = 0.0;
  /// General variant: A is replaced by A - lambda_shift I.
  double lambda_shift = 0.0;
  double epsilon = 0.0;
  FloorMode floor_mode = FloorMode::approximate;
  double floor = 0.0;
  /// Identity variant: constant Z targets, k = 0..N.
  std::vector<Eigen::VectorXd> constant_targets;
  bool capped = false;
  bool certifiable = true;
  std::string note;
  StaircaseOptions options;

  double total_time() const;
};

struct StepDiagnostics {
  int index = 0;
  std::string phase;
  double t_start = 0.0;
  double t_end = 0.0;
  double defect = 0.0;
  double control_norm = 0.0;
  double min_state = 0.0;
  double tracking = 0.0;  // max L2 distance to the step's reference trajectory
};

enum class StaircaseStatus { success, constraint_violated, terminal_mismatch, obstructed };
std::string to_string(StaircaseStatus s);

struct StaircaseResult {
  StaircaseStatus status = StaircaseStatus::success;
  TrajectoryRecord trajectory;  // original variables
  ControlSignal control;
  ConstraintReport constraint;
  double terminal_error = 0.0;
  double min_state = 0.0;
  std::vector<StepDiagnostics> steps;
  /// Identity variant: minimum of Z = e^{-tA} Y and its proof bound.
  std::optional<double> min_z;
  std::optional<double> z_bound;
  /// General variant: largest gap between the rescaled run mapped back and
  /// the re-simulation in original variables.
  std::optional<double> rescaling_gap;
  std::optional<MassObstruction> obstruction;
  std::string message;
};

StaircasePlan plan_identity(const SystemSpec& spec, const SpectralState& y0,
                            const SpectralState& yf0, double tau, double convergence_tol,
                            const StaircaseOptions& options = {});

StaircaseResult run_identity(const SystemSpec& spec, const StaircasePlan& plan,
                             const SpectralState& y0, const SpectralState& yf0);

StaircasePlan plan_general(const SystemSpec& spec, const SpectralState& y0,
                           const SpectralState& yf0, double tau, double epsilon,
                           const StaircaseOptions& options = {});

StaircaseResult run_general(const SystemSpec& spec, const StaircasePlan& plan,
                            const SpectralState& y0, const SpectralState& yf0);

}  // namespace posctl
