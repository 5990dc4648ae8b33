#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "posctl/evolution.hpp"

namespace posctl {

enum class Quadrature { simpson, midpoint };

/// Smooth cutoff on [0, 1]: zero at both ends, one on [1/4, 3/4], C-infinity.
double smooth_envelope(double r);

/// Controllability Gramian of modes 0..J_ctrl over a horizon tau,
///   W = int_0^tau psi(s) Phi(tau,s) (G_cc (x) B B^T) Phi(tau,s)^T ds,
/// indexed mode-major (row p n + i). psi is 1 unless the envelope is used,
/// in which case the control psi (I (x) B^T) Phi^T W^{-1} d minimizes the
/// psi-weighted norm int |u|^2 / psi.
/// With the midpoint rule the control is sampled at step midpoints and the
/// kernel is integrated exactly over each step, as the integrator does.
struct GramianOperator {
  Eigen::MatrixXd W;
  double min_eigenvalue = 0.0;
  Eigen::VectorXd min_eigenvector;
  bool near_uncontrollable = false;
  /// Smallest eigenvalue of D^{-1/2} W D^{-1/2}, D = diag(W).
  double scaled_min_eigenvalue = 0.0;
  double tau = 0.0;
  int control_highest_mode = 0;
  int quad_steps = 0;
  Quadrature quadrature = Quadrature::simpson;
  bool envelope = false;
};

inline constexpr double kGramianFloor = 1e-12;
inline constexpr double kSteerTol = 1e-6;

GramianOperator build_gramian(const ModalSystem& system, int control_highest_mode, double tau,
                              int quad_steps, Quadrature quadrature = Quadrature::simpson,
                              bool envelope = false);

struct SteerOptions {
  int control_highest_mode = 8;
  int steps = 200;
  bool envelope = false;
  double gramian_floor = kGramianFloor;
};

struct CostReport {
  double tau = 0.0;
  double control_norm = 0.0;
  double defect_norm = 0.0;     // endpoint defect on controlled modes before steering
  double ratio = 0.0;           // control_norm / defect_norm (0 when the defect vanishes)
  double endpoint_defect = 0.0; // same quantity after the controlled run
  double tail_norm = 0.0;       // mismatch on modes above J_ctrl, not steered
  double gramian_min_eigenvalue = 0.0;
  std::optional<double> blowup_slope;
};

struct SteerResult {
  ControlSignal control;
  CostReport cost;
  SpectralState final_state;
};

/// Minimal-norm steering with the Gramian factored once, for repeated use at
/// a fixed horizon. The Gramian uses the midpoint rule of the integrator, so
/// the discrete endpoint is matched to round-off. The solve is done on the
/// diagonally scaled Gramian; steering fails when its smallest eigenvalue
/// is below the floor.
class HumSteerer {
 public:
  HumSteerer(const ModalSystem& system, double tau, const SteerOptions& options = {});

  const ModalSystem& system() const { return system_; }
  const GramianOperator& gramian() const { return gramian_; }
  double tau() const { return tau_; }
  const SteerOptions& options() const { return options_; }

  /// Control on [t0, t0 + tau] taking state0 to `target` on modes 0..J_ctrl.
  SteerResult steer(const SpectralState& state0, const SpectralState& target, double t0) const;
  /// Control for a prescribed endpoint defect d (mode-major, (J_ctrl+1) n).
  ControlSignal control_for_defect(const Eigen::VectorXd& defect, double t0) const;

 private:
  ModalSystem system_;
  double tau_;
  SteerOptions options_;
  GramianOperator gramian_;
  std::vector<Eigen::MatrixXd> exp_tau_;             // e^{M_p tau}
  std::vector<std::vector<Eigen::MatrixXd>> phi_;    // per step and mode
  std::vector<double> psi_;
  Eigen::VectorXd scale_;
  Eigen::LLT<Eigen::MatrixXd> factor_;
};

SteerResult steer(const ModalSystem& system, const SpectralState& state0,
                  const SpectralState& target, double t0, double tau,
                  const SteerOptions& options = {});

struct CostSweep {
  std::vector<CostReport> reports;
  double slope = 0.0;  // least-squares slope of log(norm) against 1/tau
  bool strictly_decreasing = false;
};

/// Steers state0 toward the free trajectory started from target_seed at t0,
/// once per horizon.
CostSweep cost_sweep(const ModalSystem& system, const SpectralState& state0,
                     const SpectralState& target_seed, const std::vector<double>& taus,
                     const SteerOptions& options = {});

struct LrOptions {
  int min_control_mode = 2;
  int steps_per_stage = 200;
  bool envelope = true;
};

struct LrResult {
  ControlSignal control;
  double control_norm = 0.0;
  double terminal_defect = 0.0;   // all modes of the truncation
  std::vector<int> stage_modes;
  double plain_control_norm = 0.0;
  double plain_terminal_defect = 0.0;
  SpectralState final_state;
};

/// Alternating schedule: stage j controls modes up to J_min 2^j during its
/// first half, matching the target trajectory at the stage midpoint, then
/// lets the system dissipate. A plain steer over the whole horizon with the
/// final stage's J_ctrl is run for comparison.
LrResult lr_steer(const ModalSystem& system, const SpectralState& state0,
                  const SpectralState& target_seed, double t0, double total_T, int stage_count,
                  const LrOptions& options = {});

}  // namespace posctl
