#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "posctl/spectral_core.hpp"
#include "posctl/system_model.hpp"

namespace posctl {

inline constexpr int kDefaultModes = 32;
inline constexpr int kDefaultGridPoints = 512;
inline constexpr double kCertifyTol = 1e-6;

/// Truncated modal form of the system: for p = 0..J,
///   x_p' = (-lambda_p D + A) x_p + sum_q G(p, q) B u_q.
/// The eigenvalues need not be Neumann ones, which lets tests pose
/// single-mode problems directly.
struct ModalSystem {
  Eigen::MatrixXd D;
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd coupling;
  Interval omega;

  static ModalSystem neumann(const SystemSpec& spec, int highest_mode = kDefaultModes);

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
  int highest_mode() const { return static_cast<int>(eigenvalues.size()) - 1; }
  int mode_count() const { return static_cast<int>(eigenvalues.size()); }
  Eigen::MatrixXd mode_matrix(int p) const;
  /// Same system with A replaced by A - rate I.
  ModalSystem shifted(double rate) const;
};

/// Exact one-step maps for every mode block: e^{M_p h} and the source
/// integral S_p = int_0^h e^{M_p s} ds = h phi_1(M_p h).
class ModePropagator {
 public:
  ModePropagator(const ModalSystem& system, double h);

  double step_size() const { return h_; }
  const Eigen::MatrixXd& full(int p) const { return full_[static_cast<std::size_t>(p)]; }
  const Eigen::MatrixXd& source(int p) const { return source_[static_cast<std::size_t>(p)]; }

  void free_step(Eigen::MatrixXd& coeff) const;
  /// Exponential integrator with the source sampled at the step midpoint:
  ///   x(t+h) = e^{Mh} x(t) + S f(t + h/2),
  /// where `forcing` holds f row-wise (modes x n). Exact for controls that
  /// are constant on each step.
  void forced_step(Eigen::MatrixXd& coeff, const Eigen::MatrixXd& forcing) const;

 private:
  double h_;
  std::vector<Eigen::MatrixXd> full_;
  std::vector<Eigen::MatrixXd> source_;
};

/// Control on a uniform time grid: values[k] holds the mode coefficients
/// (control modes x channels) at the midpoint of step k. An empty `values`
/// means the control is identically zero on the segment.
struct ControlSegment {
  double t0 = 0.0;
  double h = 0.0;
  int steps = 0;
  std::vector<Eigen::MatrixXd> values;

  double end() const { return t0 + h * steps; }
  bool is_zero() const { return values.empty(); }
  double midpoint(int k) const { return t0 + (k + 0.5) * h; }
};

/// Piecewise control signal U(t,x) = sum_q u_q(t) e_q(x) 1_omega(x), made of
/// contiguous segments.
class ControlSignal {
 public:
  ControlSignal() = default;
  ControlSignal(int control_modes, int channels)
      : control_modes_(control_modes), channels_(channels) {}

  static ControlSignal zero(double t0, double duration, int steps, int control_modes,
                            int channels);
  static ControlSignal sampled(double t0, double duration, int steps, int control_modes,
                               int channels, const std::function<Eigen::MatrixXd(double)>& fn);

  int control_modes() const { return control_modes_; }
  int channels() const { return channels_; }
  bool empty() const { return segments_.empty(); }
  double start() const;
  double end() const;
  int total_steps() const;
  const std::vector<ControlSegment>& segments() const { return segments_; }

  /// Appends a segment; it must start where the signal ends.
  void append(ControlSegment segment);
  void append(const ControlSignal& other);
  /// Segments are contiguous with positive step sizes.
  bool tiles() const;
  /// Control coefficients at time t (zero outside the signal).
  Eigen::MatrixXd at(double t) const;
  /// Copy with the coefficient rows zero-padded to `modes` control modes.
  ControlSignal with_control_modes(int modes) const;
  /// Multiplies the value of each step by weight(midpoint).
  void scale_by(const std::function<double(double)>& weight);
  /// L2(omega x time) norm, using the top-left block of the coupling matrix.
  double l2_norm(const Eigen::MatrixXd& coupling) const;
  /// Spatial field on uniform_grid(points) at time t: points x channels.
  Eigen::MatrixXd field_at(double t, const Interval& omega, int points) const;

 private:
  int control_modes_ = 0;
  int channels_ = 0;
  std::vector<ControlSegment> segments_;
};

struct EvolveOptions {
  int grid_points = kDefaultGridPoints;
  int record_every = 1;
};

/// Sampled trajectory with per-time spatial minima and L2 norms.
struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<SpectralState> states;
  std::vector<Eigen::VectorXd> minima;
  std::vector<double> l2_norms;
  std::vector<double> reference_distance;

  bool empty() const { return times.empty(); }
  const SpectralState& final_state() const { return states.back(); }
  double final_time() const { return times.back(); }
  /// Appends `next`, dropping its first sample when it repeats the last time.
  void append(const TrajectoryRecord& next);
  /// Fills reference_distance with L2 distances to a record on the same times.
  void attach_reference(const TrajectoryRecord& reference);
};

/// Exact free propagation over time t, no recording.
SpectralState propagate_free(const ModalSystem& system, const SpectralState& state, double t);

TrajectoryRecord free_evolve(const ModalSystem& system, const SpectralState& state0, double T,
                             int steps, const EvolveOptions& options = {}, double t0 = 0.0);

/// Evolution under a single-segment control spanning [t0, t0 + T] with
/// exactly `steps` steps. Throws StructuralError otherwise.
TrajectoryRecord controlled_evolve(const ModalSystem& system, const SpectralState& state0,
                                   const ControlSignal& control, double T, int steps,
                                   const EvolveOptions& options = {});

/// Evolution along every segment of the control, in order.
TrajectoryRecord evolve(const ModalSystem& system, const SpectralState& state0,
                        const ControlSignal& control, const EvolveOptions& options = {});

/// Final state of `evolve` without recording the trajectory.
SpectralState evolve_final(const ModalSystem& system, const SpectralState& state0,
                           const ControlSignal& control);

/// Grid trajectory of the finite-difference oracle.
struct FdTrajectory {
  Eigen::VectorXd x;
  std::vector<double> times;
  std::vector<Eigen::MatrixXd> samples;  // each points x n
};

/// Independent discretization: central differences with mirrored ghost
/// points for the Neumann condition and Heun (RK2) time stepping. The step
/// T/steps must satisfy h <= dx^2 / (2 max D_ii). `control` may be empty.
FdTrajectory fd_oracle_evolve(const SystemSpec& spec, const Eigen::MatrixXd& samples0,
                              const ControlSignal& control, double T, int steps,
                              int record_every = 0, double t0 = 0.0);

/// L2(0,1)^n norm of grid samples (composite Simpson).
double grid_l2_norm(const Eigen::MatrixXd& samples);

struct ConstraintReport {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> minima;
  double floor = 0.0;
  double certify_tol = kCertifyTol;
  bool violated = false;
  std::optional<double> first_violation_time;
  double worst_min = 0.0;
  double worst_time = 0.0;
  int worst_component = 0;
};

ConstraintReport monitor_constraint(const TrajectoryRecord& trajectory, double floor,
                                    double certify_tol = kCertifyTol);

}  // namespace posctl
