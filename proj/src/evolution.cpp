#include "posctl/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <unsupported/Eigen/MatrixFunctions>

#include "posctl/errors.hpp"

namespace posctl {

namespace {

bool same_time(double a, double b) {
  return std::abs(a - b) <= 1e-10 * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

// Row-wise forcing (modes x n) produced by control coefficients u.
Eigen::MatrixXd forcing_rows(const ModalSystem& system, const Eigen::MatrixXd& u) {
  const int cm = static_cast<int>(u.rows());
  return system.coupling.leftCols(cm) * u * system.B.transpose();
}

class Recorder {
 public:
  Recorder(const ModalSystem& system, const EvolveOptions& options)
      : evaluator_(system.highest_mode(), options.grid_points) {
    if (options.grid_points < 4 * system.highest_mode()) {
      throw ResolutionError("constraint grid needs at least 4 J points");
    }
  }

  void record(TrajectoryRecord& out, double t, const Eigen::MatrixXd& coeff) const {
    SpectralState s{coeff};
    out.times.push_back(t);
    out.minima.push_back(evaluator_.minima(s));
    out.l2_norms.push_back(s.l2_norm());
    out.states.push_back(std::move(s));
  }

 private:
  GridEvaluator evaluator_;
};

void check_state(const ModalSystem& system, const SpectralState& state) {
  if (state.mode_count() != system.mode_count() || state.components() != system.n()) {
    throw StructuralError("state shape " + std::to_string(state.mode_count()) + "x" +
                          std::to_string(state.components()) + " does not match the system (" +
                          std::to_string(system.mode_count()) + "x" +
                          std::to_string(system.n()) + ")");
  }
}

void check_control(const ModalSystem& system, const ControlSignal& control) {
  if (control.empty()) return;
  if (control.channels() != system.m()) throw StructuralError("control channel count mismatch");
  if (control.control_modes() > system.mode_count()) {
    throw StructuralError("control uses more modes than the state truncation");
  }
  if (!control.tiles()) throw StructuralError("control segments are not contiguous");
}

void run_segment(const ModalSystem& system, Eigen::MatrixXd& coeff, const ControlSegment& seg,
                 const ModePropagator& prop, const Recorder& recorder, int record_every,
                 TrajectoryRecord& out) {
  for (int k = 0; k < seg.steps; ++k) {
    if (seg.is_zero()) {
      prop.free_step(coeff);
    } else {
      prop.forced_step(coeff, forcing_rows(system, seg.values[static_cast<std::size_t>(k)]));
    }
    const bool last = k + 1 == seg.steps;
    if (last || (record_every > 0 && (k + 1) % record_every == 0)) {
      recorder.record(out, last ? seg.end() : seg.t0 + (k + 1) * seg.h, coeff);
    }
  }
}

}  // namespace

ModalSystem ModalSystem::neumann(const SystemSpec& spec, int highest_mode) {
  spec.check_dimensions();
  const NeumannBasis basis(highest_mode);
  ModalSystem sys;
  sys.D = spec.D;
  sys.A = spec.A;
  sys.B = spec.B;
  sys.eigenvalues = basis.eigenvalues();
  sys.coupling = coupling_matrix(spec.omega, basis).G;
  sys.omega = spec.omega;
  return sys;
}

Eigen::MatrixXd ModalSystem::mode_matrix(int p) const { return -eigenvalues(p) * D + A; }

ModalSystem ModalSystem::shifted(double rate) const {
  ModalSystem s = *this;
  s.A -= rate * Eigen::MatrixXd::Identity(n(), n());
  return s;
}

ModePropagator::ModePropagator(const ModalSystem& system, double h) : h_(h) {
  if (!(h > 0.0)) throw StructuralError("step size must be positive");
  const int modes = system.mode_count();
  const int n = system.n();
  full_.reserve(static_cast<std::size_t>(modes));
  source_.reserve(static_cast<std::size_t>(modes));
  // exp([[M h, h I], [0, 0]]) = [[e^{M h}, S], [0, I]]
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  aug.topRightCorner(n, n) = h * Eigen::MatrixXd::Identity(n, n);
  for (int p = 0; p < modes; ++p) {
    aug.topLeftCorner(n, n) = system.mode_matrix(p) * h;
    const Eigen::MatrixXd E = aug.exp();
    full_.push_back(E.topLeftCorner(n, n));
    source_.push_back(E.topRightCorner(n, n));
  }
}

void ModePropagator::free_step(Eigen::MatrixXd& coeff) const {
  for (int p = 0; p < coeff.rows(); ++p) {
    const Eigen::VectorXd x = full(p) * coeff.row(p).transpose();
    coeff.row(p) = x.transpose();
  }
}

void ModePropagator::forced_step(Eigen::MatrixXd& coeff, const Eigen::MatrixXd& forcing) const {
  for (int p = 0; p < coeff.rows(); ++p) {
    Eigen::VectorXd x = full(p) * coeff.row(p).transpose();
    x += source(p) * forcing.row(p).transpose();
    coeff.row(p) = x.transpose();
  }
}

ControlSignal ControlSignal::zero(double t0, double duration, int steps, int control_modes,
                                  int channels) {
  if (steps < 1 || !(duration > 0.0)) throw StructuralError("segment needs positive length");
  ControlSignal s(control_modes, channels);
  s.segments_.push_back({t0, duration / steps, steps, {}});
  return s;
}

ControlSignal ControlSignal::sampled(double t0, double duration, int steps, int control_modes,
                                     int channels,
                                     const std::function<Eigen::MatrixXd(double)>& fn) {
  ControlSignal s = zero(t0, duration, steps, control_modes, channels);
  ControlSegment& seg = s.segments_.front();
  seg.values.reserve(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    Eigen::MatrixXd v = fn(seg.midpoint(k));
    if (v.rows() != control_modes || v.cols() != channels) {
      throw StructuralError("sampled control has the wrong shape");
    }
    seg.values.push_back(std::move(v));
  }
  return s;
}

double ControlSignal::start() const {
  if (segments_.empty()) throw StructuralError("empty control signal has no start");
  return segments_.front().t0;
}

double ControlSignal::end() const {
  if (segments_.empty()) throw StructuralError("empty control signal has no end");
  return segments_.back().end();
}

int ControlSignal::total_steps() const {
  int total = 0;
  for (const auto& s : segments_) total += s.steps;
  return total;
}

void ControlSignal::append(ControlSegment segment) {
  if (segment.steps < 1 || !(segment.h > 0.0)) {
    throw StructuralError("segment needs positive step count and size");
  }
  if (!segment.values.empty()) {
    if (static_cast<int>(segment.values.size()) != segment.steps) {
      throw StructuralError("segment value count differs from its step count");
    }
    for (const auto& v : segment.values) {
      if (v.rows() != control_modes_ || v.cols() != channels_) {
        throw StructuralError("segment values have the wrong shape");
      }
    }
  }
  if (!segments_.empty()) {
    if (!same_time(segment.t0, end())) {
      throw StructuralError("segment starting at " + std::to_string(segment.t0) +
                            " does not continue the signal ending at " + std::to_string(end()));
    }
    segment.t0 = end();
  }
  segments_.push_back(std::move(segment));
}

void ControlSignal::append(const ControlSignal& other) {
  if (other.empty()) return;
  if (empty() && control_modes_ == 0 && channels_ == 0) {
    control_modes_ = other.control_modes_;
    channels_ = other.channels_;
  }
  if (other.control_modes_ != control_modes_ || other.channels_ != channels_) {
    throw StructuralError("cannot concatenate controls of different shapes");
  }
  for (const auto& s : other.segments_) append(s);
}

bool ControlSignal::tiles() const {
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i].steps < 1 || !(segments_[i].h > 0.0)) return false;
    if (i > 0 && !same_time(segments_[i].t0, segments_[i - 1].end())) return false;
  }
  return true;
}

Eigen::MatrixXd ControlSignal::at(double t) const {
  for (const auto& s : segments_) {
    if (t < s.t0 || t >= s.end()) continue;
    if (s.is_zero()) break;
    const int k = std::clamp(static_cast<int>((t - s.t0) / s.h), 0, s.steps - 1);
    return s.values[static_cast<std::size_t>(k)];
  }
  return Eigen::MatrixXd::Zero(control_modes_, channels_);
}

ControlSignal ControlSignal::with_control_modes(int modes) const {
  if (modes < control_modes_) throw StructuralError("cannot drop control modes by padding");
  ControlSignal out = *this;
  out.control_modes_ = modes;
  for (auto& s : out.segments_) {
    for (auto& v : s.values) {
      Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(modes, channels_);
      padded.topRows(v.rows()) = v;
      v = std::move(padded);
    }
  }
  return out;
}

void ControlSignal::scale_by(const std::function<double(double)>& weight) {
  for (auto& s : segments_) {
    for (int k = 0; k < static_cast<int>(s.values.size()); ++k) {
      s.values[static_cast<std::size_t>(k)] *= weight(s.midpoint(k));
    }
  }
}

double ControlSignal::l2_norm(const Eigen::MatrixXd& coupling) const {
  if (coupling.rows() < control_modes_) throw StructuralError("coupling matrix too small");
  const Eigen::MatrixXd Gc = coupling.topLeftCorner(control_modes_, control_modes_);
  double sum = 0.0;
  for (const auto& s : segments_) {
    for (const auto& v : s.values) sum += s.h * (v.transpose() * Gc * v).trace();
  }
  return std::sqrt(std::max(sum, 0.0));
}

Eigen::MatrixXd ControlSignal::field_at(double t, const Interval& omega, int points) const {
  const Eigen::VectorXd x = uniform_grid(points);
  const Eigen::MatrixXd u = at(t);
  Eigen::MatrixXd field = Eigen::MatrixXd::Zero(points, channels_);
  const double edge = 0.25 / (points - 1);
  for (int i = 0; i < points; ++i) {
    double weight = 0.0;
    if (omega.contains(x(i))) weight = 1.0;
    if (std::abs(x(i) - omega.a) < edge || std::abs(x(i) - omega.b) < edge) weight = 0.5;
    if (weight == 0.0) continue;
    for (int q = 0; q < control_modes_; ++q) {
      field.row(i) += weight * NeumannBasis::eval(q, x(i)) * u.row(q);
    }
  }
  return field;
}

void TrajectoryRecord::append(const TrajectoryRecord& next) {
  std::size_t first = 0;
  if (!empty() && !next.empty() && same_time(next.times.front(), times.back())) first = 1;
  const bool with_reference = reference_distance.size() == times.size() &&
                              next.reference_distance.size() == next.times.size();
  if (!with_reference) reference_distance.clear();
  for (std::size_t i = first; i < next.times.size(); ++i) {
    if (!times.empty() && next.times[i] <= times.back()) {
      throw StructuralError("appended trajectory does not advance in time");
    }
    times.push_back(next.times[i]);
    states.push_back(next.states[i]);
    minima.push_back(next.minima[i]);
    l2_norms.push_back(next.l2_norms[i]);
    if (with_reference) reference_distance.push_back(next.reference_distance[i]);
  }
}

void TrajectoryRecord::attach_reference(const TrajectoryRecord& reference) {
  if (reference.times.size() != times.size()) {
    throw StructuralError("reference trajectory has a different time grid");
  }
  reference_distance.resize(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!same_time(times[i], reference.times[i])) {
      throw StructuralError("reference trajectory has a different time grid");
    }
    reference_distance[i] = (states[i] - reference.states[i]).l2_norm();
  }
}

SpectralState propagate_free(const ModalSystem& system, const SpectralState& state, double t) {
  check_state(system, state);
  if (t == 0.0) return state;
  SpectralState out = state;
  for (int p = 0; p < system.mode_count(); ++p) {
    const Eigen::MatrixXd E = (system.mode_matrix(p) * t).exp();
    out.coeff.row(p) = (E * state.coeff.row(p).transpose()).transpose();
  }
  return out;
}

TrajectoryRecord free_evolve(const ModalSystem& system, const SpectralState& state0, double T,
                             int steps, const EvolveOptions& options, double t0) {
  if (!(T > 0.0) || steps < 1) throw StructuralError("free evolution needs T > 0 and steps >= 1");
  return evolve(system, state0, ControlSignal::zero(t0, T, steps, 1, system.m()), options);
}

TrajectoryRecord controlled_evolve(const ModalSystem& system, const SpectralState& state0,
                                   const ControlSignal& control, double T, int steps,
                                   const EvolveOptions& options) {
  if (control.segments().size() != 1) {
    throw StructuralError("controlled_evolve expects a single-segment control");
  }
  const ControlSegment& seg = control.segments().front();
  if (seg.steps != steps || !same_time(seg.h * seg.steps, T)) {
    throw StructuralError("control grid (" + std::to_string(seg.steps) + " steps over " +
                          std::to_string(seg.h * seg.steps) + ") does not match " +
                          std::to_string(steps) + " steps over " + std::to_string(T));
  }
  return evolve(system, state0, control, options);
}

TrajectoryRecord evolve(const ModalSystem& system, const SpectralState& state0,
                        const ControlSignal& control, const EvolveOptions& options) {
  check_state(system, state0);
  check_control(system, control);
  if (control.empty()) throw StructuralError("evolution needs at least one time segment");
  const Recorder recorder(system, options);
  TrajectoryRecord out;
  Eigen::MatrixXd coeff = state0.coeff;
  recorder.record(out, control.start(), coeff);
  std::optional<ModePropagator> prop;
  for (const auto& seg : control.segments()) {
    if (!prop || prop->step_size() != seg.h) prop.emplace(system, seg.h);
    run_segment(system, coeff, seg, *prop, recorder, options.record_every, out);
  }
  return out;
}

SpectralState evolve_final(const ModalSystem& system, const SpectralState& state0,
                           const ControlSignal& control) {
  check_state(system, state0);
  check_control(system, control);
  Eigen::MatrixXd coeff = state0.coeff;
  std::optional<ModePropagator> prop;
  for (const auto& seg : control.segments()) {
    if (!prop || prop->step_size() != seg.h) prop.emplace(system, seg.h);
    for (int k = 0; k < seg.steps; ++k) {
      if (seg.is_zero()) {
        prop->free_step(coeff);
      } else {
        prop->forced_step(coeff, forcing_rows(system, seg.values[static_cast<std::size_t>(k)]));
      }
    }
  }
  return {coeff};
}

double grid_l2_norm(const Eigen::MatrixXd& samples) {
  const Eigen::VectorXd w = simpson_weights(static_cast<int>(samples.rows()));
  return std::sqrt(std::max(0.0, w.dot(samples.rowwise().squaredNorm())));
}

FdTrajectory fd_oracle_evolve(const SystemSpec& spec, const Eigen::MatrixXd& samples0,
                              const ControlSignal& control, double T, int steps,
                              int record_every, double t0) {
  spec.check_dimensions();
  const int P = static_cast<int>(samples0.rows());
  if (P < 3) throw ConfigurationError("finite differences need at least three grid points");
  if (samples0.cols() != spec.n()) throw StructuralError("grid state has the wrong width");
  if (steps < 1 || !(T > 0.0)) throw ConfigurationError("FD oracle needs T > 0 and steps >= 1");
  const double dx = 1.0 / (P - 1);
  const double h = T / steps;
  const double dmax = spec.D.diagonal().maxCoeff();
  const double limit = dx * dx / (2.0 * dmax);
  if (h > limit * (1.0 + 1e-12)) {
    throw ConfigurationError("explicit step " + std::to_string(h) + " exceeds the stability limit " +
                             std::to_string(limit) + "; use at least " +
                             std::to_string(static_cast<long>(std::ceil(T / limit))) + " steps");
  }
  const bool controlled = !control.empty();
  if (controlled && control.channels() != spec.m()) {
    throw StructuralError("control channel count mismatch");
  }
  const Eigen::MatrixXd Dt = spec.D.transpose();
  const Eigen::MatrixXd At = spec.A.transpose();
  const Eigen::MatrixXd Bt = spec.B.transpose();
  auto rhs = [&](double t, const Eigen::MatrixXd& y) {
    Eigen::MatrixXd lap(P, y.cols());
    lap.row(0) = 2.0 * (y.row(1) - y.row(0));
    lap.row(P - 1) = 2.0 * (y.row(P - 2) - y.row(P - 1));
    lap.middleRows(1, P - 2) = y.topRows(P - 2) - 2.0 * y.middleRows(1, P - 2) + y.bottomRows(P - 2);
    Eigen::MatrixXd f = lap * Dt / (dx * dx) + y * At;
    if (controlled) f += control.field_at(t, spec.omega, P) * Bt;
    return f;
  };

  FdTrajectory out;
  out.x = uniform_grid(P);
  Eigen::MatrixXd y = samples0;
  out.times.push_back(t0);
  out.samples.push_back(y);
  for (int k = 0; k < steps; ++k) {
    const double t = t0 + k * h;
    const Eigen::MatrixXd k1 = rhs(t, y);
    const Eigen::MatrixXd k2 = rhs(t + h, y + h * k1);
    y += 0.5 * h * (k1 + k2);
    const bool last = k + 1 == steps;
    if (last || (record_every > 0 && (k + 1) % record_every == 0)) {
      out.times.push_back(last ? t0 + T : t0 + (k + 1) * h);
      out.samples.push_back(y);
    }
  }
  return out;
}

ConstraintReport monitor_constraint(const TrajectoryRecord& trajectory, double floor,
                                    double certify_tol) {
  ConstraintReport r;
  r.times = trajectory.times;
  r.minima = trajectory.minima;
  r.floor = floor;
  r.certify_tol = certify_tol;
  r.worst_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < r.minima.size(); ++i) {
    Eigen::Index c = 0;
    const double v = r.minima[i].minCoeff(&c);
    if (v < r.worst_min) {
      r.worst_min = v;
      r.worst_time = r.times[i];
      r.worst_component = static_cast<int>(c);
    }
    if (v < floor - certify_tol && !r.violated) {
      r.violated = true;
      r.first_violation_time = r.times[i];
    }
  }
  return r;
}

}  // namespace posctl
