#include "posctl/staircase.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include <unsupported/Eigen/MatrixFunctions>

#include "posctl/errors.hpp"
#include "posctl/system_model.hpp"

namespace posctl {

namespace {

int controlled_steps(const StaircaseOptions& o) {
  if (!(o.control_fraction > 0.0 && o.control_fraction <= 1.0)) {
    throw ConfigurationError("control_fraction must lie in (0, 1]");
  }
  if (o.steps_per_tau < 2) throw ConfigurationError("steps_per_tau must be at least 2");
  return std::clamp(static_cast<int>(std::lround(o.control_fraction * o.steps_per_tau)), 1,
                    o.steps_per_tau);
}

SteerOptions steer_options(const StaircaseOptions& o) {
  SteerOptions s;
  s.control_highest_mode = o.control_highest_mode;
  s.steps = controlled_steps(o);
  s.envelope = o.envelope;
  return s;
}

double control_time(const StaircaseOptions& o, double tau) {
  return tau * controlled_steps(o) / o.steps_per_tau;
}

void check_state_shape(const SpectralState& s, int modes, int n, const char* name) {
  if (s.highest_mode() != modes || s.components() != n) {
    throw StructuralError(std::string(name) + " must have " + std::to_string(modes + 1) +
                          " modes and " + std::to_string(n) + " components");
  }
}

void check_nonnegative(const SpectralState& s, const char* name, const StaircaseOptions& o) {
  const Eigen::VectorXd m = min_on_grid(s, o.grid_points);
  if (m.minCoeff() < -o.certify_tol) {
    throw HypothesisError(std::string(name) + " must be nonnegative; grid minimum " +
                          std::to_string(m.minCoeff()));
  }
}

/// One staircase step: steer during the controlled fraction of tau so the
/// state meets `target` (the value of the next reference at the match
/// time), then let it evolve freely for the rest of tau.
struct StepOutcome {
  ControlSignal control;
  SpectralState final_state;
  double defect = 0.0;
};

StepOutcome plan_step(const ModalSystem& sys, const HumSteerer& st, const StaircaseOptions& o,
                      double tau, const SpectralState& state, const SpectralState& target,
                      double t0) {
  const SteerResult r = st.steer(state, target, t0);
  StepOutcome out;
  out.control = r.control;
  out.defect = r.cost.defect_norm;
  const int free_steps = o.steps_per_tau - controlled_steps(o);
  if (free_steps > 0) {
    const double tc = control_time(o, tau);
    out.control.append(ControlSignal::zero(t0 + tc, tau - tc, free_steps,
                                           r.control.control_modes(), sys.m()));
    out.final_state = propagate_free(sys, r.final_state, tau - tc);
  } else {
    out.final_state = r.final_state;
  }
  return out;
}

double grid_sup(const GridEvaluator& ev, const SpectralState& s) {
  return ev.values(s).cwiseAbs().maxCoeff();
}

Eigen::MatrixXd expm(const Eigen::MatrixXd& A, double t) { return (A * t).exp(); }

// Row-wise change of variables: coefficients of e^{tA} applied to a field.
SpectralState apply_matrix(const SpectralState& s, const Eigen::MatrixXd& E) {
  return {s.coeff * E.transpose()};
}

double step_tracking(const TrajectoryRecord& rec, const std::function<SpectralState(double)>& ref) {
  double worst = 0.0;
  for (std::size_t i = 0; i < rec.times.size(); ++i) {
    worst = std::max(worst, (rec.states[i] - ref(rec.times[i])).l2_norm());
  }
  return worst;
}

double record_min(const TrajectoryRecord& rec) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& v : rec.minima) m = std::min(m, v.minCoeff());
  return m;
}

StaircaseStatus classify(const ConstraintReport& c, double terminal, double accept_tol) {
  if (c.violated) return StaircaseStatus::constraint_violated;
  if (!(terminal <= accept_tol)) return StaircaseStatus::terminal_mismatch;
  return StaircaseStatus::success;
}

// First time on a grid of step tau/10 where both heat-smoothed fields are
// within delta of their means in sup norm.
double find_wait(const SpectralState& a, const SpectralState& b, double c, double delta,
                 double tau, double cap, const GridEvaluator& ev) {
  const NeumannBasis basis(a.highest_mode());
  const Eigen::VectorXd lam = basis.eigenvalues();
  const double dt = tau / 10.0;
  for (double t = 0.0; t <= cap + 1e-12; t += dt) {
    bool ok = true;
    for (const SpectralState* s : {&a, &b}) {
      SpectralState dev = *s;
      dev.coeff.row(0).setZero();
      for (int p = 1; p <= dev.highest_mode(); ++p) dev.coeff.row(p) *= std::exp(-c * lam(p) * t);
      if (grid_sup(ev, dev) > delta) ok = false;
    }
    if (ok) return t;
  }
  std::ostringstream os;
  os << "free trajectories do not come within " << delta << " of their means before t = " << cap;
  throw PlanningError(os.str());
}

}  // namespace

std::string to_string(StaircaseVariant v) {
  return v == StaircaseVariant::identity_diffusion ? "identity_diffusion" : "general_diagonal";
}

std::string to_string(FloorMode f) {
  switch (f) {
    case FloorMode::approximate: return "approximate";
    case FloorMode::zeta_shifted: return "zeta_shifted";
    case FloorMode::exact: return "exact";
  }
  return "unknown";
}

std::string to_string(StaircaseStatus s) {
  switch (s) {
    case StaircaseStatus::success: return "success";
    case StaircaseStatus::constraint_violated: return "constraint_violated";
    case StaircaseStatus::terminal_mismatch: return "terminal_mismatch";
    case StaircaseStatus::obstructed: return "obstructed";
  }
  return "unknown";
}

double StaircasePlan::total_time() const {
  return variant == StaircaseVariant::identity_diffusion ? T0 + (N + 2) * tau : N * tau;
}

StaircasePlan plan_identity(const SystemSpec& spec, const SpectralState& y0,
                            const SpectralState& yf0, double tau, double convergence_tol,
                            const StaircaseOptions& options) {
  const StructureReport rep = validate_structure(spec);
  if (!rep.is_scalar_D || !rep.is_elliptic) {
    throw HypothesisError("identity staircase needs D = c I with c > 0");
  }
  if (!rep.is_quasipositive_A) throw HypothesisError("identity staircase needs quasipositive A");
  if (!rep.eigenvalues_nonneg_real) {
    throw HypothesisError("identity staircase needs eigenvalues of A with nonnegative real part");
  }
  if (!kalman_condition_all_modes(spec, 1).all_modes_certified) {
    throw HypothesisError("rank [A | B] < n: the reduced Kalman test fails");
  }
  if (!(tau > 0.0)) throw ConfigurationError("tau must be positive");
  if (!(convergence_tol > 0.0)) throw ConfigurationError("convergence_tol must be positive");
  const int J = options.modes;
  const int n = spec.n();
  check_state_shape(y0, J, n, "y0");
  check_state_shape(yf0, J, n, "yf0");
  check_nonnegative(y0, "y0", options);
  check_nonnegative(yf0, "yf0", options);

  StaircasePlan plan;
  plan.variant = StaircaseVariant::identity_diffusion;
  plan.tau = tau;
  plan.options = options;
  plan.floor_mode = FloorMode::exact;
  plan.floor = 0.0;
  const Eigen::VectorXd zbar = y0.mean();
  const Eigen::VectorXd zf = yf0.mean();
  for (int i = 0; i < n; ++i) {
    if (zbar(i) < options.zero_component_tol || zf(i) < options.zero_component_tol) {
      throw HypothesisError("component " + std::to_string(i) +
                            " of the initial or target data is identically zero");
    }
  }
  plan.zeta = std::min(zbar.minCoeff(), zf.minCoeff());
  plan.M = std::max({1.0, zbar.maxCoeff(), zf.maxCoeff()});

  const ModalSystem sys = ModalSystem::neumann(spec, J);
  const double c = spec.D(0, 0);
  const double tc = control_time(options, tau);
  const HumSteerer st(sys, tc, steer_options(options));
  const GridEvaluator ev(J, options.grid_points);
  Eigen::VectorXd dir = zf - zbar;
  if (dir.norm() < 1e-12) dir = Eigen::VectorXd::Ones(n);
  dir /= dir.norm();

  // Deviation in Z per unit L2 step, for a step starting at time t.
  auto calibrate = [&](double t) {
    const SpectralState target = SpectralState::constant(J, expm(spec.A, t + tc) * dir);
    const StepOutcome s = plan_step(sys, st, options, tau, SpectralState::zero(J, n), target, t);
    const TrajectoryRecord rec = evolve(sys, SpectralState::zero(J, n), s.control);
    double worst = 0.0;
    for (std::size_t i = 0; i < rec.times.size(); ++i) {
      worst = std::max(worst, grid_sup(ev, apply_matrix(rec.states[i], expm(spec.A, -rec.times[i]))));
    }
    return options.safety_factor * worst;
  };

  // The Z deviation per unit step can grow with the start time when e^{-tA}
  // is unbounded, so C is recalibrated at the end of the planned horizon
  // until the plan is self-consistent.
  const double step_size = (zf - zbar).norm();
  double C = calibrate(0.0);
  bool settled = false;
  for (int iter = 0; iter < 25 && !settled; ++iter) {
    // half the budget keeps the proof bound zeta - C delta strictly positive
    plan.delta = std::min(0.5 * plan.zeta / C, convergence_tol);
    plan.T0 = find_wait(y0, yf0, c, plan.delta, tau, options.wait_cap, ev);
    plan.N = std::max(1, static_cast<int>(std::ceil(step_size / plan.delta - 1e-12)));
    plan.capped = plan.N > options.max_steps;
    if (plan.capped) plan.N = options.max_steps;
    const double later = std::max(calibrate(plan.T0), calibrate(plan.T0 + (plan.N + 1) * tau));
    settled = later <= C * (1.0 + 1e-9);
    C = std::max(C, later);
  }
  plan.C_tau = C;
  // C is calibrated on the planned horizon, so the bound is checked with it
  // even when the iteration has not settled
  const double increment = step_size / plan.N;
  plan.certifiable = !plan.capped && plan.zeta - C * std::max(plan.delta, increment) > 0.0;

  double bound = 0.0;
  for (const SpectralState* s : {&y0, &yf0}) {
    for (int p = 1; p <= J; ++p) bound += std::sqrt(2.0) * s->coeff.row(p).cwiseAbs().maxCoeff();
  }
  plan.T0_gap_estimate =
      bound > plan.delta ? std::log(bound / plan.delta) / (c * NeumannBasis::eigenvalue(1)) : 0.0;

  for (int k = 0; k <= plan.N; ++k) {
    const double w = static_cast<double>(k) / plan.N;
    plan.constant_targets.push_back((1.0 - w) * zbar + w * zf);
  }
  if (plan.capped) {
    plan.note = "step count capped at max_steps; the a priori bound does not hold";
  } else if (!plan.certifiable) {
    plan.note = "deviation constant kept growing with the horizon; the a priori bound does not hold";
  }
  return plan;
}

StaircaseResult run_identity(const SystemSpec& spec, const StaircasePlan& plan,
                             const SpectralState& y0, const SpectralState& yf0) {
  if (plan.variant != StaircaseVariant::identity_diffusion) {
    throw ConfigurationError("run_identity needs an identity_diffusion plan");
  }
  const StaircaseOptions& o = plan.options;
  const int J = o.modes;
  const int n = spec.n();
  check_state_shape(y0, J, n, "y0");
  check_state_shape(yf0, J, n, "yf0");
  const ModalSystem sys = ModalSystem::neumann(spec, J);
  const double tau = plan.tau;
  const double tc = control_time(o, tau);
  const HumSteerer st(sys, tc, steer_options(o));
  EvolveOptions eo;
  eo.grid_points = o.grid_points;
  const GridEvaluator ev(J, o.grid_points);
  const int cm = o.control_highest_mode + 1;

  StaircaseResult res;
  res.control = ControlSignal(cm, sys.m());
  SpectralState state = y0;
  double t = 0.0;
  if (plan.T0 > 0.0) {
    const int steps = std::max(1, static_cast<int>(std::ceil(plan.T0 / tau * o.steps_per_tau)));
    const ControlSignal wait = ControlSignal::zero(0.0, plan.T0, steps, cm, sys.m());
    res.trajectory = evolve(sys, y0, wait, eo);
    res.control.append(wait);
    state = res.trajectory.final_state();
    StepDiagnostics d;
    d.index = 0;
    d.phase = "wait";
    d.t_end = plan.T0;
    d.min_state = record_min(res.trajectory);
    res.steps.push_back(d);
    t = plan.T0;
  } else {
    res.trajectory = free_evolve(sys, y0, tau, 1, eo);
    res.trajectory.times.resize(1);
    res.trajectory.states.resize(1);
    res.trajectory.minima.resize(1);
    res.trajectory.l2_norms.resize(1);
  }

  auto constant_path = [&](const Eigen::VectorXd& z) {
    return [&spec, J, z](double time) { return SpectralState::constant(J, expm(spec.A, time) * z); };
  };
  const auto target_free = [&](double time) { return propagate_free(sys, yf0, time); };
  const std::size_t first_step_record = res.trajectory.times.size() - 1;

  const int total = plan.N + 2;
  for (int k = 0; k < total; ++k) {
    std::function<SpectralState(double)> reference;
    std::function<SpectralState(double)> next;
    std::string phase;
    if (k == 0) {
      phase = "V";
      reference = constant_path(plan.constant_targets.front());
      next = reference;
    } else if (k <= plan.N) {
      phase = "U";
      reference = constant_path(plan.constant_targets[static_cast<std::size_t>(k - 1)]);
      next = constant_path(plan.constant_targets[static_cast<std::size_t>(k)]);
    } else {
      phase = "W";
      reference = constant_path(plan.constant_targets.back());
      next = target_free;
    }
    const StepOutcome s = plan_step(sys, st, o, tau, state, next(t + tc), t);
    const TrajectoryRecord rec = evolve(sys, state, s.control, eo);
    StepDiagnostics d;
    d.index = k + 1;
    d.phase = phase;
    d.t_start = t;
    d.t_end = t + tau;
    d.defect = s.defect;
    d.control_norm = s.control.l2_norm(sys.coupling);
    d.min_state = record_min(rec);
    d.tracking = step_tracking(rec, reference);
    res.steps.push_back(d);
    res.trajectory.append(rec);
    res.control.append(s.control);
    state = rec.final_state();
    t += tau;
  }

  double min_z = std::numeric_limits<double>::infinity();
  for (std::size_t i = first_step_record; i < res.trajectory.times.size(); ++i) {
    const double ti = res.trajectory.times[i];
    min_z = std::min(min_z, ev.minima(apply_matrix(res.trajectory.states[i], expm(spec.A, -ti))).minCoeff());
  }
  res.min_z = min_z;
  const double increment = (plan.constant_targets.back() - plan.constant_targets.front()).norm() / plan.N;
  res.z_bound = plan.zeta - plan.C_tau * std::max(plan.delta, increment);
  res.terminal_error = (state - target_free(t)).l2_norm();
  res.constraint = monitor_constraint(res.trajectory, 0.0, o.certify_tol);
  res.min_state = res.constraint.worst_min;
  res.status = classify(res.constraint, res.terminal_error, o.accept_tol);
  std::ostringstream os;
  os << "identity staircase: T0 = " << plan.T0 << ", N = " << plan.N << ", T = " << t
     << ", terminal error " << res.terminal_error << ", min Y " << res.min_state << ", min Z "
     << min_z;
  res.message = os.str();
  return res;
}

StaircasePlan plan_general(const SystemSpec& spec, const SpectralState& y0,
                           const SpectralState& yf0, double tau, double epsilon,
                           const StaircaseOptions& options) {
  const StructureReport rep = validate_structure(spec);
  if (!rep.is_elliptic) throw HypothesisError("diffusion matrix is not elliptic");
  if (!rep.is_diagonal_D) throw HypothesisError("general staircase needs diagonal D");
  if (!rep.is_quasipositive_A) throw HypothesisError("general staircase needs quasipositive A");
  const KalmanVerdict kv = kalman_condition_all_modes(spec, options.modes);
  if (!kv.satisfied_up_to_p_max) {
    throw HypothesisError("Kalman condition fails at mode " + std::to_string(*kv.failed_at));
  }
  if (!(tau > 0.0)) throw ConfigurationError("tau must be positive");
  if (!(epsilon > 0.0)) throw ConfigurationError("epsilon must be positive");
  const int J = options.modes;
  const int n = spec.n();
  check_state_shape(y0, J, n, "y0");
  check_state_shape(yf0, J, n, "yf0");
  check_nonnegative(y0, "y0", options);
  check_nonnegative(yf0, "yf0", options);

  StaircasePlan plan;
  plan.variant = StaircaseVariant::general_diagonal;
  plan.tau = tau;
  plan.epsilon = epsilon;
  plan.options = options;
  plan.floor_mode = options.floor_mode;
  plan.lambda_shift = std::max(0.0, rep.max_symmetric_A) + options.shift_margin;

  const ModalSystem sys = ModalSystem::neumann(spec, J);
  const ModalSystem hat = sys.shifted(plan.lambda_shift);
  const GridEvaluator ev(J, options.grid_points);

  // lower bound of the two free trajectories over a finite horizon
  {
    double zeta = std::numeric_limits<double>::infinity();
    const double dt = tau / 4.0;
    const ModePropagator prop(sys, dt);
    Eigen::MatrixXd a = y0.coeff, b = yf0.coeff;
    for (double t = 0.0; t <= options.zeta_horizon + 1e-12; t += dt) {
      zeta = std::min({zeta, ev.minima({a}).minCoeff(), ev.minima({b}).minCoeff()});
      prop.free_step(a);
      prop.free_step(b);
    }
    plan.zeta = zeta;
  }

  plan.M = std::max({1.0, y0.l2_norm(), yf0.l2_norm()});
  const double tc = control_time(options, tau);
  const HumSteerer st(hat, tc, steer_options(options));
  SpectralState dir = yf0 - y0;
  if (dir.l2_norm() < 1e-12) dir = SpectralState::constant(J, Eigen::VectorXd::Ones(n));
  dir = dir * (1.0 / dir.l2_norm());
  {
    const StepOutcome s =
        plan_step(hat, st, options, tau, SpectralState::zero(J, n), propagate_free(hat, dir, tc), 0.0);
    const TrajectoryRecord rec = evolve(hat, SpectralState::zero(J, n), s.control);
    double worst = 0.0;
    for (std::size_t i = 0; i < rec.times.size(); ++i) {
      worst = std::max(worst, std::exp(plan.lambda_shift * rec.times[i]) * grid_sup(ev, rec.states[i]));
    }
    plan.C_tau = options.safety_factor * worst;
  }

  double budget = epsilon;
  switch (options.floor_mode) {
    case FloorMode::approximate:
      plan.floor = -epsilon;
      break;
    case FloorMode::zeta_shifted:
      plan.floor = plan.zeta - epsilon;
      break;
    case FloorMode::exact:
      plan.floor = 0.0;
      budget = plan.zeta;
      break;
  }
  if (!(budget > options.certify_tol)) {
    plan.certifiable = false;
    plan.delta = 0.0;
    plan.N = 1;
    plan.note = "reference trajectories have no positive lower bound; an exact floor cannot be certified";
    return plan;
  }
  plan.delta = budget / (plan.M * plan.C_tau);
  const double dist = (y0 - yf0).l2_norm();
  plan.N = std::max(1, static_cast<int>(std::ceil(dist / plan.delta - 1e-12)));
  if (plan.N > options.max_steps) {
    plan.N = options.max_steps;
    plan.capped = true;
    plan.note = "step count capped at max_steps; the a priori bound does not hold";
  }
  return plan;
}

StaircaseResult run_general(const SystemSpec& spec, const StaircasePlan& plan,
                            const SpectralState& y0, const SpectralState& yf0) {
  if (plan.variant != StaircaseVariant::general_diagonal) {
    throw ConfigurationError("run_general needs a general_diagonal plan");
  }
  const StaircaseOptions& o = plan.options;
  const int J = o.modes;
  const int n = spec.n();
  check_state_shape(y0, J, n, "y0");
  check_state_shape(yf0, J, n, "yf0");
  StaircaseResult res;

  if (plan.floor >= 0.0 && matches_mass_pattern(spec)) {
    const MassObstruction mo = mass_obstruction(spec, y0, yf0, plan.total_time());
    res.obstruction = mo;
    if (mo.verdict == ObstructionVerdict::obstructed) {
      res.status = StaircaseStatus::obstructed;
      std::ostringstream os;
      os << "exact nonnegativity is impossible: controlled mean of y1 stays >= "
         << mo.controlled_lower << " while the target's stays <= " << mo.target_upper;
      res.message = os.str();
      return res;
    }
  }

  const ModalSystem sys = ModalSystem::neumann(spec, J);
  const double lam = plan.lambda_shift;
  const ModalSystem hat = sys.shifted(lam);
  const double tau = plan.tau;
  const double tc = control_time(o, tau);
  const HumSteerer st(hat, tc, steer_options(o));
  EvolveOptions eo;
  eo.grid_points = o.grid_points;
  const int cm = o.control_highest_mode + 1;
  const int N = plan.N;

  // free trajectories from y0 and yf0 in rescaled variables, at step starts
  const ModePropagator to_match(hat, tc);
  const ModePropagator to_end(hat, tau);
  Eigen::MatrixXd a = y0.coeff, b = yf0.coeff;

  res.control = ControlSignal(cm, sys.m());
  SpectralState state = y0;  // original variables
  res.trajectory = free_evolve(sys, y0, tau, 1, eo);
  res.trajectory.times.resize(1);
  res.trajectory.states.resize(1);
  res.trajectory.minima.resize(1);
  res.trajectory.l2_norms.resize(1);
  double gap = 0.0;
  for (int k = 0; k < N; ++k) {
    const double t = k * tau;
    const double w0 = static_cast<double>(k) / N;
    const double w1 = static_cast<double>(k + 1) / N;
    Eigen::MatrixXd am = a, bm = b;
    to_match.free_step(am);
    to_match.free_step(bm);
    const SpectralState target{(1.0 - w1) * am + w1 * bm};
    const SpectralState hat_state = state * std::exp(-lam * t);
    const StepOutcome s = plan_step(hat, st, o, tau, hat_state, target, t);

    ControlSignal c = s.control;
    c.scale_by([lam](double time) { return std::exp(lam * time); });
    const TrajectoryRecord rec = evolve(sys, state, c, eo);

    const Eigen::MatrixXd a_start = a, b_start = b;
    const auto reference = [&](double time) {
      const ModalSystem& h = hat;
      const SpectralState ya = propagate_free(h, {a_start}, time - t);
      const SpectralState yb = propagate_free(h, {b_start}, time - t);
      return SpectralState{((1.0 - w0) * ya.coeff + w0 * yb.coeff) * std::exp(lam * time)};
    };
    StepDiagnostics d;
    d.index = k + 1;
    d.phase = "step";
    d.t_start = t;
    d.t_end = t + tau;
    d.defect = s.defect;
    d.control_norm = c.l2_norm(sys.coupling);
    d.min_state = record_min(rec);
    d.tracking = step_tracking(rec, reference);
    res.steps.push_back(d);
    res.trajectory.append(rec);
    res.control.append(c);
    state = rec.final_state();
    gap = std::max(gap, (state - s.final_state * std::exp(lam * (t + tau))).l2_norm());
    to_end.free_step(a);
    to_end.free_step(b);
  }
  const double T = N * tau;
  res.rescaling_gap = gap;
  res.terminal_error = (state - propagate_free(sys, yf0, T)).l2_norm();
  res.constraint = monitor_constraint(res.trajectory, plan.floor, o.certify_tol);
  res.min_state = res.constraint.worst_min;
  res.status = classify(res.constraint, res.terminal_error, o.accept_tol);
  std::ostringstream os;
  os << "general staircase: lambda_shift = " << lam << ", N = " << N << ", T = " << T
     << ", terminal error " << res.terminal_error << ", min state " << res.min_state
     << " (floor " << plan.floor << ")";
  res.message = os.str();
  return res;
}

}  // namespace posctl
