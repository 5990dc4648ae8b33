#include "posctl/hum_control.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "posctl/errors.hpp"

namespace posctl {

namespace {

double smooth_step(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double f = std::exp(-1.0 / x);
  const double g = std::exp(-1.0 / (1.0 - x));
  return f / (f + g);
}

struct Nodes {
  std::vector<double> s;
  std::vector<double> w;
  // phi[k][p]: kernel acting on the control at node k
  std::vector<std::vector<Eigen::MatrixXd>> phi;
};

Nodes quadrature_nodes(const ModalSystem& system, int jc, double tau, int steps,
                       Quadrature quadrature) {
  Nodes nodes;
  const double h = tau / steps;
  if (quadrature == Quadrature::midpoint) {
    const ModePropagator prop(system, h);
    nodes.phi.resize(static_cast<std::size_t>(steps));
    std::vector<Eigen::MatrixXd> acc;
    for (int p = 0; p <= jc; ++p) acc.push_back(prop.source(p) / h);
    for (int k = steps - 1; k >= 0; --k) {
      nodes.phi[static_cast<std::size_t>(k)] = acc;
      for (int p = 0; p <= jc; ++p) {
        acc[static_cast<std::size_t>(p)] = prop.full(p) * acc[static_cast<std::size_t>(p)];
      }
    }
    for (int k = 0; k < steps; ++k) {
      nodes.s.push_back((k + 0.5) * h);
      nodes.w.push_back(h);
    }
  } else {
    const Eigen::VectorXd w = simpson_weights(steps + 1, 0.0, tau);
    for (int k = 0; k <= steps; ++k) {
      nodes.s.push_back(k * h);
      nodes.w.push_back(w(k));
      std::vector<Eigen::MatrixXd> row;
      for (int p = 0; p <= jc; ++p) row.push_back((system.mode_matrix(p) * (tau - k * h)).exp());
      nodes.phi.push_back(std::move(row));
    }
  }
  return nodes;
}

void check_level(const ModalSystem& system, int jc, double tau, int steps) {
  if (jc < 0 || jc > system.highest_mode()) {
    throw StructuralError("J_ctrl = " + std::to_string(jc) + " outside the state truncation 0.." +
                          std::to_string(system.highest_mode()));
  }
  if (!(tau > 0.0)) throw StructuralError("steering horizon must be positive");
  if (steps < 1) throw StructuralError("steering needs at least one time step");
}

Eigen::VectorXd jacobi_scale(const Eigen::MatrixXd& W) {
  Eigen::VectorXd d(W.rows());
  for (Eigen::Index i = 0; i < W.rows(); ++i) d(i) = W(i, i) > 0.0 ? 1.0 / std::sqrt(W(i, i)) : 1.0;
  return d;
}

GramianOperator assemble(const ModalSystem& system, int jc, double tau, int steps,
                         Quadrature quadrature, bool envelope, const Nodes& nodes) {
  const auto& phi = nodes.phi;
  const int n = system.n();
  const int size = (jc + 1) * n;
  GramianOperator g;
  g.W = Eigen::MatrixXd::Zero(size, size);
  g.tau = tau;
  g.control_highest_mode = jc;
  g.quad_steps = steps;
  g.quadrature = quadrature;
  g.envelope = envelope;
  const Eigen::MatrixXd& G = system.coupling;
  Eigen::MatrixXd F((jc + 1) * n, system.m());
  for (std::size_t k = 0; k < nodes.s.size(); ++k) {
    const double psi = envelope ? smooth_envelope(nodes.s[k] / tau) : 1.0;
    const double weight = nodes.w[k] * psi;
    if (weight == 0.0) continue;
    for (int p = 0; p <= jc; ++p) F.middleRows(p * n, n) = phi[k][static_cast<std::size_t>(p)] * system.B;
    for (int p = 0; p <= jc; ++p) {
      for (int q = 0; q <= jc; ++q) {
        g.W.block(p * n, q * n, n, n) +=
            (weight * G(p, q)) * F.middleRows(p * n, n) * F.middleRows(q * n, n).transpose();
      }
    }
  }
  g.W = 0.5 * (g.W + g.W.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g.W);
  g.min_eigenvalue = eig.eigenvalues()(0);
  g.min_eigenvector = eig.eigenvectors().col(0);
  g.near_uncontrollable = g.min_eigenvalue < kGramianFloor;
  const Eigen::VectorXd d = jacobi_scale(g.W);
  g.scaled_min_eigenvalue =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(d.asDiagonal() * g.W * d.asDiagonal(),
                                                     Eigen::EigenvaluesOnly)
          .eigenvalues()(0);
  return g;
}

std::string describe_direction(const GramianOperator& g, int n) {
  std::ostringstream os;
  os << "Gramian smallest eigenvalue " << g.min_eigenvalue << " (scaled "
     << g.scaled_min_eigenvalue << ") below floor; direction";
  Eigen::Index idx = 0;
  g.min_eigenvector.cwiseAbs().maxCoeff(&idx);
  os << " concentrated on mode " << idx / n << ", component " << idx % n;
  return os.str();
}

}  // namespace

double smooth_envelope(double r) {
  if (r <= 0.0 || r >= 1.0) return 0.0;
  return std::min(smooth_step(4.0 * r), smooth_step(4.0 * (1.0 - r)));
}

GramianOperator build_gramian(const ModalSystem& system, int control_highest_mode, double tau,
                              int quad_steps, Quadrature quadrature, bool envelope) {
  check_level(system, control_highest_mode, tau, quad_steps);
  const Nodes nodes = quadrature_nodes(system, control_highest_mode, tau, quad_steps, quadrature);
  return assemble(system, control_highest_mode, tau, quad_steps, quadrature, envelope, nodes);
}

HumSteerer::HumSteerer(const ModalSystem& system, double tau, const SteerOptions& options)
    : system_(system), tau_(tau), options_(options) {
  const int jc = options.control_highest_mode;
  check_level(system, jc, tau, options.steps);
  Nodes nodes = quadrature_nodes(system, jc, tau, options.steps, Quadrature::midpoint);
  gramian_ = assemble(system, jc, tau, options.steps, Quadrature::midpoint, options.envelope, nodes);
  phi_ = std::move(nodes.phi);
  for (double s : nodes.s) psi_.push_back(options.envelope ? smooth_envelope(s / tau) : 1.0);
  for (int p = 0; p <= jc; ++p) exp_tau_.push_back((system.mode_matrix(p) * tau).exp());
  scale_ = jacobi_scale(gramian_.W);
  if (gramian_.scaled_min_eigenvalue >= options.gramian_floor) {
    factor_.compute(scale_.asDiagonal() * gramian_.W * scale_.asDiagonal());
  }
}

ControlSignal HumSteerer::control_for_defect(const Eigen::VectorXd& defect, double t0) const {
  const int n = system_.n();
  const int jc = options_.control_highest_mode;
  if (defect.size() != (jc + 1) * n) throw StructuralError("defect has the wrong length");
  if (gramian_.scaled_min_eigenvalue < options_.gramian_floor) {
    throw ControllabilityError(describe_direction(gramian_, n));
  }
  const Eigen::VectorXd mult = scale_.cwiseProduct(factor_.solve(scale_.cwiseProduct(defect)));
  const int steps = options_.steps;
  ControlSegment seg{t0, tau_ / steps, steps, {}};
  seg.values.reserve(static_cast<std::size_t>(steps));
  Eigen::MatrixXd V(jc + 1, n);
  for (int k = 0; k < steps; ++k) {
    const auto& phik = phi_[static_cast<std::size_t>(k)];
    for (int p = 0; p <= jc; ++p) {
      V.row(p) = (phik[static_cast<std::size_t>(p)].transpose() * mult.segment(p * n, n)).transpose();
    }
    seg.values.push_back(psi_[static_cast<std::size_t>(k)] * V * system_.B);
  }
  ControlSignal control(jc + 1, system_.m());
  control.append(std::move(seg));
  return control;
}

SteerResult HumSteerer::steer(const SpectralState& state0, const SpectralState& target,
                              double t0) const {
  const int n = system_.n();
  const int jc = options_.control_highest_mode;
  if (state0.coeff.rows() != system_.mode_count() || target.coeff.rows() != system_.mode_count() ||
      state0.components() != n || target.components() != n) {
    throw StructuralError("steering states do not match the system truncation");
  }
  Eigen::VectorXd defect((jc + 1) * n);
  for (int p = 0; p <= jc; ++p) {
    defect.segment(p * n, n) = target.coeff.row(p).transpose() -
                               exp_tau_[static_cast<std::size_t>(p)] * state0.coeff.row(p).transpose();
  }
  SteerResult r;
  r.control = control_for_defect(defect, t0);
  r.final_state = evolve_final(system_, state0, r.control);
  const Eigen::MatrixXd miss = target.coeff - r.final_state.coeff;
  r.cost.tau = tau_;
  r.cost.control_norm = r.control.l2_norm(system_.coupling);
  r.cost.defect_norm = defect.norm();
  r.cost.ratio = r.cost.defect_norm > 0.0 ? r.cost.control_norm / r.cost.defect_norm : 0.0;
  r.cost.endpoint_defect = miss.topRows(jc + 1).norm();
  r.cost.tail_norm = miss.bottomRows(miss.rows() - jc - 1).norm();
  r.cost.gramian_min_eigenvalue = gramian_.min_eigenvalue;
  return r;
}

SteerResult steer(const ModalSystem& system, const SpectralState& state0,
                  const SpectralState& target, double t0, double tau, const SteerOptions& options) {
  return HumSteerer(system, tau, options).steer(state0, target, t0);
}

CostSweep cost_sweep(const ModalSystem& system, const SpectralState& state0,
                     const SpectralState& target_seed, const std::vector<double>& taus,
                     const SteerOptions& options) {
  CostSweep sweep;
  for (double tau : taus) {
    const SpectralState target = propagate_free(system, target_seed, tau);
    sweep.reports.push_back(HumSteerer(system, tau, options).steer(state0, target, 0.0).cost);
  }
  const std::size_t k = sweep.reports.size();
  sweep.strictly_decreasing = k > 0;
  for (std::size_t i = 1; i < k; ++i) {
    const bool later = taus[i] > taus[i - 1];
    const double a = sweep.reports[i - 1].control_norm;
    const double b = sweep.reports[i].control_norm;
    if (later ? !(b < a) : !(b > a)) sweep.strictly_decreasing = false;
  }
  if (k >= 2) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(k), 2);
    Eigen::VectorXd y(static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i) {
      X(static_cast<Eigen::Index>(i), 0) = 1.0 / taus[i];
      X(static_cast<Eigen::Index>(i), 1) = 1.0;
      y(static_cast<Eigen::Index>(i)) = std::log(sweep.reports[i].control_norm);
    }
    sweep.slope = X.colPivHouseholderQr().solve(y)(0);
    for (auto& r : sweep.reports) r.blowup_slope = sweep.slope;
  }
  return sweep;
}

LrResult lr_steer(const ModalSystem& system, const SpectralState& state0,
                  const SpectralState& target_seed, double t0, double total_T, int stage_count,
                  const LrOptions& options) {
  if (stage_count < 1) throw StructuralError("lr_steer needs at least one stage");
  if (!(total_T > 0.0)) throw StructuralError("lr_steer needs a positive horizon");
  const int half_steps = std::max(1, options.steps_per_stage / 2);
  const double stage = total_T / stage_count;
  LrResult out;
  int top = 0;
  for (int j = 0; j < stage_count; ++j) {
    const long want = static_cast<long>(options.min_control_mode) << std::min(j, 30);
    out.stage_modes.push_back(static_cast<int>(std::min<long>(want, system.highest_mode())));
    top = std::max(top, out.stage_modes.back());
  }
  ControlSignal control(top + 1, system.m());
  SpectralState state = state0;
  for (int j = 0; j < stage_count; ++j) {
    const double start = t0 + j * stage;
    SteerOptions so;
    so.control_highest_mode = out.stage_modes[static_cast<std::size_t>(j)];
    so.steps = half_steps;
    so.envelope = options.envelope;
    const SpectralState target = propagate_free(system, target_seed, start + 0.5 * stage - t0);
    const SteerResult r = HumSteerer(system, 0.5 * stage, so).steer(state, target, start);
    control.append(r.control.with_control_modes(top + 1));
    control.append(ControlSignal::zero(start + 0.5 * stage, 0.5 * stage, half_steps, top + 1,
                                       system.m()));
    state = propagate_free(system, r.final_state, 0.5 * stage);
  }
  const SpectralState final_target = propagate_free(system, target_seed, total_T);
  out.control = std::move(control);
  out.control_norm = out.control.l2_norm(system.coupling);
  out.final_state = state;
  out.terminal_defect = (state - final_target).l2_norm();

  SteerOptions plain;
  plain.control_highest_mode = top;
  plain.steps = half_steps * 2 * stage_count;
  plain.envelope = options.envelope;
  const SteerResult p = HumSteerer(system, total_T, plain).steer(state0, final_target, t0);
  out.plain_control_norm = p.cost.control_norm;
  out.plain_terminal_defect = (p.final_state - final_target).l2_norm();
  return out;
}

}  // namespace posctl
