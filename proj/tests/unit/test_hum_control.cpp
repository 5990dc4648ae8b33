#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "posctl/errors.hpp"
#include "posctl/hum_control.hpp"

using namespace posctl;

namespace {

SystemSpec remark2(Interval omega = {0.3, 0.8}) {
  SystemSpec s;
  s.D = Eigen::MatrixXd::Identity(2, 2);
  s.A.resize(2, 2);
  s.A << 0, 1, 0, -1;
  s.B.resize(2, 1);
  s.B << 0, 1;
  s.omega = omega;
  return s;
}

SystemSpec scalar_heat(Interval omega) {
  SystemSpec s;
  s.D = Eigen::MatrixXd::Ones(1, 1);
  s.A = Eigen::MatrixXd::Zero(1, 1);
  s.B = Eigen::MatrixXd::Ones(1, 1);
  s.omega = omega;
  return s;
}

ModalSystem single_mode() {
  ModalSystem m;
  m.D = Eigen::MatrixXd::Ones(1, 1);
  m.A = Eigen::MatrixXd::Zero(1, 1);
  m.B = Eigen::MatrixXd::Ones(1, 1);
  m.eigenvalues = Eigen::VectorXd::Ones(1);
  m.coupling = Eigen::MatrixXd::Ones(1, 1);
  return m;
}

Eigen::Vector2d vec2(double a, double b) { return {a, b}; }

}  // namespace

TEST_CASE("scalar gramian closed form") {
  const auto g = build_gramian(single_mode(), 0, 1.0, 200);
  CHECK(std::abs(g.W(0, 0) - (1.0 - std::exp(-2.0)) / 2.0) < 1e-9);
  CHECK(g.W(0, 0) == doctest::Approx(0.43233).epsilon(1e-5));
  CHECK_FALSE(g.near_uncontrollable);
  const auto gm = build_gramian(single_mode(), 0, 1.0, 2000, Quadrature::midpoint);
  CHECK(std::abs(gm.W(0, 0) - (1.0 - std::exp(-2.0)) / 2.0) < 1e-7);
}

TEST_CASE("zero control matrix gives a zero gramian and a warning") {
  SystemSpec s = remark2();
  s.B.setZero();
  const auto sys = ModalSystem::neumann(s, 8);
  const auto g = build_gramian(sys, 4, 0.5, 100);
  CHECK(g.W.norm() == 0.0);
  CHECK(g.near_uncontrollable);
  CHECK(g.min_eigenvector.size() == 10);
  CHECK_THROWS_AS(steer(sys, SpectralState::zero(8, 2), SpectralState::constant(8, vec2(1, 1)), 0.0, 0.5),
                  ControllabilityError);
}

TEST_CASE("example system gramian is positive definite") {
  const auto sys = ModalSystem::neumann(remark2(), 8);
  const auto g = build_gramian(sys, 4, 0.5, 200);
  CHECK(g.min_eigenvalue > 0.0);
  CHECK_FALSE(g.near_uncontrollable);
  CHECK((g.W - g.W.transpose()).norm() == 0.0);
}

TEST_CASE("steering onto the free trajectory needs no control") {
  const auto sys = ModalSystem::neumann(remark2(), 32);
  std::mt19937 rng(1);
  SpectralState y{oracle::random_nonneg_coeff(rng, 33, 2, 6)};
  const auto r = steer(sys, y, propagate_free(sys, y, 0.5), 0.0, 0.5);
  CHECK(r.cost.control_norm < 1e-8);
}

TEST_CASE("scalar minimal-norm control closed form") {
  SteerOptions o;
  o.control_highest_mode = 0;
  o.steps = 4000;
  const auto r = steer(single_mode(), SpectralState::constant(0, Eigen::VectorXd::Ones(1)),
                       SpectralState::zero(0, 1), 0.0, 1.0, o);
  const double exact = std::exp(-2.0) / ((1.0 - std::exp(-2.0)) / 2.0);
  CHECK(std::abs(r.cost.control_norm * r.cost.control_norm - exact) < 1e-6);
  CHECK(exact == doctest::Approx(0.313035).epsilon(1e-6));
  CHECK(std::abs(r.final_state.coeff(0, 0)) <= 1e-8);
}

TEST_CASE("example system steer matches controlled modes") {
  const auto sys = ModalSystem::neumann(remark2(), 32);
  const auto y0 = SpectralState::constant(32, vec2(1, 1));
  const auto target = propagate_free(sys, SpectralState::constant(32, vec2(2, 1)), 0.5);
  SteerOptions o;
  o.control_highest_mode = 8;
  o.steps = 200;
  const auto r = steer(sys, y0, target, 0.0, 0.5, o);
  CHECK(r.cost.endpoint_defect < 1e-6);

  // oracle: same steer on a doubled time grid and a doubled state truncation
  const auto sys2 = ModalSystem::neumann(remark2(), 64);
  SteerOptions fine = o;
  fine.steps = 400;
  const auto target2 = propagate_free(sys2, SpectralState::constant(64, vec2(2, 1)), 0.5);
  const auto rf = steer(sys2, SpectralState::constant(64, vec2(1, 1)), target2, 0.0, 0.5, fine);
  CHECK(rf.cost.endpoint_defect < 1e-6);
  CHECK((rf.final_state.coeff.topRows(9) - r.final_state.coeff.topRows(9)).norm() < 1e-6);
  CHECK(std::abs(rf.cost.control_norm - r.cost.control_norm) < 1e-3 * r.cost.control_norm);
}

TEST_CASE("returned control has minimal norm among endpoint-equivalent controls") {
  const auto sys = ModalSystem::neumann(remark2(), 16);
  SteerOptions o;
  o.control_highest_mode = 4;
  o.steps = 100;
  const HumSteerer st(sys, 0.5, o);
  const auto y0 = SpectralState::constant(16, vec2(1, 1));
  const auto target = propagate_free(sys, SpectralState::constant(16, vec2(2, 1)), 0.5);
  const auto base = st.steer(y0, target, 0.0);
  const double base_norm = base.cost.control_norm;
  std::mt19937 rng(17);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Eigen::MatrixXd> vals;
    for (int k = 0; k < o.steps; ++k) {
      Eigen::MatrixXd v(5, 1);
      for (int q = 0; q < 5; ++q) v(q, 0) = g(rng);
      vals.push_back(v);
    }
    ControlSignal pert(5, 1);
    pert.append(ControlSegment{0.0, 0.5 / o.steps, o.steps, vals});
    // remove the perturbation's effect on the controlled endpoint modes
    const auto hit = evolve_final(sys, SpectralState::zero(16, 2), pert);
    const auto fix = st.steer(SpectralState::zero(16, 2), hit * -1.0, 0.0).control;
    ControlSegment combined = base.control.segments()[0];
    for (int k = 0; k < o.steps; ++k) {
      combined.values[k] += vals[k] + fix.segments()[0].values[k];
    }
    ControlSignal c(5, 1);
    c.append(combined);
    const auto end = evolve_final(sys, y0, c);
    CHECK((end - base.final_state).coeff.topRows(5).norm() < 1e-8);
    CHECK(c.l2_norm(sys.coupling) >= base_norm - 1e-12);
  }
}

TEST_CASE("control scales linearly with the defect") {
  const auto sys = ModalSystem::neumann(remark2(), 16);
  SteerOptions o;
  o.control_highest_mode = 6;
  const HumSteerer st(sys, 0.4, o);
  const auto y = SpectralState::constant(16, vec2(1, 1));
  const auto t1 = propagate_free(sys, SpectralState::constant(16, vec2(2, 1)), 0.4);
  const auto free_end = propagate_free(sys, y, 0.4);
  const auto t2 = free_end + (t1 - free_end) * 2.0;
  const auto a = st.steer(y, t1, 0.0);
  const auto b = st.steer(y, t2, 0.0);
  for (int k = 0; k < o.steps; ++k) {
    const auto& va = a.control.segments()[0].values[k];
    const auto& vb = b.control.segments()[0].values[k];
    CHECK((vb - 2.0 * va).norm() <= 1e-9 * std::max(1.0, va.norm()));
  }
}

TEST_CASE("cost grows as the horizon shrinks") {
  const auto sys = ModalSystem::neumann(scalar_heat({0.2, 0.6}), 32);
  SpectralState y0 = SpectralState::constant(32, Eigen::VectorXd::Ones(1));
  y0.coeff(1, 0) = 0.5;
  y0.coeff(3, 0) = 0.2;
  SteerOptions o;
  o.control_highest_mode = 6;
  const auto sweep = cost_sweep(sys, y0, SpectralState::zero(32, 1), {0.05, 0.1, 0.2, 0.4}, o);
  CHECK(sweep.strictly_decreasing);
  CHECK(sweep.slope > 0.0);
}

TEST_CASE("alternating schedule") {
  const auto sys = ModalSystem::neumann(scalar_heat({0.2, 0.6}), 32);
  SpectralState y0 = SpectralState::zero(32, 1);
  y0.coeff(1, 0) = 1.0;
  y0.coeff(5, 0) = 1.0;
  const auto zero = SpectralState::zero(32, 1);

  LrOptions o;
  o.min_control_mode = 2;
  const auto two = lr_steer(sys, y0, zero, 0.0, 1.0, 2, o);
  CHECK(two.terminal_defect <= 1e-4);
  CHECK(two.stage_modes == std::vector<int>{2, 4});
  CHECK(two.control.tiles());
  CHECK(two.control.start() == 0.0);
  CHECK(two.control.end() == doctest::Approx(1.0));

  const auto one = lr_steer(sys, y0, zero, 0.0, 1.0, 1, o);
  SteerOptions so;
  so.control_highest_mode = 2;
  so.steps = o.steps_per_stage / 2;
  so.envelope = o.envelope;
  const auto half = steer(sys, y0, zero, 0.0, 0.5, so);
  const auto expect = propagate_free(sys, half.final_state, 0.5);
  CHECK((one.final_state - expect).l2_norm() < 1e-12);
  CHECK(one.control_norm == doctest::Approx(half.cost.control_norm));
}

TEST_CASE("envelope vanishes at the ends and equals one in the middle") {
  CHECK(smooth_envelope(0.0) == 0.0);
  CHECK(smooth_envelope(1.0) == 0.0);
  CHECK(smooth_envelope(0.5) == 1.0);
  CHECK(smooth_envelope(0.3) == 1.0);
  CHECK(smooth_envelope(0.1) > 0.0);
  CHECK(smooth_envelope(0.1) < 1.0);
  const auto sys = ModalSystem::neumann(remark2(), 16);
  SteerOptions o;
  o.envelope = true;
  o.control_highest_mode = 4;
  const auto r = steer(sys, SpectralState::constant(16, vec2(1, 1)),
                       propagate_free(sys, SpectralState::constant(16, vec2(2, 1)), 0.5), 0.0, 0.5, o);
  CHECK(r.cost.endpoint_defect < 1e-6);
  CHECK(r.control.segments()[0].values.front().norm() < 1e-3 * r.control.segments()[0].values[100].norm());
}
