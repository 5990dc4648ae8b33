#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "posctl/errors.hpp"
#include "posctl/evolution.hpp"

using namespace posctl;

namespace {
constexpr double kPi = std::numbers::pi;

SystemSpec remark2() {
  SystemSpec s;
  s.D = Eigen::MatrixXd::Identity(2, 2);
  s.A.resize(2, 2);
  s.A << 0, 1, 0, -1;
  s.B.resize(2, 1);
  s.B << 0, 1;
  s.omega = {0.3, 0.8};
  return s;
}

SystemSpec scalar_heat(Interval omega = {0.0, 1.0}) {
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

TEST_CASE("free heat decay of the first mode") {
  const auto sys = ModalSystem::neumann(scalar_heat(), 8);
  SpectralState s = SpectralState::zero(8, 1);
  s.coeff(1, 0) = 1.0;
  const auto tr = free_evolve(sys, s, 0.1, 10);
  CHECK(tr.final_state().coeff(1, 0) == doctest::Approx(std::exp(-kPi * kPi * 0.1)).epsilon(1e-12));
  CHECK(tr.final_state().coeff(1, 0) == doctest::Approx(0.37272).epsilon(1e-4));
  CHECK(tr.times.size() == 11);
  for (std::size_t i = 1; i < tr.times.size(); ++i) CHECK(tr.times[i] > tr.times[i - 1]);
  CHECK(tr.final_time() == doctest::Approx(0.1));
}

TEST_CASE("zero state stays zero") {
  const auto sys = ModalSystem::neumann(remark2(), 16);
  const auto tr = free_evolve(sys, SpectralState::zero(16, 2), 1.0, 20);
  for (const auto& s : tr.states) CHECK(s.coeff.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mass of y1 + y2 is conserved without control") {
  const auto sys = ModalSystem::neumann(remark2(), 16);
  const auto tr = free_evolve(sys, SpectralState::constant(16, vec2(3, 1)), 3.0, 60);
  for (const auto& s : tr.states) CHECK(std::abs(s.mean().sum() - 4.0) < 1e-9);

  std::mt19937 rng(4);
  SpectralState r{oracle::random_nonneg_coeff(rng, 17, 2, 8)};
  const double m0 = r.mean().sum();
  for (const auto& s : free_evolve(sys, r, 2.0, 50).states) CHECK(std::abs(s.mean().sum() - m0) < 1e-9);
}

TEST_CASE("zero control reproduces free evolution bit for bit") {
  const auto sys = ModalSystem::neumann(remark2(), 12);
  std::mt19937 rng(9);
  SpectralState s{oracle::random_nonneg_coeff(rng, 13, 2, 6)};
  const auto freetr = free_evolve(sys, s, 0.7, 35);
  const auto ctrl = ControlSignal::sampled(0.0, 0.7, 35, 5, 1,
                                           [](double) { return Eigen::MatrixXd::Zero(5, 1); });
  const auto ctr = controlled_evolve(sys, s, ctrl, 0.7, 35);
  REQUIRE(ctr.states.size() == freetr.states.size());
  for (std::size_t i = 0; i < ctr.states.size(); ++i) {
    CHECK(ctr.times[i] == freetr.times[i]);
    CHECK((ctr.states[i].coeff.array() == freetr.states[i].coeff.array()).all());
  }
}

TEST_CASE("constant control on a single mode follows the closed form") {
  const auto sys = single_mode();
  const int steps = 1000;
  const auto ctrl = ControlSignal::sampled(0.0, 1.0, steps, 1, 1,
                                           [](double) { return Eigen::MatrixXd::Ones(1, 1); });
  const SpectralState end = evolve_final(sys, SpectralState::zero(0, 1), ctrl);
  CHECK(std::abs(end.coeff(0, 0) - (1.0 - std::exp(-1.0))) < 1e-7);

  ModalSystem half = sys;
  half.coupling(0, 0) = 0.4;
  const SpectralState end2 = evolve_final(half, SpectralState::zero(0, 1), ctrl);
  CHECK(std::abs(end2.coeff(0, 0) - 0.4 * (1.0 - std::exp(-1.0))) < 1e-7);
}

TEST_CASE("controlled_evolve rejects incompatible grids") {
  const auto sys = ModalSystem::neumann(scalar_heat(), 4);
  const auto ctrl = ControlSignal::zero(0.0, 1.0, 10, 2, 1);
  CHECK_THROWS_AS(controlled_evolve(sys, SpectralState::zero(4, 1), ctrl, 1.0, 20), StructuralError);
  CHECK_THROWS_AS(controlled_evolve(sys, SpectralState::zero(4, 1), ctrl, 2.0, 10), StructuralError);
  CHECK_THROWS_AS(controlled_evolve(sys, SpectralState::zero(3, 1), ctrl, 1.0, 10), StructuralError);
  ControlSignal gap(2, 1);
  gap.append(ControlSegment{0.0, 0.1, 5, {}});
  CHECK_THROWS_AS(gap.append(ControlSegment{0.6, 0.1, 5, {}}), StructuralError);
}

TEST_CASE("controlled integrator is second order") {
  const auto sys = ModalSystem::neumann(remark2(), 12);
  std::mt19937 rng(21);
  SpectralState s{oracle::random_nonneg_coeff(rng, 13, 2, 6)};
  auto u = [](double t) {
    Eigen::MatrixXd v(4, 1);
    v << std::sin(3 * t) + 1, std::cos(5 * t), t * t - 0.5, std::exp(-t);
    return v;
  };
  auto endpoint = [&](int steps) {
    return evolve_final(sys, s, ControlSignal::sampled(0.0, 0.8, steps, 4, 1, u)).coeff;
  };
  const Eigen::MatrixXd a = endpoint(40), b = endpoint(80), c = endpoint(160);
  const double order = std::log2((a - b).norm() / (b - c).norm());
  CHECK(order >= 1.9);
  CHECK(order <= 2.2);
}

TEST_CASE("finite-difference oracle agrees with the spectral solution") {
  const int P = 256;
  const Eigen::VectorXd x = uniform_grid(P);
  SUBCASE("heat from e1") {
    const auto sys = ModalSystem::neumann(scalar_heat(), 32);
    SpectralState s = SpectralState::zero(32, 1);
    s.coeff(1, 0) = 1.0;
    const double T = 0.1;
    const double limit = std::pow(1.0 / (P - 1), 2) / 2.0;
    const int steps = static_cast<int>(std::ceil(T / limit));
    const auto fd = fd_oracle_evolve(scalar_heat(), reconstruct(s, P), ControlSignal{}, T, steps);
    const Eigen::MatrixXd spec = reconstruct(propagate_free(sys, s, T), P);
    CHECK(grid_l2_norm(fd.samples.back() - spec) < 1e-3);
  }
  SUBCASE("constant stays constant") {
    Eigen::MatrixXd y = Eigen::MatrixXd::Constant(P, 1, 2.5);
    const auto fd = fd_oracle_evolve(scalar_heat(), y, ControlSignal{}, 0.05, 7000, 1000);
    for (const auto& s : fd.samples) CHECK((s.array() - 2.5).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("two-component example") {
    const auto sys = ModalSystem::neumann(remark2(), 32);
    const auto s = SpectralState::constant(32, vec2(3, 1));
    const auto fd = fd_oracle_evolve(remark2(), reconstruct(s, P), ControlSignal{}, 0.2, 26100);
    CHECK(grid_l2_norm(fd.samples.back() - reconstruct(propagate_free(sys, s, 0.2), P)) < 1e-3);
  }
  SUBCASE("stability violation") {
    CHECK_THROWS_AS(fd_oracle_evolve(scalar_heat(), Eigen::MatrixXd::Zero(P, 1), ControlSignal{}, 1.0, 100),
                    ConfigurationError);
  }
}

TEST_CASE("constraint monitoring") {
  SUBCASE("quasipositive free evolution stays nonnegative") {
    const auto sys = ModalSystem::neumann(remark2(), 32);
    std::mt19937 rng(8);
    SpectralState s{oracle::random_nonneg_coeff(rng, 33, 2, 10)};
    const auto rep = monitor_constraint(free_evolve(sys, s, 2.0, 100), 0.0);
    CHECK_FALSE(rep.violated);
    CHECK(rep.worst_min >= -1e-6);
  }
  SUBCASE("negative state violates everywhere") {
    const auto sys = ModalSystem::neumann(scalar_heat(), 8);
    const auto tr = free_evolve(sys, SpectralState::constant(8, Eigen::VectorXd::Constant(1, -1.0)), 1.0, 10);
    const auto rep = monitor_constraint(tr, 0.0);
    CHECK(rep.violated);
    REQUIRE(rep.first_violation_time.has_value());
    CHECK(*rep.first_violation_time == 0.0);
    for (const auto& m : rep.minima) CHECK(m(0) < 0.0);
  }
  SUBCASE("non-quasipositive coupling drives a component negative") {
    SystemSpec s = remark2();
    s.A << 0, -1, 0, 0;
    const auto sys = ModalSystem::neumann(s, 32);
    SpectralState y = SpectralState::zero(32, 2);
    y.coeff(0, 1) = 1.0;
    y.coeff(1, 1) = 0.5;
    const auto rep = monitor_constraint(free_evolve(sys, y, 0.5, 50), 0.0);
    CHECK(rep.violated);
    CHECK(rep.worst_component == 0);
    const int P = 128;
    const auto fd = fd_oracle_evolve(s, reconstruct(y, P), ControlSignal{}, 0.5, 16200);
    CHECK(fd.samples.back().col(0).maxCoeff() < 0.0);
  }
}

TEST_CASE("positivity of free evolution on random quasipositive systems") {
  std::mt19937 rng(33);
  std::uniform_int_distribution<int> dim(1, 4);
  std::uniform_real_distribution<double> off(0.0, 1.5), diag(-2.0, 1.0), dif(0.2, 2.0);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = dim(rng);
    SystemSpec s;
    s.D = Eigen::MatrixXd::Zero(n, n);
    s.A.resize(n, n);
    for (int i = 0; i < n; ++i) {
      s.D(i, i) = dif(rng);
      for (int j = 0; j < n; ++j) s.A(i, j) = i == j ? diag(rng) : off(rng);
    }
    s.B = Eigen::MatrixXd::Ones(n, 1);
    const auto sys = ModalSystem::neumann(s, 32);
    SpectralState y{oracle::random_nonneg_coeff(rng, 33, n, 12)};
    CHECK_FALSE(monitor_constraint(free_evolve(sys, y, 2.0, 80), 0.0).violated);
  }
}

TEST_CASE("energy is nonincreasing for dissipative coupling") {
  std::mt19937 rng(12);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3;
    Eigen::MatrixXd K(n, n), P(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        K(i, j) = g(rng);
        P(i, j) = g(rng);
      }
    SystemSpec s;
    s.A = (K - K.transpose()) - 0.3 * P * P.transpose();
    s.D = Eigen::Vector3d(1.0, 0.5, 2.0).asDiagonal();
    s.B = Eigen::MatrixXd::Ones(n, 1);
    const auto sys = ModalSystem::neumann(s, 16);
    SpectralState y = SpectralState::zero(16, n);
    for (int p = 0; p <= 16; ++p)
      for (int i = 0; i < n; ++i) y.coeff(p, i) = g(rng) / (1 + p);
    const auto tr = free_evolve(sys, y, 1.0, 100);
    for (std::size_t i = 1; i < tr.l2_norms.size(); ++i) {
      CHECK(tr.l2_norms[i] * tr.l2_norms[i] <= tr.l2_norms[i - 1] * tr.l2_norms[i - 1] + 1e-9);
    }
  }
}

TEST_CASE("mean of y1 is nondecreasing while y2 stays nonnegative") {
  const auto sys = ModalSystem::neumann(remark2(), 32);
  std::mt19937 rng(2);
  SpectralState y{oracle::random_nonneg_coeff(rng, 33, 2, 8)};
  auto u = [](double t) {
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(6, 1);
    v(0, 0) = 0.5 + 0.4 * std::sin(7 * t);
    v(3, 0) = 0.1 * std::cos(2 * t);
    return v;
  };
  const auto tr = evolve(sys, y, ControlSignal::sampled(0.0, 2.0, 200, 6, 1, u));
  int checked = 0;
  for (std::size_t i = 1; i < tr.states.size(); ++i) {
    if (tr.minima[i - 1](1) < 0.0 || tr.minima[i](1) < 0.0) continue;
    CHECK(tr.states[i].mean()(0) >= tr.states[i - 1].mean()(0) - 1e-9);
    ++checked;
  }
  CHECK(checked > 150);
}

TEST_CASE("trajectory append and reference distance") {
  const auto sys = ModalSystem::neumann(scalar_heat(), 4);
  SpectralState s = SpectralState::zero(4, 1);
  s.coeff(2, 0) = 1.0;
  auto a = free_evolve(sys, s, 0.5, 5);
  const auto b = free_evolve(sys, a.final_state(), 0.5, 5, {}, 0.5);
  a.append(b);
  CHECK(a.times.size() == 11);
  const auto whole = free_evolve(sys, s, 1.0, 10);
  a.attach_reference(whole);
  for (double d : a.reference_distance) CHECK(d < 1e-12);
  CHECK_THROWS_AS(a.append(free_evolve(sys, s, 0.2, 2)), StructuralError);
}
