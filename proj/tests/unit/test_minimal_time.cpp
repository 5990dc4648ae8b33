#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "posctl/errors.hpp"
#include "posctl/minimal_time.hpp"

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

SpectralState pair(double a, double b) {
  SpectralState s = SpectralState::zero(16, 2);
  s.coeff(0, 0) = a;
  s.coeff(0, 1) = b;
  return s;
}

FeasibilityProblem heat_probe(double T, double M = 0.5) {
  FeasibilityProblem p;
  p.spec.D = Eigen::MatrixXd::Ones(1, 1);
  p.spec.A = Eigen::MatrixXd::Zero(1, 1);
  p.spec.B = Eigen::MatrixXd::Ones(1, 1);
  p.spec.omega = {0.1, 0.4};
  p.y0 = SpectralState::zero(32, 1);
  p.y0.coeff(0, 0) = 1.0;
  p.y0.coeff(1, 0) = 1.0;
  p.target_seed = SpectralState::zero(32, 1);
  p.target_seed.coeff(0, 0) = 1.0;
  p.target_seed.coeff(1, 0) = -1.0;
  p.T = T;
  p.M = M;
  return p;
}

// Brute-force projection of the origin onto {x : C x >= b}: the minimizer
// is the minimum-norm point of some face, so every subset of at most nv
// rows is tried as an equality system.
Eigen::VectorXd brute_projection(const Eigen::MatrixXd& C, const Eigen::VectorXd& b, bool& found) {
  const int rows = static_cast<int>(C.rows());
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd arg;
  for (int mask = 0; mask < (1 << rows); ++mask) {
    std::vector<int> idx;
    for (int i = 0; i < rows; ++i) {
      if (mask & (1 << i)) idx.push_back(i);
    }
    if (idx.size() > static_cast<std::size_t>(C.cols())) continue;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(C.cols());
    if (!idx.empty()) {
      Eigen::MatrixXd Ca(idx.size(), C.cols());
      Eigen::VectorXd ba(idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k) {
        Ca.row(static_cast<Eigen::Index>(k)) = C.row(idx[k]);
        ba(static_cast<Eigen::Index>(k)) = b(idx[k]);
      }
      x = Ca.transpose() * (Ca * Ca.transpose()).ldlt().solve(ba);
      if ((Ca * x - ba).norm() > 1e-9) continue;
    }
    if ((C * x - b).minCoeff() < -1e-9) continue;
    if (x.norm() < best) {
      best = x.norm();
      arg = x;
    }
  }
  found = std::isfinite(best);
  return arg;
}

}  // namespace

TEST_CASE("closed-form radial modes") {
  const auto b = sl_basis(0.0, 2);
  CHECK(b.mu[0] == doctest::Approx(kPi / 2));
  CHECK(b.lambda[0] == doctest::Approx(2.4674).epsilon(1e-4));
  CHECK(b.alpha[0] == doctest::Approx(-kPi / 2));
  CHECK(b.identity(1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(b.lambda[1] == doctest::Approx(22.207).epsilon(1e-4));
  CHECK(b.alpha[1] == doctest::Approx(3 * kPi / 2));
  CHECK_FALSE(b.nonpositive_first);
  CHECK(sl_basis(3.0, 1).nonpositive_first);
  CHECK_THROWS_AS(sl_basis(0.0, 0), ConfigurationError);
}

TEST_CASE("flux identity holds for every mode") {
  for (double a : {0.0, 1.0, -1.0, 5.0}) {
    const auto b = sl_basis(a, 50);
    CHECK(b.max_identity_error() <= 1e-12);
  }
}

TEST_CASE("radial modes solve the boundary problem and are orthonormal") {
  const double a = 1.3;
  const auto b = sl_basis(a, 6);
  const double eps = 1e-4;
  for (int n = 1; n <= 6; ++n) {
    for (double r : {0.1, 0.37, 0.8}) {
      const double second = (b.eval(n, r + eps) - 2 * b.eval(n, r) + b.eval(n, r - eps)) / (eps * eps);
      CHECK(std::abs(second + a * b.eval(n, r) + b.lambda[n - 1] * b.eval(n, r)) < 1e-4 * b.lambda[n - 1]);
    }
    CHECK(std::abs(b.eval(n, 1.0)) < 1e-14);
    CHECK(std::abs((b.eval(n, 1.0) - b.eval(n, 1.0 - eps)) / eps - b.alpha[n - 1]) <
          1e-3 * std::abs(b.alpha[n - 1]));
  }
  // omega_0 int_0^1 p_n p_m dr by a fine midpoint rule
  const int steps = 20000;
  for (int n = 1; n <= 6; ++n) {
    for (int m = 1; m <= 6; ++m) {
      double s = 0.0;
      for (int k = 0; k < steps; ++k) {
        const double r = (k + 0.5) / steps;
        s += b.eval(n, r) * b.eval(m, r) / steps;
      }
      CHECK(std::abs(b.omega0 * s - (n == m ? 1.0 : 0.0)) < 1e-7);
    }
  }
}

TEST_CASE("gamma certificate examples") {
  const auto b = sl_basis(0.0, 8);
  const ProbeBall ball{0.7, 0.2};
  const auto bump = [](double x) { return 1.0 + 0.3 * std::cos(5 * x); };

  const auto same = gamma_certificate(bump, bump, ball, b);
  CHECK(same.spread == doctest::Approx(0.0));
  CHECK(same.is_constant);
  CHECK_FALSE(same.certifies_positive_time);

  // difference equal to the first radial mode on the ball
  const auto first = [&](double x) { return bump(x) + b.eval(1, (x - ball.center) / ball.radius); };
  const auto g = gamma_certificate(first, bump, ball, b);
  CHECK(g.gamma_candidates[0] == doctest::Approx(2.0 / kPi).epsilon(1e-8));
  for (std::size_t n = 1; n < g.gamma_candidates.size(); ++n) {
    CHECK(std::abs(g.gamma_candidates[n]) < 1e-8);
  }
  CHECK(g.spread == doctest::Approx(2.0 / kPi).epsilon(1e-8));
  CHECK(g.certifies_positive_time);

  // constant nonzero ratios still certify
  Eigen::VectorXd yf = Eigen::VectorXd::LinSpaced(8, 1.0, 2.0);
  Eigen::VectorXd y0 = yf;
  for (int n = 0; n < 8; ++n) y0(n) -= 0.1 * b.alpha[static_cast<std::size_t>(n)];
  const auto c = gamma_certificate_from_coefficients(y0, yf, b);
  CHECK(c.is_constant);
  CHECK(c.common_value == doctest::Approx(0.1));
  CHECK(c.certifies_positive_time);
}

TEST_CASE("gamma spread depends only on the difference") {
  const auto b = sl_basis(-1.0, 10);
  const ProbeBall ball{0.6, 0.25};
  const auto f = [](double x) { return 2.0 + std::sin(3 * x); };
  const auto g = [](double x) { return 1.0 + x * x; };
  const double base = gamma_certificate(f, g, ball, b).spread;
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 10; ++trial) {
    const double c1 = u(rng), c2 = u(rng), c3 = u(rng);
    const auto h = [=](double x) { return c1 + c2 * std::cos(c3 * x); };
    const auto fh = [&](double x) { return f(x) + h(x); };
    const auto gh = [&](double x) { return g(x) + h(x); };
    CHECK(gamma_certificate(fh, gh, ball, b).spread == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("ball potential rescales the first coupling entry") {
  SystemSpec s = remark2();
  s.A(0, 0) = 2.0;
  s.D(0, 0) = 0.5;
  CHECK(ball_potential(s, {0.5, 0.1}) == doctest::Approx(2.0 * 0.01 / 0.5));
}

TEST_CASE("mass obstruction examples") {
  const auto blocked = mass_obstruction(remark2(), pair(3, 1), pair(1, 1), 5.0);
  CHECK(blocked.verdict == ObstructionVerdict::obstructed);
  CHECK(blocked.controlled_lower == doctest::Approx(3.0));
  CHECK(blocked.target_upper == doctest::Approx(2.0));
  CHECK(blocked.target_mass == doctest::Approx(1.0 + (1.0 - std::exp(-5.0))));

  const auto open = mass_obstruction(remark2(), pair(1, 1), pair(2, 1), 5.0);
  CHECK(open.verdict == ObstructionVerdict::not_obstructed);
  CHECK(open.controlled_lower == doctest::Approx(1.0));
  CHECK(open.target_upper == doctest::Approx(3.0));

  CHECK(mass_obstruction(remark2(), pair(2, 0.5), pair(2, 0.5), 1.0).verdict ==
        ObstructionVerdict::not_obstructed);

  SystemSpec other = remark2();
  other.B << 1, 1;
  std::string why;
  CHECK_FALSE(matches_mass_pattern(other, &why));
  CHECK_FALSE(why.empty());
  CHECK(mass_obstruction(other, pair(3, 1), pair(1, 1), 1.0).verdict ==
        ObstructionVerdict::not_applicable);
  SystemSpec leaky = remark2();
  leaky.A(1, 1) = -2.0;
  CHECK_FALSE(matches_mass_pattern(leaky));
}

TEST_CASE("active-set solver matches brute-force projection") {
  std::mt19937 rng(11);
  std::normal_distribution<double> g;
  int compared = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const int nv = 2 + trial % 3;
    const int rows = 4 + trial % 5;
    Eigen::MatrixXd C(rows, nv);
    Eigen::VectorXd b(rows);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < nv; ++j) C(i, j) = g(rng);
      C.row(i).normalize();
      b(i) = g(rng);
    }
    bool found = false;
    const Eigen::VectorXd expect = brute_projection(C, b, found);
    const QpResult r = min_norm_qp(C, b, 1000, 1e-12);
    REQUIRE(r.converged);
    CHECK(r.feasible == found);
    if (found && r.feasible) {
      CHECK((r.x - expect).norm() < 1e-8);
      ++compared;
    }
  }
  CHECK(compared > 20);
}

TEST_CASE("unconstrained probe reduces to steering") {
  auto p = heat_probe(0.2, std::numeric_limits<double>::infinity());
  for (double T : {0.02, 0.2, 1.0}) {
    p.T = T;
    const auto r = feasibility(p);
    CHECK(r.verdict == Verdict::feasible);
    CHECK(r.endpoint_defect <= 1e-6);
    CHECK(r.active_constraints == 0);
  }
}

TEST_CASE("heat probe verdicts at short and long horizons") {
  const auto early = feasibility(heat_probe(0.01));
  CHECK(early.verdict == Verdict::infeasible);
  const auto late = feasibility(heat_probe(2.0));
  CHECK(late.verdict == Verdict::feasible);
  CHECK(late.min_state >= -0.5 - 1e-6);
  CHECK(late.endpoint_defect <= 1e-6);
}

TEST_CASE("constrained control is no cheaper than the unconstrained one") {
  const auto c = feasibility(heat_probe(0.1));
  const auto u = feasibility(heat_probe(0.1, std::numeric_limits<double>::infinity()));
  REQUIRE(c.verdict == Verdict::feasible);
  CHECK(c.min_state >= -0.5 - 1e-6);
  CHECK(u.min_state < -0.5);
  CHECK(c.control_norm >= u.control_norm - 1e-9);
}

TEST_CASE("bisection brackets the transition and logs every probe") {
  const auto r = bisect_minimal_time(heat_probe(1.0), 0.01, 2.0, 8);
  CHECK(r.hi - r.lo == doctest::Approx((2.0 - 0.01) / 256).epsilon(1e-9));
  CHECK(r.T_bar_estimate > 0.01);
  CHECK(r.evaluations.size() == 10);
  CHECK(r.monotone_consistent);
  CHECK_THROWS_AS(bisect_minimal_time(heat_probe(1.0), 1.0, 2.0, 4), SetupError);
  CHECK_THROWS_AS(bisect_minimal_time(heat_probe(1.0), 0.01, 0.02, 4), SetupError);
  CHECK_THROWS_AS(bisect_minimal_time(heat_probe(1.0), 0.5, 0.2, 4), SetupError);
}

TEST_CASE("probe input checks") {
  auto p = heat_probe(1.0);
  p.T = 0.0;
  CHECK_THROWS_AS(feasibility(p), ConfigurationError);
  p = heat_probe(1.0);
  p.y0 = SpectralState::zero(16, 1);
  CHECK_THROWS_AS(feasibility(p), StructuralError);
}
