#include "posctl/system_model.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "posctl/errors.hpp"

namespace posctl {

void SystemSpec::check_dimensions() const {
  const auto n_rows = A.rows();
  std::ostringstream msg;
  if (n_rows < 1 || A.cols() != n_rows) {
    msg << "coupling matrix must be square and nonempty, got " << A.rows() << "x" << A.cols();
  } else if (D.rows() != n_rows || D.cols() != n_rows) {
    msg << "diffusion matrix must be " << n_rows << "x" << n_rows << ", got " << D.rows() << "x"
        << D.cols();
  } else if (B.rows() != n_rows || B.cols() < 1) {
    msg << "control matrix must be " << n_rows << "xm with m >= 1, got " << B.rows() << "x"
        << B.cols();
  } else if (!(omega.a >= 0.0 && omega.a < omega.b && omega.b <= 1.0)) {
    msg << "control window (" << omega.a << ", " << omega.b << ") is not a nonempty subinterval of (0,1)";
  } else if (!D.allFinite() || !A.allFinite() || !B.allFinite()) {
    msg << "system matrices contain non-finite entries";
  } else {
    return;
  }
  throw StructuralError(msg.str());
}

StructureReport validate_structure(const SystemSpec& spec, double tol) {
  spec.check_dimensions();
  const int n = spec.n();
  StructureReport report;
  report.tol = tol;

  const Eigen::MatrixXd sym_d = 0.5 * (spec.D + spec.D.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> d_eig(sym_d, Eigen::EigenvaluesOnly);
  report.alpha = d_eig.eigenvalues().minCoeff();
  report.is_elliptic = report.alpha > tol;

  report.is_diagonal_D = true;
  report.is_quasipositive_A = true;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      if (std::abs(spec.D(i, j)) > tol) report.is_diagonal_D = false;
      if (spec.A(i, j) < -tol) report.is_quasipositive_A = false;
    }
  }
  const double d0 = spec.D(0, 0);
  report.is_scalar_D =
      report.is_diagonal_D &&
      (spec.D.diagonal().array() - d0).abs().maxCoeff() <= tol * std::max(1.0, std::abs(d0));

  Eigen::EigenSolver<Eigen::MatrixXd> a_eig(spec.A, false);
  report.A_spectrum.reserve(static_cast<std::size_t>(n));
  report.eigenvalues_nonneg_real = true;
  for (int i = 0; i < n; ++i) {
    const std::complex<double> ev = a_eig.eigenvalues()(i);
    report.A_spectrum.push_back(ev);
    if (ev.real() < -tol) report.eigenvalues_nonneg_real = false;
  }

  const Eigen::MatrixXd sym_a = 0.5 * (spec.A + spec.A.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> a_sym_eig(sym_a, Eigen::EigenvaluesOnly);
  report.max_symmetric_A = a_sym_eig.eigenvalues().maxCoeff();
  return report;
}

Eigen::MatrixXd kalman_matrix(const SystemSpec& spec, double lambda) {
  spec.check_dimensions();
  const int n = spec.n();
  const int m = spec.m();
  const Eigen::MatrixXd mode = -lambda * spec.D + spec.A;
  Eigen::MatrixXd block(n, n * m);
  // Rightmost block is B, each block to the left is one more power of M.
  block.rightCols(m) = spec.B;
  for (int i = 1; i < n; ++i) {
    block.middleCols((n - 1 - i) * m, m) = mode * block.middleCols((n - i) * m, m);
  }
  return block;
}

int kalman_rank(const SystemSpec& spec, double lambda, double tol) {
  const Eigen::MatrixXd block = kalman_matrix(spec, lambda);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(block);
  const auto& sigma = svd.singularValues();
  if (sigma.size() == 0 || sigma(0) == 0.0) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (sigma(i) > tol * sigma(0)) ++rank;
  }
  return rank;
}

KalmanVerdict kalman_condition_all_modes(const SystemSpec& spec, int p_max, double tol) {
  if (p_max < 1) throw StructuralError("p_max must be at least 1");
  const int n = spec.n();
  KalmanVerdict verdict;
  verdict.p_max = p_max;
  verdict.satisfied_up_to_p_max = true;
  for (int p = 0; p <= p_max; ++p) {
    const double lambda = std::pow(p * std::numbers::pi, 2);
    if (kalman_rank(spec, lambda, tol) < n) {
      verdict.satisfied_up_to_p_max = false;
      verdict.failed_at = p;
      break;
    }
  }
  if (validate_structure(spec, tol).is_scalar_D) {
    SystemSpec reduced = spec;
    reduced.D = Eigen::MatrixXd::Zero(n, n);
    verdict.reduced_rank = kalman_rank(reduced, 0.0, tol);
    verdict.all_modes_certified = *verdict.reduced_rank == n;
  }
  return verdict;
}

}  // namespace posctl
