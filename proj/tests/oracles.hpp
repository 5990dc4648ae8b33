// Independent reference computations used only by the tests.
#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <Eigen/Dense>

namespace oracle {

using boost::multiprecision::cpp_int;
using IntMatrix = std::vector<std::vector<cpp_int>>;

// Rank by fraction-free (Bareiss) elimination; exact for integer input.
inline int bareiss_rank(IntMatrix a) {
  const int rows = static_cast<int>(a.size());
  if (rows == 0) return 0;
  const int cols = static_cast<int>(a[0].size());
  cpp_int prev = 1;
  int rank = 0;
  for (int c = 0; c < cols && rank < rows; ++c) {
    int pivot = -1;
    for (int r = rank; r < rows; ++r) {
      if (a[r][c] != 0) {
        pivot = r;
        break;
      }
    }
    if (pivot < 0) continue;
    std::swap(a[rank], a[pivot]);
    for (int r = rank + 1; r < rows; ++r) {
      for (int k = c + 1; k < cols; ++k) {
        a[r][k] = (a[r][k] * a[rank][c] - a[r][c] * a[rank][k]) / prev;
      }
      a[r][c] = 0;
    }
    prev = a[rank][c];
    ++rank;
  }
  return rank;
}

// Integer Kalman block [M^{n-1}B | ... | B], M = -lambda D + A, lambda integer.
inline IntMatrix kalman_block(const std::vector<std::vector<long>>& D,
                              const std::vector<std::vector<long>>& A,
                              const std::vector<std::vector<long>>& B, long lambda) {
  const std::size_t n = A.size();
  const std::size_t m = B[0].size();
  IntMatrix M(n, std::vector<cpp_int>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) M[i][j] = cpp_int(A[i][j]) - cpp_int(lambda) * D[i][j];
  IntMatrix block(n, std::vector<cpp_int>(n * m));
  IntMatrix P(n, std::vector<cpp_int>(m));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) P[i][j] = B[i][j];
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t col0 = (n - 1 - k) * m;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) block[i][col0 + j] = P[i][j];
    IntMatrix next(n, std::vector<cpp_int>(m));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t l = 0; l < n; ++l) next[i][j] += M[i][l] * P[l][j];
    P = next;
  }
  return block;
}

// Rank over Q(lambda) of the Kalman block, i.e. the rank at any
// transcendental lambda. Every minor is a polynomial of degree at most
// n (n - 1) in lambda, so the maximum over that many + 1 integer points is exact.
inline int generic_kalman_rank(const std::vector<std::vector<long>>& D,
                               const std::vector<std::vector<long>>& A,
                               const std::vector<std::vector<long>>& B) {
  const long n = static_cast<long>(A.size());
  int best = 0;
  for (long l = 0; l <= n * (n - 1); ++l) best = std::max(best, bareiss_rank(kalman_block(D, A, B, l)));
  return best;
}

// e^{tA} by scaling and squaring of a truncated Taylor series.
inline Eigen::MatrixXd expm_series(const Eigen::MatrixXd& A, double t) {
  Eigen::MatrixXd X = A * t;
  int squarings = 0;
  while (X.lpNorm<Eigen::Infinity>() > 0.25) {
    X /= 2.0;
    ++squarings;
  }
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(A.rows(), A.cols());
  Eigen::MatrixXd sum = term;
  for (int k = 1; k < 30; ++k) {
    term = term * X / k;
    sum += term;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

// Nonnegative band-limited field: c + sum a_p e_p with c large enough.
inline Eigen::MatrixXd random_nonneg_coeff(std::mt19937& rng, int modes, int n, int active) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(modes, n);
  for (int i = 0; i < n; ++i) {
    double amp = 0.0;
    for (int p = 1; p <= active && p < modes; ++p) {
      c(p, i) = u(rng) / p;
      amp += std::abs(c(p, i));
    }
    c(0, i) = std::sqrt(2.0) * amp * (1.0 + 0.5 * (u(rng) + 1.0));
  }
  return c;
}

}  // namespace oracle
