#pragma once

#include <cstddef>
#include <vector>

#include "lpaf/matrix.hpp"

namespace lpaf {

inline constexpr double kDefaultRankTolerance = 1e-6;

// Thin SVD w = u * diag(sigma) * v^T with r = min(n, m).
//
// sigma is sorted descending and non-negative; u (n x r) and v (m x r) have
// orthonormal columns. The sign of each singular pair is fixed so that the
// first nonzero entry of every column of u is non-negative.
struct SvdResult {
  Matrix u;
  std::vector<double> sigma;
  Matrix v;

  std::size_t rank() const noexcept { return sigma.size(); }
};

// Rank-k factors a (n x k) and b (k x m) with w ~= a * b.
struct FactorPair {
  Matrix a;
  Matrix b;

  std::size_t rank() const noexcept { return a.cols(); }
  std::size_t rows() const noexcept { return a.rows(); }
  std::size_t cols() const noexcept { return b.cols(); }
  std::size_t parameter_count() const noexcept { return a.size() + b.size(); }
  Matrix product() const { return matmul(a, b); }
};

struct JacobiOptions {
  // Sweeps stop once every column pair is orthogonal to this relative level
  // (|<a_i, a_j>| <= tol * |a_i| |a_j|). Zero selects n * DBL_EPSILON.
  double pair_tolerance = 0.0;
  int max_sweeps = 60;
};

// One-sided (Hestenes) Jacobi SVD. Throws kNonFinite on NaN/Inf input and
// kNotConverged if the sweep limit is hit.
SvdResult svd(const Matrix& w, const JacobiOptions& options = {});

// a = u[:, :k] * diag(sigma[:k]), b = v[:, :k]^T. Requires 1 <= k <= s.rank().
FactorPair truncate(const SvdResult& s, std::size_t k);

// Number of singular values strictly greater than rel_tol * sigma_1.
std::size_t numerical_rank(const Matrix& w, double rel_tol = kDefaultRankTolerance);
std::size_t numerical_rank(const SvdResult& s, double rel_tol = kDefaultRankTolerance);

// ||w - a b||_F
double frobenius_error(const Matrix& w, const FactorPair& f);

// (sum_{i<=k} sigma_i) / (sum_i sigma_i); 1 for the zero matrix.
double cumulative_singular_fraction(const Matrix& w, std::size_t k);
double cumulative_singular_fraction(const SvdResult& s, std::size_t k);

}  // namespace lpaf
