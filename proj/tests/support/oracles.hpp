#pragma once

// Reference computations shared by the unit and acceptance tests. None of
// this calls into the library's own SVD or backward pass.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "lpaf/matrix.hpp"
#include "lpaf/nn.hpp"

namespace lpaf::oracle {

// Classical two-sided Jacobi on a symmetric matrix; returns eigenvalues in
// descending order.
inline std::vector<double> symmetric_eigenvalues(Matrix a, double tol = 1e-15,
                                                 int max_sweeps = 100) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw std::invalid_argument("symmetric_eigenvalues: not square");
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0, diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      diag += a(i, i) * a(i, i);
      for (std::size_t j = 0; j < n; ++j) {
        if (i != j) off += a(i, j) * a(i, j);
      }
    }
    if (off <= tol * tol * std::max(diag, 1e-300)) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
  std::sort(ev.begin(), ev.end(), std::greater<>());
  return ev;
}

// Singular values as square roots of the eigenvalues of W^T W (or W W^T,
// whichever is smaller), descending.
inline std::vector<double> singular_values(const Matrix& w) {
  const std::size_t n = w.rows(), m = w.cols();
  const std::size_t r = std::min(n, m);
  Matrix g(r, r);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      double s = 0.0;
      if (m <= n) {
        for (std::size_t k = 0; k < n; ++k) s += w(k, i) * w(k, j);
      } else {
        for (std::size_t k = 0; k < m; ++k) s += w(i, k) * w(j, k);
      }
      g(i, j) = s;
    }
  }
  std::vector<double> ev = symmetric_eigenvalues(g);
  for (double& e : ev) e = std::sqrt(std::max(e, 0.0));
  return ev;
}

inline double plain_frobenius(const Matrix& a) {
  double s = 0.0;
  for (double x : a.data()) s += x * x;
  return std::sqrt(s);
}

// Naive triple loop.
inline Matrix product(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  }
  return c;
}

inline double max_orthogonality_defect(const Matrix& q) {
  double worst = 0.0;
  for (std::size_t i = 0; i < q.cols(); ++i) {
    for (std::size_t j = 0; j < q.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < q.rows(); ++k) s += q(k, i) * q(k, j);
      worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
    }
  }
  return worst;
}

// Central difference of `loss` with respect to every entry of `param`,
// restoring each entry afterwards.
inline std::vector<double> central_difference(std::span<double> param,
                                              const std::function<double()>& loss,
                                              double h = 1e-5) {
  std::vector<double> out(param.size());
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double saved = param[i];
    param[i] = saved + h;
    const double up = loss();
    param[i] = saved - h;
    const double down = loss();
    param[i] = saved;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

struct GradCheck {
  double worst_relative = 0.0;
  std::size_t compared = 0;
};

// Relative error |a - n| / max(|a|, |n|), skipping entries where both are
// below `floor` in absolute value.
inline void compare_gradients(std::span<const double> analytic, std::span<const double> numeric,
                              GradCheck& acc, double floor = 1e-8) {
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    if (std::abs(a) < floor && std::abs(n) < floor) continue;
    acc.worst_relative =
        std::max(acc.worst_relative, std::abs(a - n) / std::max(std::abs(a), std::abs(n)));
    ++acc.compared;
  }
}

// Softmax cross-entropy written directly from the definition.
inline double reference_cross_entropy(const Matrix& logits, std::span<const double> labels) {
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    double mx = logits(r, 0);
    for (std::size_t c = 1; c < logits.cols(); ++c) mx = std::max(mx, logits(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) z += std::exp(logits(r, c) - mx);
    total += std::log(z) + mx - logits(r, static_cast<std::size_t>(labels[r]));
  }
  return total / static_cast<double>(logits.rows());
}

}  // namespace lpaf::oracle
