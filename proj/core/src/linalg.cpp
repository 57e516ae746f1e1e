#include "lpaf/linalg.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lpaf/error.hpp"

namespace lpaf {

namespace {

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

double norm2(const double* x, std::size_t n) {
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(x[i]));
  if (scale == 0.0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = x[i] / scale;
    s += y * y;
  }
  return scale * std::sqrt(s);
}

// Replaces rows listed in `redo` of q (each a unit vector of length len) by an
// orthonormal completion of the remaining rows. Keeps the projector
// R = I - sum q q^T onto the uncovered space and repeatedly takes its largest
// column, which has squared norm at least (uncovered dimension) / len.
void complete_orthonormal(std::vector<double>& q, std::size_t count, std::size_t len,
                          const std::vector<bool>& redo) {
  if (std::none_of(redo.begin(), redo.end(), [](bool b) { return b; })) return;
  std::vector<double> proj(len * len, 0.0);
  for (std::size_t i = 0; i < len; ++i) proj[i * len + i] = 1.0;
  auto remove = [&](const double* qi) {
    for (std::size_t r = 0; r < len; ++r) {
      const double a = qi[r];
      if (a == 0.0) continue;
      double* pr = proj.data() + r * len;
      for (std::size_t c = 0; c < len; ++c) pr[c] -= a * qi[c];
    }
  };
  std::vector<bool> valid(count);
  for (std::size_t i = 0; i < count; ++i) {
    valid[i] = !redo[i];
    if (valid[i]) remove(q.data() + i * len);
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (!redo[i]) continue;
    // proj is symmetric, so its rows are its columns.
    std::size_t best = 0;
    double best_norm = -1.0;
    for (std::size_t c = 0; c < len; ++c) {
      const double nrm = norm2(proj.data() + c * len, len);
      if (nrm > best_norm) {
        best_norm = nrm;
        best = c;
      }
    }
    if (!(best_norm > 0.0)) {
      throw Error(ErrorKind::kNotConverged, "svd: orthonormal completion ran out of directions");
    }
    double* qi = q.data() + i * len;
    std::copy_n(proj.data() + best * len, len, qi);
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j = 0; j < count; ++j) {
        if (!valid[j]) continue;
        const double* qj = q.data() + j * len;
        const double c = dot(qi, qj, len);
        for (std::size_t t = 0; t < len; ++t) qi[t] -= c * qj[t];
      }
      const double nrm = norm2(qi, len);
      for (std::size_t t = 0; t < len; ++t) qi[t] /= nrm;
    }
    valid[i] = true;
    remove(qi);
  }
}

// Core routine for a tall-or-square input given as columns: cols holds `m`
// columns of length `n` contiguously (n >= m). Returns u (n x m), sigma, v (m x m).
SvdResult jacobi_columns(std::vector<double> cols, std::size_t n, std::size_t m,
                         const JacobiOptions& options) {
  std::vector<double> vcols(m * m, 0.0);  // columns of V, contiguous
  for (std::size_t j = 0; j < m; ++j) vcols[j * m + j] = 1.0;

  const double tol = options.pair_tolerance > 0.0
                         ? options.pair_tolerance
                         : std::max(1.0, static_cast<double>(n)) * DBL_EPSILON;

  bool converged = (m < 2);
  for (int sweep = 0; sweep < options.max_sweeps && !converged; ++sweep) {
    bool rotated = false;
    for (std::size_t i = 0; i + 1 < m; ++i) {
      double* ci = cols.data() + i * n;
      double* vi = vcols.data() + i * m;
      for (std::size_t j = i + 1; j < m; ++j) {
        double* cj = cols.data() + j * n;
        const double alpha = dot(ci, ci, n);
        const double beta = dot(cj, cj, n);
        const double gamma = dot(ci, cj, n);
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= tol * std::sqrt(alpha) * std::sqrt(beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t r = 0; r < n; ++r) {
          const double x = ci[r];
          const double y = cj[r];
          ci[r] = c * x - s * y;
          cj[r] = s * x + c * y;
        }
        double* vj = vcols.data() + j * m;
        for (std::size_t r = 0; r < m; ++r) {
          const double x = vi[r];
          const double y = vj[r];
          vi[r] = c * x - s * y;
          vj[r] = s * x + c * y;
        }
      }
    }
    converged = !rotated;
  }
  if (!converged) {
    std::ostringstream os;
    os << "svd: one-sided Jacobi did not converge within " << options.max_sweeps
       << " sweeps (" << n << "x" << m << ")";
    throw Error(ErrorKind::kNotConverged, os.str());
  }

  std::vector<double> sigma(m);
  for (std::size_t j = 0; j < m; ++j) sigma[j] = norm2(cols.data() + j * n, n);
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  const double sigma_max = m > 0 ? sigma[order[0]] : 0.0;
  const double negligible = sigma_max * static_cast<double>(std::max(n, m)) * DBL_EPSILON;

  std::vector<double> ucols(m * n);
  std::vector<double> vsorted(m * m);
  std::vector<double> sorted_sigma(m);
  std::vector<bool> redo(m, false);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t j = order[k];
    sorted_sigma[k] = sigma[j];
    std::copy_n(vcols.data() + j * m, m, vsorted.data() + k * m);
    double* uk = ucols.data() + k * n;
    if (sigma[j] > negligible && sigma[j] > 0.0) {
      const double* cj = cols.data() + j * n;
      for (std::size_t r = 0; r < n; ++r) uk[r] = cj[r] / sigma[j];
    } else {
      redo[k] = true;
    }
  }
  complete_orthonormal(ucols, m, n, redo);

  // Sign convention: first nonzero of each u column is non-negative.
  for (std::size_t k = 0; k < m; ++k) {
    double* uk = ucols.data() + k * n;
    const double* first = std::find_if(uk, uk + n, [](double x) { return x != 0.0; });
    if (first != uk + n && *first < 0.0) {
      for (std::size_t r = 0; r < n; ++r) uk[r] = -uk[r];
      double* vk = vsorted.data() + k * m;
      for (std::size_t r = 0; r < m; ++r) vk[r] = -vk[r];
    }
  }

  SvdResult out;
  out.u = Matrix(n, m);
  out.v = Matrix(m, m);
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t r = 0; r < n; ++r) out.u(r, k) = ucols[k * n + r];
    for (std::size_t r = 0; r < m; ++r) out.v(r, k) = vsorted[k * m + r];
  }
  out.sigma = std::move(sorted_sigma);
  return out;
}

}  // namespace

SvdResult svd(const Matrix& w, const JacobiOptions& options) {
  if (w.empty()) throw Error(ErrorKind::kInvalidArgument, "svd: empty matrix");
  require_finite(w, "svd input");
  const std::size_t n = w.rows();
  const std::size_t m = w.cols();
  if (n >= m) {
    std::vector<double> cols(n * m);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) cols[j * n + i] = w(i, j);
    return jacobi_columns(std::move(cols), n, m, options);
  }
  // Wide input: decompose w^T = V S U^T, whose columns are the rows of w.
  std::vector<double> cols(w.data().begin(), w.data().end());
  SvdResult t = jacobi_columns(std::move(cols), m, n, options);
  SvdResult out;
  out.u = std::move(t.v);
  out.v = std::move(t.u);
  out.sigma = std::move(t.sigma);
  // Re-apply the sign convention, which was fixed on the other factor.
  for (std::size_t k = 0; k < out.sigma.size(); ++k) {
    std::size_t r = 0;
    while (r < n && out.u(r, k) == 0.0) ++r;
    if (r < n && out.u(r, k) < 0.0) {
      for (std::size_t i = 0; i < n; ++i) out.u(i, k) = -out.u(i, k);
      for (std::size_t i = 0; i < m; ++i) out.v(i, k) = -out.v(i, k);
    }
  }
  return out;
}

FactorPair truncate(const SvdResult& s, std::size_t k) {
  if (k < 1 || k > s.rank()) {
    std::ostringstream os;
    os << "truncate: rank " << k << " outside [1, " << s.rank() << "]";
    throw Error(ErrorKind::kInvalidArgument, os.str());
  }
  const std::size_t n = s.u.rows();
  const std::size_t m = s.v.rows();
  FactorPair f{Matrix(n, k), Matrix(k, m)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) f.a(i, c) = s.u(i, c) * s.sigma[c];
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < m; ++j) f.b(c, j) = s.v(j, c);
  return f;
}

std::size_t numerical_rank(const SvdResult& s, double rel_tol) {
  if (!(rel_tol > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "numerical_rank: rel_tol must be positive");
  }
  if (s.sigma.empty() || s.sigma.front() == 0.0) return 0;
  const double threshold = rel_tol * s.sigma.front();
  return static_cast<std::size_t>(std::count_if(
      s.sigma.begin(), s.sigma.end(), [&](double x) { return x > threshold; }));
}

std::size_t numerical_rank(const Matrix& w, double rel_tol) {
  if (!(rel_tol > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "numerical_rank: rel_tol must be positive");
  }
  return numerical_rank(svd(w), rel_tol);
}

double frobenius_error(const Matrix& w, const FactorPair& f) {
  if (f.a.cols() != f.b.rows() || f.a.rows() != w.rows() || f.b.cols() != w.cols()) {
    std::ostringstream os;
    os << "frobenius_error: factors " << f.a.rows() << "x" << f.a.cols() << " * "
       << f.b.rows() << "x" << f.b.cols() << " vs matrix " << w.rows() << "x" << w.cols();
    throw Error(ErrorKind::kShapeMismatch, os.str());
  }
  return frobenius_norm(w - f.product());
}

double cumulative_singular_fraction(const SvdResult& s, std::size_t k) {
  if (k < 1 || k > s.rank()) {
    std::ostringstream os;
    os << "cumulative_singular_fraction: k " << k << " outside [1, " << s.rank() << "]";
    throw Error(ErrorKind::kInvalidArgument, os.str());
  }
  const double total = std::accumulate(s.sigma.begin(), s.sigma.end(), 0.0);
  if (total == 0.0) return 1.0;
  const double head = std::accumulate(s.sigma.begin(), s.sigma.begin() + k, 0.0);
  return std::min(1.0, head / total);
}

double cumulative_singular_fraction(const Matrix& w, std::size_t k) {
  return cumulative_singular_fraction(svd(w), k);
}

}  // namespace lpaf
