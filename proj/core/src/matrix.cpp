#include "lpaf/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lpaf/error.hpp"
#include "lpaf/rng.hpp"

namespace lpaf {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    std::ostringstream os;
    os << "matrix data length " << data_.size() << " does not match shape " << rows_ << "x"
       << cols_;
    throw Error(ErrorKind::kShapeMismatch, os.str());
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n = rows.size();
  const std::size_t m = n == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(n * m);
  for (const auto& r : rows) {
    if (r.size() != m) throw Error(ErrorKind::kShapeMismatch, "ragged row list");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Matrix(n, m, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

Matrix Matrix::diagonal(std::span<const double> values) {
  Matrix out(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out(i, i) = values[i];
  return out;
}

Matrix Matrix::random_normal(std::size_t rows, std::size_t cols, Rng& rng, double stddev) {
  Matrix out(rows, cols);
  for (double& x : out.data_) x = stddev * rng.normal();
  return out;
}

Matrix Matrix::random_uniform(std::size_t rows, std::size_t cols, Rng& rng, double lo,
                              double hi) {
  Matrix out(rows, cols);
  for (double& x : out.data_) x = rng.uniform(lo, hi);
  return out;
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

// The three products below are written as row-axpy loops so the innermost
// loop is contiguous in both operands.

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorKind::kShapeMismatch,
                "matmul " + shape_str(a) + " * " + shape_str(b));
  }
  const std::size_t n = a.rows();
  const std::size_t inner = a.cols();
  const std::size_t m = b.cols();
  Matrix c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c.row(i).data();
    const double* ai = a.row(i).data();
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b.row(k).data();
      for (std::size_t j = 0; j < m; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorKind::kShapeMismatch,
                "matmul_nt " + shape_str(a) + " * (" + shape_str(b) + ")^T");
  }
  return matmul(a, transpose(b));
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw Error(ErrorKind::kShapeMismatch,
                "matmul_tn (" + shape_str(a) + ")^T * " + shape_str(b));
  }
  const std::size_t n = a.cols();
  const std::size_t m = b.cols();
  Matrix c(n, m);
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* ak = a.row(k).data();
    const double* bk = b.row(k).data();
    for (std::size_t i = 0; i < n; ++i) {
      const double aki = ak[i];
      if (aki == 0.0) continue;
      double* ci = c.row(i).data();
      for (std::size_t j = 0; j < m; ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix c(a.rows(), a.cols());
  auto cd = c.data();
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] = ad[i] * bd[i];
  return c;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  Matrix c = a;
  c += b;
  return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  Matrix c = a;
  auto cd = c.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] -= bd[i];
  return c;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix c = a;
  for (double& x : c.data()) x *= s;
  return c;
}

Matrix& operator+=(Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += bd[i];
  return a;
}

Matrix scale_rows(std::span<const double> d, const Matrix& a) {
  if (d.size() != a.rows()) {
    throw Error(ErrorKind::kShapeMismatch, "scale_rows: diagonal length " +
                                               std::to_string(d.size()) + " vs " +
                                               shape_str(a));
  }
  Matrix c = a;
  for (std::size_t i = 0; i < c.rows(); ++i)
    for (double& x : c.row(i)) x *= d[i];
  return c;
}

double frobenius_norm(const Matrix& a) {
  // Scaled accumulation avoids overflow for large entries.
  double scale = 0.0;
  for (double x : a.data()) scale = std::max(scale, std::abs(x));
  if (scale == 0.0) return 0.0;
  double sum = 0.0;
  for (double x : a.data()) {
    const double y = x / scale;
    sum += y * y;
  }
  return scale * std::sqrt(sum);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double out = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    out = std::max(out, std::abs(a.data()[i] - b.data()[i]));
  return out;
}

std::size_t count_nonzeros(const Matrix& a) {
  return static_cast<std::size_t>(
      std::count_if(a.data().begin(), a.data().end(), [](double x) { return x != 0.0; }));
}

void require_same_shape(const Matrix& a, const Matrix& b, std::string_view what) {
  if (!a.same_shape(b)) {
    throw Error(ErrorKind::kShapeMismatch,
                std::string(what) + ": " + shape_str(a) + " vs " + shape_str(b));
  }
}

void require_finite(const Matrix& a, std::string_view what) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (!std::isfinite(a(i, j))) {
        std::ostringstream os;
        os << what << ": non-finite entry at (" << i << ", " << j << ")";
        throw Error(ErrorKind::kNonFinite, os.str());
      }
    }
  }
}

}  // namespace lpaf
