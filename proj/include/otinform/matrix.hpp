#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace otinform {

/// Dense row-major matrix of doubles. The only allocation-bearing type the
/// numeric kernels deal with; everything else is built on top of it.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows),
        cols_(cols),
        data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("Matrix: negative shape");
  }

  static Matrix zeros(int rows, int cols) { return Matrix(rows, cols, 0.0); }
  static Matrix constant(int rows, int cols, double v) { return Matrix(rows, cols, v); }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const int r = static_cast<int>(rows.size());
    const int c = r > 0 ? static_cast<int>(rows.begin()->size()) : 0;
    Matrix m(r, c);
    int i = 0;
    for (const auto& row : rows) {
      if (static_cast<int>(row.size()) != c)
        throw std::invalid_argument("Matrix::from_rows: ragged rows");
      int j = 0;
      for (double v : row) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(int i) { return data_.data() + static_cast<std::size_t>(i) * cols_; }
  const double* row(int i) const { return data_.data() + static_cast<std::size_t>(i) * cols_; }
  std::span<const double> row_span(int i) const { return {row(i), static_cast<std::size_t>(cols_)}; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  double max_value() const {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : data_) m = std::max(m, v);
    return m;
  }

  double sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

/// Number of worker threads for row-parallel kernels; governed by the
/// OTINFORM_THREADS environment variable, default 1. Each row is reduced by a
/// single thread in a fixed order, so results are identical for any setting.
inline int thread_count() {
  static const int n = [] {
    const char* env = std::getenv("OTINFORM_THREADS");
    if (env == nullptr) return 1;
    const long v = std::strtol(env, nullptr, 10);
    if (v < 1) return 1;
    const long hw = static_cast<long>(std::thread::hardware_concurrency());
    return static_cast<int>(std::min(v, std::max(hw, 1L)));
  }();
  return n;
}

/// Runs fn(begin, end) over a partition of [0, n) across worker threads.
template <typename Fn>
void parallel_rows(int n, Fn&& fn) {
  const int workers = std::min(thread_count(), std::max(n, 1));
  if (workers <= 1 || n < 2 * workers) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  const int chunk = (n + workers - 1) / workers;
  for (int w = 1; w < workers; ++w) {
    const int b = std::min(w * chunk, n);
    const int e = std::min(b + chunk, n);
    if (b < e) pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  fn(0, std::min(chunk, n));
  for (auto& t : pool) t.join();
}

/// C = A * B, A: n x k, B: k x m.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Matrix c(a.rows(), b.cols());
  const int k = a.cols(), m = b.cols();
  parallel_rows(a.rows(), [&](int r0, int r1) {
    for (int i = r0; i < r1; ++i) {
      const double* ai = a.row(i);
      double* ci = c.row(i);
      for (int p = 0; p < k; ++p) {
        const double av = ai[p];
        const double* bp = b.row(p);
        for (int j = 0; j < m; ++j) ci[j] += av * bp[j];
      }
    }
  });
  return c;
}

/// C = A * B^T, A: n x k, B: m x k.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  Matrix c(a.rows(), b.rows());
  const int k = a.cols(), m = b.rows();
  parallel_rows(a.rows(), [&](int r0, int r1) {
    for (int i = r0; i < r1; ++i) {
      const double* ai = a.row(i);
      double* ci = c.row(i);
      for (int j = 0; j < m; ++j) {
        const double* bj = b.row(j);
        double s = 0.0;
        for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
        ci[j] = s;
      }
    }
  });
  return c;
}

/// C = A^T * B, A: k x n, B: k x m.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("matmul_tn: inner dimension mismatch");
  Matrix c(a.cols(), b.cols());
  const int k = a.rows(), m = b.cols();
  for (int p = 0; p < k; ++p) {
    const double* ap = a.row(p);
    const double* bp = b.row(p);
    for (int i = 0; i < c.rows(); ++i) {
      const double av = ap[i];
      double* ci = c.row(i);
      for (int j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

/// log(sum_i exp(x_i)) with max subtraction; -inf for an empty or all -inf input.
inline double logsumexp(std::span<const double> x) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : x) mx = std::max(mx, v);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

}  // namespace otinform
