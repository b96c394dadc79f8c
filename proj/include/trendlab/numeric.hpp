#pragma once

// Small dense kernels over row-major buffers. Sizes here are tiny (hidden
// dimensions of a few tens), so plain loops are enough.

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace trendlab::numeric {

struct MatrixView {
  double* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;

  double& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) const { return {data + r * cols, cols}; }
  std::size_t size() const { return rows * cols; }
};

struct ConstMatrixView {
  const double* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;

  ConstMatrixView() = default;
  ConstMatrixView(const double* d, std::size_t r, std::size_t c) : data(d), rows(r), cols(c) {}
  ConstMatrixView(const MatrixView& m) : data(m.data), rows(m.rows), cols(m.cols) {}  // NOLINT

  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data + r * cols, cols}; }
  std::size_t size() const { return rows * cols; }
};

/// Owning row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  MatrixView view() { return {data_.data(), rows_, cols_}; }
  ConstMatrixView view() const { return {data_.data(), rows_, cols_}; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// y += W x
inline void gemv_acc(ConstMatrixView w, std::span<const double> x, std::span<double> y) {
  assert(x.size() == w.cols && y.size() == w.rows);
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double* wr = w.data + r * w.cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < w.cols; ++c) acc += wr[c] * x[c];
    y[r] += acc;
  }
}

/// y += W^T x
inline void gemv_t_acc(ConstMatrixView w, std::span<const double> x, std::span<double> y) {
  assert(x.size() == w.rows && y.size() == w.cols);
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double* wr = w.data + r * w.cols;
    const double xr = x[r];
    if (xr == 0.0) continue;
    for (std::size_t c = 0; c < w.cols; ++c) y[c] += wr[c] * xr;
  }
}

/// W += a b^T
inline void outer_acc(std::span<const double> a, std::span<const double> b, MatrixView w) {
  assert(a.size() == w.rows && b.size() == w.cols);
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double ar = a[r];
    if (ar == 0.0) continue;
    double* wr = w.data + r * w.cols;
    for (std::size_t c = 0; c < w.cols; ++c) wr[c] += ar * b[c];
  }
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Numerically stable softmax.
template <std::size_t N>
std::array<double, N> softmax(const std::array<double, N>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  std::array<double, N> out{};
  double s = 0.0;
  for (std::size_t k = 0; k < N; ++k) {
    out[k] = std::exp(z[k] - m);
    s += out[k];
  }
  for (auto& v : out) v /= s;
  return out;
}

inline double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

/// Median with linear interpolation between the two middle values.
double median(std::vector<double> v);

/// Quantile with linear interpolation between order statistics
/// (position q * (n - 1)).
double quantile_sorted(std::span<const double> sorted, double q);
double quantile(std::vector<double> v, double q);

}  // namespace trendlab::numeric
