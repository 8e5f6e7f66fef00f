#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include "lorasdp/errors.hpp"

namespace lorasdp {

// ---------------------------------------------------------------------------
// Threading
//
// Only element-wise kernels (every output written by exactly one worker) are
// parallelized, so results never depend on the thread count. Reductions stay
// sequential.
// ---------------------------------------------------------------------------

namespace detail {
inline int& thread_limit() {
  static int limit = std::max(1u, std::thread::hardware_concurrency());
  return limit;
}
}  // namespace detail

inline void set_num_threads(int t) { detail::thread_limit() = std::max(1, t); }
inline int num_threads() { return detail::thread_limit(); }

// Calls fn(begin, end) over a partition of [0, n). `work_per_item` is a rough
// flop count used to decide whether spawning threads is worth it.
template <class Fn>
void parallel_for(std::size_t n, std::size_t work_per_item, Fn&& fn) {
  constexpr std::size_t kMinWorkPerThread = 1 << 16;
  const std::size_t total = n * std::max<std::size_t>(work_per_item, 1);
  std::size_t workers = std::min<std::size_t>(num_threads(), total / kMinWorkPerThread);
  workers = std::min(workers, n);
  if (workers <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t b = w * chunk;
    const std::size_t e = std::min(n, b + chunk);
    if (b < e) pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  fn(std::size_t{0}, std::min(n, chunk));
}

// ---------------------------------------------------------------------------
// DenseMatrix: column-major rows x cols block of doubles. Used for the n x r
// factors and everything shaped like them.
// ---------------------------------------------------------------------------

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[j * rows_ + i]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[j * rows_ + i]; }

  std::span<double> col(std::size_t j) { return {data_.data() + j * rows_, rows_}; }
  std::span<const double> col(std::size_t j) const { return {data_.data() + j * rows_, rows_}; }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  void set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

  // Appends `extra` zero columns; existing columns keep their values.
  void append_cols(std::size_t extra) {
    data_.resize(rows_ * (cols_ + extra), 0.0);
    cols_ += extra;
  }

  bool same_shape(const DenseMatrix& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Row-major copy of `a`: out[i * cols + j] = a(i, j).
inline void copy_rows(const DenseMatrix& a, std::vector<double>& out) {
  const std::size_t n = a.rows(), r = a.cols();
  out.resize(n * r);
  for (std::size_t j = 0; j < r; ++j) {
    const double* aj = a.col(j).data();
    for (std::size_t i = 0; i < n; ++i) out[i * r + j] = aj[i];
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double dot(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.same_shape(b), "dot: shape mismatch");
  return dot(a.flat(), b.flat());
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }
inline double frobenius(const DenseMatrix& a) { return norm2(a.flat()); }

inline double norm1(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += std::abs(v);
  return s;
}

inline double norm_inf(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s = std::max(s, std::abs(v));
  return s;
}

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require(x.size() == y.size(), "axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void axpy(double alpha, const DenseMatrix& x, DenseMatrix& y) {
  require(x.same_shape(y), "axpy: shape mismatch");
  axpy(alpha, x.flat(), y.flat());
}

inline void scale(double alpha, std::span<double> x) {
  for (double& v : x) v *= alpha;
}

inline bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

inline DenseMatrix random_normal(std::size_t rows, std::size_t cols, double stddev,
                                 std::mt19937_64& rng) {
  DenseMatrix m(rows, cols);
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : m.flat()) v = dist(rng);
  return m;
}

}  // namespace lorasdp
