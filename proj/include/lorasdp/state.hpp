#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "lorasdp/dense.hpp"

namespace lorasdp {

// Multipliers and penalty of the augmented Lagrangian
//   <C, X> + <A(X) - b, lambda> + rho/2 ||A(X) - b||^2.
struct DualVector {
  std::vector<double> lambda;
  double rho = 1.0;
};

// Low-rank iterate X = U V^T. In the first stage both halves hold R.
struct FactorPair {
  DenseMatrix u;
  DenseMatrix v;

  std::size_t n() const noexcept { return u.rows(); }
  std::size_t rank() const noexcept { return u.cols(); }
};

struct TraceRecord {
  std::string stage;  // "alm" or "admm"
  std::size_t iter = 0;
  double objective = 0.0;
  double err1 = 0.0;
  double grad_or_cg_resid = 0.0;
  double rho = 0.0;
  std::size_t rank = 0;
  double elapsed_s = 0.0;
};

using Clock = std::chrono::steady_clock;

struct Deadline {
  Clock::time_point start = Clock::now();
  double limit_s = 1e300;

  double elapsed() const {
    return std::chrono::duration<double>(Clock::now() - start).count();
  }
  bool expired() const { return elapsed() > limit_s; }
};

// ---------------------------------------------------------------------------
// Rank policy
// ---------------------------------------------------------------------------

// Largest rank worth using: an optimal solution of rank r with
// r(r+1)/2 <= m always exists.
inline std::size_t rank_cap(std::size_t m) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(2.0 * m))));
}

inline std::size_t initial_rank(std::size_t m) {
  const auto logr = static_cast<std::size_t>(std::ceil(std::log2(2.0 * m + 1.0)));
  return std::min(std::max<std::size_t>(2, logr), rank_cap(m));
}

inline std::size_t update_rank(std::size_t r, std::size_t m) {
  const auto grown = static_cast<std::size_t>(std::ceil(1.5 * static_cast<double>(r)));
  return std::min(grown, rank_cap(m));
}

// Grows `f` to `new_rank` columns, filling the new ones with small normal
// entries (stddev 1e-3/sqrt(n)).
inline void extend_rank(DenseMatrix& f, std::size_t new_rank, std::mt19937_64& rng) {
  if (new_rank <= f.cols()) return;
  const std::size_t old = f.cols();
  f.append_cols(new_rank - old);
  std::normal_distribution<double> dist(0.0, 1e-3 / std::sqrt(static_cast<double>(f.rows())));
  for (std::size_t c = old; c < new_rank; ++c)
    for (double& x : f.col(c)) x = dist(rng);
}

}  // namespace lorasdp
