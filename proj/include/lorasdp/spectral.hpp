#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "lorasdp/dense.hpp"
#include "lorasdp/errors.hpp"
#include "lorasdp/operators.hpp"

namespace lorasdp {

using ApplyFn = std::function<void(std::span<const double>, std::span<double>)>;

struct MinEigResult {
  double theta = 0.0;     // smallest Ritz value
  double residual = 0.0;  // ||S v - theta v|| for the unit Ritz vector
  std::size_t steps = 0;
  bool verified = false;
  bool restarted = false;
};

namespace detail {

// Number of eigenvalues of the symmetric tridiagonal (a, b) below x.
inline std::size_t sturm_count(std::span<const double> a, std::span<const double> b, double x) {
  std::size_t count = 0;
  double d = 1.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double off = i == 0 ? 0.0 : b[i - 1] * b[i - 1];
    d = (a[i] - x) - (i == 0 ? 0.0 : off / d);
    if (d == 0.0) d = -std::numeric_limits<double>::epsilon() * (std::abs(a[i]) + 1e-300);
    if (d < 0.0) ++count;
  }
  return count;
}

inline double tridiag_min_eig(std::span<const double> a, std::span<const double> b) {
  double lo = std::numeric_limits<double>::max();
  double hi = std::numeric_limits<double>::lowest();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double r = (i > 0 ? std::abs(b[i - 1]) : 0.0) + (i + 1 < a.size() ? std::abs(b[i]) : 0.0);
    lo = std::min(lo, a[i] - r);
    hi = std::max(hi, a[i] + r);
  }
  for (int it = 0; it < 200 && hi - lo > 2.0 * std::numeric_limits<double>::epsilon() *
                                                std::max(std::abs(lo), std::abs(hi)) + 1e-300;
       ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (sturm_count(a, b, mid) >= 1)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

// Unit eigenvector of the tridiagonal for eigenvalue theta by inverse
// iteration (Gaussian elimination with partial pivoting).
inline std::vector<double> tridiag_eigvec(std::span<const double> a, std::span<const double> b,
                                          double theta) {
  const std::size_t k = a.size();
  std::vector<double> x(k, 1.0);
  if (k == 1) return x;
  const double scale_t = std::max(1.0, std::abs(theta));
  const double shift = theta - 1e-10 * scale_t;
  for (int pass = 0; pass < 3; ++pass) {
    // Rows carry up to three nonzeros (diag, super, super-super) after pivoting.
    std::vector<double> d(k), u1(k, 0.0), u2(k, 0.0), rhs = x;
    std::vector<double> sub(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      d[i] = a[i] - shift;
      if (i + 1 < k) u1[i] = b[i];
      if (i + 1 < k) sub[i + 1] = b[i];
    }
    for (std::size_t i = 0; i + 1 < k; ++i) {
      if (std::abs(sub[i + 1]) > std::abs(d[i])) {
        std::swap(d[i], sub[i + 1]);
        std::swap(u1[i], d[i + 1]);
        std::swap(u2[i], u1[i + 1]);
        std::swap(rhs[i], rhs[i + 1]);
      }
      if (d[i] == 0.0) d[i] = 1e-300;
      const double l = sub[i + 1] / d[i];
      d[i + 1] -= l * u1[i];
      u1[i + 1] -= l * u2[i];
      rhs[i + 1] -= l * rhs[i];
    }
    if (d[k - 1] == 0.0) d[k - 1] = 1e-300;
    for (std::size_t i = k; i-- > 0;) {
      double s = rhs[i];
      if (i + 1 < k) s -= u1[i] * x[i + 1];
      if (i + 2 < k) s -= u2[i] * x[i + 2];
      x[i] = s / d[i];
    }
    const double nrm = norm2(x);
    if (!(nrm > 0.0) || !std::isfinite(nrm)) {
      std::fill(x.begin(), x.end(), 0.0);
      x[0] = 1.0;
      break;
    }
    scale(1.0 / nrm, x);
  }
  return x;
}

inline void orthogonalize(std::span<double> w, const std::vector<std::vector<double>>& basis) {
  for (int pass = 0; pass < 2; ++pass)
    for (const auto& q : basis) axpy(-dot(w, q), q, w);
}

inline void random_unit(std::span<double> v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  for (double& x : v) x = dist(rng);
  scale(1.0 / norm2(v), v);
}

struct LanczosRun {
  double theta = 0.0;
  std::vector<double> ritz;
  double residual = 0.0;
  std::size_t steps = 0;
};

inline LanczosRun lanczos_once(const ApplyFn& apply, std::size_t n, std::vector<double> start,
                               double tol, std::uint64_t seed) {
  const std::size_t k_max = std::min<std::size_t>(n, 300);
  std::vector<std::vector<double>> basis;
  basis.reserve(k_max);
  std::vector<double> alpha, beta;
  std::vector<double> w(n);
  std::vector<double> q = std::move(start);
  scale(1.0 / norm2(q), q);
  LanczosRun run;
  std::uint64_t fresh = seed;

  auto ritz_estimate = [&](double& theta) {
    theta = tridiag_min_eig(alpha, beta);
    const auto y = tridiag_eigvec(alpha, beta, theta);
    const double last_beta = beta.size() == alpha.size() ? beta.back() : 0.0;
    return std::abs(last_beta * y.back());
  };

  while (basis.size() < k_max) {
    basis.push_back(q);
    apply(basis.back(), w);
    const double a = dot(w, basis.back());
    alpha.push_back(a);
    orthogonalize(w, basis);
    double b = norm2(w);
    if (basis.size() == k_max) {
      beta.push_back(b);
      break;
    }
    // Invariant subspace found: continue from a fresh direction.
    if (b <= 1e-12 * (std::abs(a) + 1.0)) {
      random_unit(w, ++fresh * 0x9e3779b97f4a7c15ULL);
      orthogonalize(w, basis);
      const double nw = norm2(w);
      if (nw <= 1e-12) {
        beta.push_back(0.0);
        break;
      }
      scale(1.0 / nw, w);
      b = 0.0;
      beta.push_back(b);
      q = w;
      continue;
    }
    beta.push_back(b);
    q.assign(w.begin(), w.end());
    scale(1.0 / b, q);
    if (basis.size() % 10 == 0) {
      double theta = 0.0;
      if (ritz_estimate(theta) <= 0.1 * tol * (1.0 + std::abs(theta))) break;
    }
  }

  beta.resize(alpha.size() - 1);
  run.theta = tridiag_min_eig(alpha, beta);
  const auto y = tridiag_eigvec(alpha, beta, run.theta);
  run.ritz.assign(n, 0.0);
  for (std::size_t j = 0; j < basis.size(); ++j) axpy(y[j], basis[j], run.ritz);
  scale(1.0 / norm2(run.ritz), run.ritz);
  apply(run.ritz, w);
  axpy(-run.theta, run.ritz, w);
  run.residual = norm2(w);
  run.steps = basis.size();
  return run;
}

}  // namespace detail

// Smallest eigenvalue of the self-adjoint operator `apply` by Lanczos with
// full reorthogonalization. One restart from the Ritz vector (perturbed with
// a fresh seed) when the residual exceeds tol (1 + |theta|).
inline MinEigResult min_eig(const ApplyFn& apply, std::size_t n, double tol = 1e-6,
                            std::uint64_t seed = 1) {
  require(n > 0, "min_eig: empty operator");
  require(tol > 0.0, "min_eig: tolerance must be positive");
  std::vector<double> start(n);
  detail::random_unit(start, seed);
  auto run = detail::lanczos_once(apply, n, std::move(start), tol, seed);
  MinEigResult out;
  out.steps = run.steps;
  if (run.residual > tol * (1.0 + std::abs(run.theta))) {
    std::vector<double> kick(n);
    detail::random_unit(kick, seed ^ 0x5851f42d4c957f2dULL);
    std::vector<double> restart = run.ritz;
    axpy(1e-3, kick, restart);
    auto again = detail::lanczos_once(apply, n, std::move(restart), tol, seed + 1);
    out.steps += again.steps;
    out.restarted = true;
    if (again.theta < run.theta || again.residual < run.residual) run = std::move(again);
  }
  out.theta = run.theta;
  out.residual = run.residual;
  out.verified = run.residual <= tol * (1.0 + std::abs(run.theta));
  return out;
}

struct Err2Result {
  double value = 0.0;
  double sigma_min = 0.0;
  bool verified = false;
};

// |min(0, sigma_min(C - A*(y)))| / (1 + ||vec C||_1) for a dual vector y in
// the usual sign (y = -lambda for the solver's internal multiplier). C is
// taken at the operator's own scaling.
inline Err2Result err2(const SdpOperators& ops, std::span<const double> y, double tol = 1e-6,
                       std::uint64_t seed = 1) {
  require(y.size() == ops.m(), "err2: dual vector length mismatch");
  std::vector<double> neg(y.begin(), y.end());
  scale(-1.0, neg);
  const SMatrix s = ops.assemble(neg);
  DenseMatrix in(ops.n(), 1);
  DenseMatrix out(ops.n(), 1);
  const ApplyFn apply = [&](std::span<const double> x, std::span<double> v) {
    std::copy(x.begin(), x.end(), in.flat().begin());
    s.multiply(in, out);
    std::copy(out.flat().begin(), out.flat().end(), v.begin());
  };
  const auto eig = min_eig(apply, ops.n(), tol, seed);
  Err2Result r;
  r.sigma_min = eig.theta;
  r.verified = eig.verified;
  r.value = std::abs(std::min(0.0, eig.theta)) / (1.0 + std::abs(ops.c_scale()) * ops.c_norm1());
  return r;
}

}  // namespace lorasdp
