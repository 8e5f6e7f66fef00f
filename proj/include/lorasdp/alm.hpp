#pragma once

// First stage: Burer-Monteiro augmented Lagrangian on X = R R^T,
//   L(R) = <C, RR^T> + <A(RR^T) - b, lambda> + rho/2 ||A(RR^T) - b||^2,
// minimized by L-BFGS with an exact (quartic) line search, followed by the
// dual step lambda += rho (A(RR^T) - b).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "lorasdp/dense.hpp"
#include "lorasdp/errors.hpp"
#include "lorasdp/operators.hpp"
#include "lorasdp/state.hpp"

namespace lorasdp {

class AlmDiverged : public Diverged {
 public:
  AlmDiverged(const std::string& what, DenseMatrix last)
      : Diverged(what), last_(std::move(last)) {}
  const DenseMatrix& last_iterate() const noexcept { return last_; }

 private:
  DenseMatrix last_;
};

// ---------------------------------------------------------------------------
// Lagrangian and gradient
// ---------------------------------------------------------------------------

struct AlmWorkspace {
  OpWorkspace op;
  SMatrix s;
  std::vector<double> y;
};

struct AlmEval {
  double lagrangian = 0.0;
  double objective = 0.0;         // c_scale <C, RR^T>
  std::vector<double> residual;   // A(RR^T) - b
  DenseMatrix grad;
};

inline double lagrangian_value(double objective, std::span<const double> residual,
                               const DualVector& dual) {
  return objective + dot(residual, dual.lambda) + 0.5 * dual.rho * dot(residual, residual);
}

inline void residual_of(const DenseMatrix& u, const DenseMatrix& v, const SdpOperators& ops,
                        std::vector<double>& out, OpWorkspace& ws) {
  out.resize(ops.m());
  ops.constraint_values(u, v, out, ws);
  axpy(-1.0, ops.b(), out);
}

// Value and gradient 2 S R with S = C + A*(lambda + rho (A(RR^T) - b)).
inline void evaluate_alm(const DenseMatrix& r, const DualVector& dual, const SdpOperators& ops,
                         AlmEval& out, AlmWorkspace& ws) {
  residual_of(r, r, ops, out.residual, ws.op);
  out.objective = ops.objective(r, r);
  out.lagrangian = lagrangian_value(out.objective, out.residual, dual);
  ws.y.assign(dual.lambda.begin(), dual.lambda.end());
  axpy(dual.rho, out.residual, ws.y);
  ops.assemble(ws.y, std::nullopt, 1.0, ws.s, ws.op);
  ws.s.multiply(r, out.grad);
  scale(2.0, out.grad.flat());
}

inline DenseMatrix grad_R(const DenseMatrix& r, const DualVector& dual, const SdpOperators& ops) {
  require(r.rows() == ops.n() && dual.lambda.size() == ops.m(), "grad_R: dimension mismatch");
  AlmEval e;
  AlmWorkspace ws;
  evaluate_alm(r, dual, ops, e, ws);
  return std::move(e.grad);
}

inline double alm_lagrangian(const DenseMatrix& r, const DualVector& dual, const SdpOperators& ops) {
  OpWorkspace ws;
  std::vector<double> res;
  residual_of(r, r, ops, res, ws);
  return lagrangian_value(ops.objective(r, r), res, dual);
}

// ---------------------------------------------------------------------------
// L-BFGS
// ---------------------------------------------------------------------------

struct LbfgsPair {
  DenseMatrix s;
  DenseMatrix y;
  double beta = 0.0;  // 1 / <y, s>
};

class LbfgsHistory {
 public:
  explicit LbfgsHistory(std::size_t capacity = 8) : capacity_(capacity) {}

  // Stores the pair unless it violates the curvature condition <y,s> > 0.
  bool push(DenseMatrix s, DenseMatrix y) {
    const double ys = dot(y, s);
    if (!(ys > 0.0) || !std::isfinite(ys)) return false;
    if (capacity_ == 0) return false;
    if (pairs_.size() == capacity_) pairs_.pop_front();
    pairs_.push_back({std::move(s), std::move(y), 1.0 / ys});
    return true;
  }

  void clear() { pairs_.clear(); }
  std::size_t size() const noexcept { return pairs_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  const LbfgsPair& operator[](std::size_t t) const { return pairs_[t]; }  // 0 = oldest

 private:
  std::size_t capacity_;
  std::deque<LbfgsPair> pairs_;
};

// Two-loop recursion with identity initial scaling; returns -H g.
inline DenseMatrix lbfgs_direction(const DenseMatrix& g, const LbfgsHistory& hist) {
  DenseMatrix d = g;
  scale(-1.0, d.flat());
  const std::size_t k = hist.size();
  std::vector<double> alpha(k);
  for (std::size_t t = k; t-- > 0;) {
    const auto& p = hist[t];
    alpha[t] = p.beta * dot(p.s, d);
    axpy(-alpha[t], p.y, d);
  }
  for (std::size_t t = 0; t < k; ++t) {
    const auto& p = hist[t];
    axpy(alpha[t] - p.beta * dot(p.y, d), p.s, d);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Exact line search
// ---------------------------------------------------------------------------

// L(R + tau D) - L(R) = a1 tau^4 + a2 tau^3 + a3 tau^2 + a4 tau.
struct LineSearchPoly {
  double a1 = 0.0;
  double a2 = 0.0;
  double a3 = 0.0;
  double a4 = 0.0;
  double p1 = 0.0;  // <C, RD^T + DR^T>
  double p2 = 0.0;  // <C, DD^T>
  std::vector<double> q0;  // b - A(RR^T)
  std::vector<double> q1;  // A(RD^T + DR^T)
  std::vector<double> q2;  // A(DD^T)

  double eval(double tau) const { return (((a1 * tau + a2) * tau + a3) * tau + a4) * tau; }
};

// `residual` is A(RR^T) - b at R. The coefficient algebra below is written
// for the b - A(X) multiplier convention, hence the sign flip on lambda.
inline LineSearchPoly line_search_poly(const DenseMatrix& r, const DenseMatrix& d,
                                       std::span<const double> residual, const DualVector& dual,
                                       const SdpOperators& ops, OpWorkspace& ws) {
  require(r.same_shape(d), "line_search_poly: shape mismatch");
  LineSearchPoly poly;
  const std::size_t m = ops.m();
  poly.q0.assign(residual.begin(), residual.end());
  scale(-1.0, poly.q0);
  // A is symmetric, so A(RD^T) = A(DR^T) and <C, RD^T> = <C, DR^T>.
  poly.q1.resize(m);
  ops.constraint_values(r, d, poly.q1, ws);
  scale(2.0, poly.q1);
  poly.q2.resize(m);
  ops.constraint_values(d, d, poly.q2, ws);
  poly.p1 = 2.0 * ops.objective(r, d);
  poly.p2 = ops.objective(d, d);

  const double rho = dual.rho;
  double w_q1 = 0.0;  // (lambda_app + rho q0)^T q1
  double w_q2 = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double w = -dual.lambda[i] + rho * poly.q0[i];
    w_q1 += w * poly.q1[i];
    w_q2 += w * poly.q2[i];
  }
  poly.a1 = 0.5 * rho * dot(poly.q2, poly.q2);
  poly.a2 = rho * dot(poly.q1, poly.q2);
  poly.a3 = poly.p2 - w_q2 + 0.5 * rho * dot(poly.q1, poly.q1);
  poly.a4 = poly.p1 - w_q1;
  return poly;
}

inline LineSearchPoly line_search_poly(const DenseMatrix& r, const DenseMatrix& d,
                                       const DualVector& dual, const SdpOperators& ops) {
  OpWorkspace ws;
  std::vector<double> res;
  residual_of(r, r, ops, res, ws);
  return line_search_poly(r, d, res, dual, ops, ws);
}

struct CubicStep {
  double tau = 0.0;
  bool zero_direction = false;  // polynomial identically zero
  bool unbounded = false;       // no finite minimizer along the ray
};

namespace detail {

// Real roots of c3 t^3 + c2 t^2 + c1 t + c0 with c3 != 0.
inline std::vector<double> cubic_roots(double c3, double c2, double c1, double c0) {
  const double A = c2 / c3;
  const double B = c1 / c3;
  const double C = c0 / c3;
  const double p = B - A * A / 3.0;
  const double q = 2.0 * A * A * A / 27.0 - A * B / 3.0 + C;
  const double shift = -A / 3.0;
  std::vector<double> roots;
  const double disc = 0.25 * q * q + p * p * p / 27.0;
  if (p == 0.0 && q == 0.0) {
    roots.push_back(shift);
  } else if (disc > 0.0) {
    const double sq = std::sqrt(disc);
    roots.push_back(std::cbrt(-0.5 * q + sq) + std::cbrt(-0.5 * q - sq) + shift);
  } else {
    const double m = 2.0 * std::sqrt(-p / 3.0);
    const double arg = std::clamp(3.0 * q / (p * m), -1.0, 1.0);
    const double theta = std::acos(arg) / 3.0;
    for (int k = 0; k < 3; ++k)
      roots.push_back(m * std::cos(theta - 2.0 * std::numbers::pi * k / 3.0) + shift);
  }
  // Newton polish against cancellation in the closed form.
  for (double& t : roots) {
    for (int it = 0; it < 3; ++it) {
      const double f = ((c3 * t + c2) * t + c1) * t + c0;
      const double df = (3.0 * c3 * t + 2.0 * c2) * t + c1;
      if (df == 0.0) break;
      const double next = t - f / df;
      const double fn = ((c3 * next + c2) * next + c1) * next + c0;
      if (!(std::abs(fn) < std::abs(f))) break;
      t = next;
    }
  }
  return roots;
}

}  // namespace detail

// Minimizer of the quartic a1 t^4 + a2 t^3 + a3 t^2 + a4 t over the real
// stationary points and t = 0. Ties (within 1e-12) go to the smallest |t|,
// then to the positive one.
inline CubicStep solve_cubic_min(const LineSearchPoly& poly) {
  CubicStep step;
  const double a1 = poly.a1, a2 = poly.a2, a3 = poly.a3, a4 = poly.a4;
  if (a1 == 0.0 && a2 == 0.0 && a3 == 0.0 && a4 == 0.0) {
    step.zero_direction = true;
    return step;
  }
  std::vector<double> cand{0.0};
  if (a1 != 0.0) {
    for (double t : detail::cubic_roots(4.0 * a1, 3.0 * a2, 2.0 * a3, a4)) cand.push_back(t);
  } else if (a2 != 0.0) {
    // Cubic along the ray: unbounded below; keep its local minimum if any.
    step.unbounded = true;
    const double qa = 3.0 * a2, qb = 2.0 * a3, qc = a4;
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      for (double t : {(-qb + sq) / (2.0 * qa), (-qb - sq) / (2.0 * qa)})
        if (6.0 * a2 * t + 2.0 * a3 > 0.0) cand.push_back(t);
    }
  } else if (a3 > 0.0) {
    cand.push_back(-a4 / (2.0 * a3));
  } else if (a3 == 0.0) {
    step.unbounded = a4 != 0.0;  // linear
  } else {
    step.unbounded = true;  // concave parabola
  }

  double best_t = 0.0;
  double best_v = 0.0;
  bool have = false;
  for (double t : cand) {
    if (!std::isfinite(t)) continue;
    const double v = poly.eval(t);
    if (!have) {
      best_t = t, best_v = v, have = true;
      continue;
    }
    const double tol = 1e-12 * std::max({1.0, std::abs(v), std::abs(best_v)});
    if (v < best_v - tol) {
      best_t = t, best_v = v;
    } else if (std::abs(v - best_v) <= tol) {
      const bool smaller = std::abs(t) < std::abs(best_t) - 1e-15 * std::max(1.0, std::abs(t));
      const bool same_mag = std::abs(std::abs(t) - std::abs(best_t)) <=
                            1e-15 * std::max(1.0, std::abs(t));
      if (smaller || (same_mag && t > best_t)) best_t = t, best_v = v;
    }
  }
  step.tau = best_t;
  return step;
}

// ---------------------------------------------------------------------------
// Inner and outer loops
// ---------------------------------------------------------------------------

struct AlmConfig {
  std::size_t lbfgs_memory = 8;
  std::size_t max_inner = 500;
  std::size_t max_outer = 50;
  double switch_threshold = 1e-3;  // err1 at which the stage hands over
  double rho_growth = 2.0;
  double rho_max = 1e8;
  double stall_ratio = 0.9;        // err1 must shrink by this factor per round
  std::size_t rank_stall_limit = 2;
  std::size_t min_inner = 1;       // steps taken even when the start already passes the test
  Deadline deadline;
};

struct AlmInnerResult {
  std::size_t iterations = 0;
  bool hit_cap = false;
  double lagrangian = 0.0;
  std::vector<double> grad_norms;
};

// Minimizes L(., lambda) from `r` in place until
// ||grad||_F / (1 + |L|) <= grad_tol (checked once min_iter steps are done)
// or max_iter steps.
inline AlmInnerResult alm_inner(DenseMatrix& r, const DualVector& dual, const SdpOperators& ops,
                                double grad_tol, std::size_t max_iter, std::size_t memory,
                                const Deadline* deadline = nullptr, std::size_t min_iter = 0) {
  AlmInnerResult res;
  AlmWorkspace ws;
  AlmEval cur;
  AlmEval next;
  LbfgsHistory hist(memory);
  evaluate_alm(r, dual, ops, cur, ws);
  if (!std::isfinite(cur.lagrangian) || !all_finite(cur.grad.flat()))
    throw AlmDiverged("non-finite Lagrangian at the inner start", r);

  DenseMatrix trial;
  while (true) {
    const double gnorm = frobenius(cur.grad);
    res.grad_norms.push_back(gnorm);
    res.lagrangian = cur.lagrangian;
    if (gnorm == 0.0) break;
    if (res.iterations >= min_iter && gnorm / (1.0 + std::abs(cur.lagrangian)) <= grad_tol) break;
    if (res.iterations >= max_iter) {
      res.hit_cap = true;
      break;
    }
    if (deadline && deadline->expired()) break;

    DenseMatrix d = lbfgs_direction(cur.grad, hist);
    if (!(dot(d, cur.grad) < 0.0)) {
      hist.clear();
      d = cur.grad;
      scale(-1.0, d.flat());
    }
    const auto poly = line_search_poly(r, d, cur.residual, dual, ops, ws.op);
    const auto step = solve_cubic_min(poly);
    if (step.zero_direction || step.tau == 0.0) break;

    trial = r;
    axpy(step.tau, d, trial);
    evaluate_alm(trial, dual, ops, next, ws);
    if (!std::isfinite(next.lagrangian) || !all_finite(next.grad.flat()))
      throw AlmDiverged("non-finite Lagrangian after a line-search step", r);
    // Reject steps that fail to decrease L beyond roundoff.
    if (next.lagrangian > cur.lagrangian + 1e-15 * (1.0 + std::abs(cur.lagrangian))) break;

    scale(step.tau, d.flat());
    DenseMatrix y = next.grad;
    axpy(-1.0, cur.grad, y);
    hist.push(std::move(d), std::move(y));
    std::swap(r, trial);
    std::swap(cur, next);
    ++res.iterations;
  }
  return res;
}

inline double primal_infeasibility(std::span<const double> residual, double b_norm1) {
  return norm2(residual) / (1.0 + b_norm1);
}

struct AlmOuterResult {
  std::size_t outer_iterations = 0;
  std::size_t inner_iterations = 0;
  double err1 = 0.0;
  bool switched = false;  // reached the hand-over threshold
  std::vector<std::size_t> rank_history;
  std::vector<TraceRecord> trace;
};

// Alternates alm_inner and the dual step until err1 <= switch_threshold or
// max_outer rounds. The rank grows when the inner solve hits its cap
// rank_stall_limit rounds in a row.
inline AlmOuterResult alm_outer(DenseMatrix& r, DualVector& dual, const SdpOperators& ops,
                                const AlmConfig& cfg, std::mt19937_64& rng) {
  require(r.rows() == ops.n() && dual.lambda.size() == ops.m(), "alm_outer: dimension mismatch");
  AlmOuterResult out;
  OpWorkspace ws;
  std::vector<double> res;
  residual_of(r, r, ops, res, ws);
  double err1 = primal_infeasibility(res, ops.b_norm1());
  out.rank_history.push_back(r.cols());
  std::size_t capped_rounds = 0;

  while (out.outer_iterations < cfg.max_outer && err1 > cfg.switch_threshold) {
    if (cfg.deadline.expired()) break;
    const double tol = std::max(1e-8, 0.1 * err1);
    const auto inner = alm_inner(r, dual, ops, tol, cfg.max_inner, cfg.lbfgs_memory, &cfg.deadline,
                                 cfg.min_inner);
    out.inner_iterations += inner.iterations;
    ++out.outer_iterations;

    residual_of(r, r, ops, res, ws);
    axpy(dual.rho, res, dual.lambda);
    const double next = primal_infeasibility(res, ops.b_norm1());
    out.trace.push_back({"alm", out.outer_iterations, ops.objective(r, r), next,
                         inner.grad_norms.empty() ? 0.0 : inner.grad_norms.back(), dual.rho,
                         r.cols(), cfg.deadline.elapsed()});
    if (next > cfg.stall_ratio * err1) dual.rho = std::min(dual.rho * cfg.rho_growth, cfg.rho_max);
    err1 = next;

    capped_rounds = inner.hit_cap ? capped_rounds + 1 : 0;
    if (capped_rounds >= cfg.rank_stall_limit) {
      const std::size_t nr = update_rank(r.cols(), ops.m());
      if (nr > r.cols()) {
        extend_rank(r, nr, rng);
        out.rank_history.push_back(nr);
      }
      capped_rounds = 0;
    }
  }
  out.err1 = err1;
  out.switched = err1 <= cfg.switch_threshold;
  return out;
}

}  // namespace lorasdp
