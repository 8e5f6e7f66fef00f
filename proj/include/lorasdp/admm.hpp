#pragma once

// Second stage: ADMM on the split iterate X = U V^T with the coupling
// penalty rho/2 ||U - V||^2. Each half-step solves
//   rho A*(A(U V^T)) V + rho U = -(C + A*(lambda - rho b)) V + rho V
// for U by matrix-free CG (and the mirrored system for V).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "lorasdp/dense.hpp"
#include "lorasdp/errors.hpp"
#include "lorasdp/linops.hpp"
#include "lorasdp/operators.hpp"
#include "lorasdp/state.hpp"

namespace lorasdp {

struct CgWorkspace {
  DenseMatrix r;
  DenseMatrix p;
  DenseMatrix q;
  DenseMatrix Q;
  double eps = 1e-10;
  std::size_t cap = 200;
  // frak_A scratch
  OpWorkspace op;
  std::vector<double> w;
  CsrMatrix at;
};

struct CgResult {
  std::size_t iterations = 0;
  double residual = 0.0;
};

struct AdmmState {
  FactorPair x;
  DualVector dual;
  std::vector<double> av;  // A(U V^T), refreshed after every factor write
};

// out = rho A*(A(Uin V^T)) V + rho Uin
inline void frak_A(const DenseMatrix& uin, const DenseMatrix& v, double rho,
                   const SdpOperators& ops, DenseMatrix& out, CgWorkspace& ws) {
  require(uin.same_shape(v) && v.rows() == ops.n(), "frak_A: dimension mismatch");
  ws.w.resize(ops.m());
  ops.constraint_values(uin, v, ws.w, ws.op);
  assemble_At(ops.adj(), ws.w, ws.at);
  spmm(ws.at, v, out);
  const auto o = out.flat();
  const auto u = uin.flat();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = rho * (o[k] + u[k]);
}

inline DenseMatrix frak_A(const DenseMatrix& uin, const DenseMatrix& v, const DualVector& dual,
                          const SdpOperators& ops) {
  CgWorkspace ws;
  DenseMatrix out(uin.rows(), uin.cols());
  frak_A(uin, v, dual.rho, ops, out, ws);
  return out;
}

// S_b = C + A*(lambda - rho b); the right-hand side is -S_b V + rho V.
inline void frak_b_matrix(const DualVector& dual, const SdpOperators& ops, SMatrix& s,
                          OpWorkspace& ws, std::vector<double>& y) {
  require(dual.lambda.size() == ops.m(), "frak_b: multiplier length mismatch");
  y.assign(dual.lambda.begin(), dual.lambda.end());
  axpy(-dual.rho, ops.b(), y);
  ops.assemble(y, std::nullopt, 1.0, s, ws);
}

inline void frak_b(const DenseMatrix& v, double rho, const SMatrix& sb, DenseMatrix& out) {
  sb.multiply(v, out);
  const auto o = out.flat();
  const auto vv = v.flat();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = rho * vv[k] - o[k];
}

inline DenseMatrix frak_b(const DenseMatrix& v, const DualVector& dual, const SdpOperators& ops) {
  SMatrix s;
  OpWorkspace ws;
  std::vector<double> y;
  frak_b_matrix(dual, ops, s, ws, y);
  DenseMatrix out(v.rows(), v.cols());
  frak_b(v, dual.rho, s, out);
  return out;
}

// Conjugate gradients on frak_A(U) = rhs from the initial U (updated in place).
// Stops when ||r||_F <= ws.eps or after ws.cap iterations.
inline CgResult cg_solve(DenseMatrix& u, const DenseMatrix& v, const DenseMatrix& rhs, double rho,
                         const SdpOperators& ops, CgWorkspace& ws) {
  require(u.same_shape(v) && u.same_shape(rhs), "cg_solve: dimension mismatch");
  require(ws.eps > 0.0, "cg_solve: tolerance must be positive");
  CgResult res;
  frak_A(u, v, rho, ops, ws.Q, ws);
  ws.r = rhs;
  axpy(-1.0, ws.Q, ws.r);
  res.residual = frobenius(ws.r);
  if (!std::isfinite(res.residual)) throw Diverged("non-finite CG residual");
  if (res.residual <= ws.eps) return res;
  ws.p = ws.r;
  ws.q = ws.r;
  double qr = dot(ws.q, ws.r);
  for (std::size_t k = 0; k < ws.cap; ++k) {
    frak_A(ws.p, v, rho, ops, ws.Q, ws);
    const double pq = dot(ws.p, ws.Q);
    if (!std::isfinite(pq)) throw Diverged("non-finite CG curvature");
    if (pq <= 0.0) throw SpdViolation("CG curvature <p, A p> is not positive");
    const double alpha = qr / pq;
    axpy(alpha, ws.p, u);
    axpy(-alpha, ws.Q, ws.r);
    ++res.iterations;
    res.residual = frobenius(ws.r);
    if (!std::isfinite(res.residual)) throw Diverged("non-finite CG residual");
    if (res.residual <= ws.eps) break;
    ws.q = ws.r;
    const double qr_next = dot(ws.q, ws.r);
    const double beta = qr_next / qr;
    qr = qr_next;
    const auto p = ws.p.flat();
    const auto r = ws.r.flat();
    for (std::size_t t = 0; t < p.size(); ++t) p[t] = r[t] + beta * p[t];
  }
  return res;
}

struct AdmmConfig {
  std::size_t max_iter = 100000;
  std::size_t cg_cap = 200;
  double cg_floor = 1e-10;
  double cg_factor = 0.05;
  double rho_growth = 1.5;
  double rho_max = 1e8;
  double stall_ratio = 0.9;
  std::size_t rho_window = 20;  // iterations between penalty checks
  double rho_target = 0.0;      // no penalty growth once err1 is at or below this
  Deadline deadline;
};

struct AdmmStepInfo {
  CgResult cg_u;
  CgResult cg_v;
  double err1 = 0.0;  // after the step
};

inline void refresh_constraint_cache(AdmmState& st, const SdpOperators& ops, OpWorkspace& ws) {
  st.av.resize(ops.m());
  ops.constraint_values(st.x.u, st.x.v, st.av, ws);
}

inline double admm_err1(const AdmmState& st, const SdpOperators& ops) {
  double s = 0.0;
  for (std::size_t i = 0; i < ops.m(); ++i) {
    const double d = st.av[i] - ops.b()[i];
    s += d * d;
  }
  return std::sqrt(s) / (1.0 + ops.b_norm1());
}

struct AdmmWorkspace {
  CgWorkspace cg;
  SMatrix sb;
  OpWorkspace op;
  std::vector<double> y;
  DenseMatrix rhs;
};

// One U half-solve, one V half-solve and the dual step.
inline AdmmStepInfo admm_step(AdmmState& st, const SdpOperators& ops, const AdmmConfig& cfg,
                              AdmmWorkspace& ws) {
  require(st.x.u.same_shape(st.x.v) && st.x.u.rows() == ops.n(), "admm_step: factor shape mismatch");
  require(st.dual.lambda.size() == ops.m(), "admm_step: multiplier length mismatch");
  if (st.av.size() != ops.m()) refresh_constraint_cache(st, ops, ws.op);
  AdmmStepInfo info;
  const double rho = st.dual.rho;
  const double err1 = admm_err1(st, ops);
  ws.cg.cap = std::min<std::size_t>(cfg.cg_cap, 2 * st.x.u.size());
  frak_b_matrix(st.dual, ops, ws.sb, ws.op, ws.y);

  auto half = [&](DenseMatrix& target, const DenseMatrix& fixed) {
    frak_b(fixed, rho, ws.sb, ws.rhs);
    ws.cg.eps = std::max(cfg.cg_floor, cfg.cg_factor * err1) * frobenius(ws.rhs);
    if (!(ws.cg.eps > 0.0)) ws.cg.eps = cfg.cg_floor;
    return cg_solve(target, fixed, ws.rhs, rho, ops, ws.cg);
  };
  info.cg_u = half(st.x.u, st.x.v);
  info.cg_v = half(st.x.v, st.x.u);

  refresh_constraint_cache(st, ops, ws.op);
  for (std::size_t i = 0; i < ops.m(); ++i) st.dual.lambda[i] += rho * (st.av[i] - ops.b()[i]);
  if (!all_finite(st.dual.lambda) || !all_finite(st.x.u.flat()) || !all_finite(st.x.v.flat()))
    throw Diverged("non-finite ADMM iterate");
  info.err1 = admm_err1(st, ops);
  return info;
}

inline AdmmStepInfo admm_step(AdmmState& st, const SdpOperators& ops, const AdmmConfig& cfg = {}) {
  AdmmWorkspace ws;
  return admm_step(st, ops, cfg, ws);
}

// Power-iteration estimate of ||C + A*(lambda)||_2. The half-step map
// amplifies components whose slack eigenvalue exceeds 2 rho, so the driver
// keeps rho at or above this value.
inline double slack_norm_estimate(const DualVector& dual, const SdpOperators& ops,
                                  std::size_t iters = 30) {
  const SMatrix s = ops.assemble(dual.lambda);
  std::mt19937_64 rng(17);
  DenseMatrix x = random_normal(ops.n(), 1, 1.0, rng);
  DenseMatrix y(ops.n(), 1);
  double est = 0.0;
  for (std::size_t k = 0; k < iters; ++k) {
    const double nx = frobenius(x);
    if (!(nx > 0.0)) return 0.0;
    scale(1.0 / nx, x.flat());
    s.multiply(x, y);
    est = frobenius(y);
    std::swap(x, y);
  }
  return est;
}

struct AdmmRunResult {
  std::size_t iterations = 0;
  std::size_t cg_iterations = 0;
  bool stopped = false;  // the stop predicate fired
  std::vector<TraceRecord> trace;
};

// Stop predicate, evaluated before the first step and after every step. It
// may adjust the penalty.
using AdmmStop = std::function<bool(AdmmState&)>;

// Iterates admm_step until `stop` accepts the state, max_iter, or the
// deadline. The penalty grows by rho_growth when err1 has not shrunk by
// stall_ratio over the last rho_window iterations and is still above
// rho_target.
inline AdmmRunResult admm_run(AdmmState& st, const SdpOperators& ops, const AdmmConfig& cfg,
                              const AdmmStop& stop) {
  AdmmRunResult out;
  AdmmWorkspace ws;
  refresh_constraint_cache(st, ops, ws.op);
  if (stop && stop(st)) {
    out.stopped = true;
    return out;
  }
  double window_start = admm_err1(st, ops);
  while (out.iterations < cfg.max_iter && !cfg.deadline.expired()) {
    const auto info = admm_step(st, ops, cfg, ws);
    ++out.iterations;
    out.cg_iterations += info.cg_u.iterations + info.cg_v.iterations;
    out.trace.push_back({"admm", out.iterations, ops.objective(st.x.u, st.x.v), info.err1,
                         std::max(info.cg_u.residual, info.cg_v.residual), st.dual.rho,
                         st.x.u.cols(), cfg.deadline.elapsed()});
    if (stop && stop(st)) {
      out.stopped = true;
      break;
    }
    if (cfg.rho_window > 0 && out.iterations % cfg.rho_window == 0) {
      if (info.err1 > cfg.rho_target && info.err1 > cfg.stall_ratio * window_start)
        st.dual.rho = std::min(st.dual.rho * cfg.rho_growth, cfg.rho_max);
      window_start = info.err1;
    }
  }
  return out;
}

}  // namespace lorasdp
