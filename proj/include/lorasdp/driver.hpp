#pragma once

// Two-stage solve: ALM on X = R R^T until the primal residual is moderate,
// then ADMM on X = U V^T, with optional re-optimization rounds on a
// down-scaled objective.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lorasdp/admm.hpp"
#include "lorasdp/alm.hpp"
#include "lorasdp/dense.hpp"
#include "lorasdp/errors.hpp"
#include "lorasdp/operators.hpp"
#include "lorasdp/problem.hpp"
#include "lorasdp/spectral.hpp"
#include "lorasdp/state.hpp"

namespace lorasdp {

struct SolverConfig {
  double eps = 1e-5;
  int reopt_level = 1;
  std::size_t max_reopts = 5;
  double reopt_factor = 0.1;
  double time_limit = 10000.0;
  std::size_t rank_init = 0;        // 0: derived from m
  std::size_t lbfgs_memory = 8;
  double switch_threshold = 0.0;    // 0: max(100 eps, 1e-3)
  std::size_t alm_max_outer = 50;
  std::size_t alm_max_inner = 500;
  std::size_t admm_max_iter = 20000;
  std::size_t cg_cap = 200;
  double balance_ratio = 0.01;      // ADMM penalty shrinks while err1 < balance_ratio * err3
  std::size_t gap_window = 50;      // ADMM iterations without gap progress that end a stage
  std::uint64_t seed = 1;
  CStorage c_storage = CStorage::kAuto;
  double eig_tol = 1e-6;
  bool report_err2 = true;          // evaluate err2 for the final report at levels 0 and 1

  void validate() const {
    require(eps > 0.0, "SolverConfig: eps must be positive");
    require(reopt_level >= 0 && reopt_level <= 2, "SolverConfig: reopt level must be 0, 1 or 2");
    require(reopt_factor > 0.0 && reopt_factor < 1.0, "SolverConfig: reopt factor must lie in (0,1)");
    require(time_limit > 0.0, "SolverConfig: time limit must be positive");
    require(lbfgs_memory >= 1, "SolverConfig: L-BFGS memory must be at least 1");
    require(balance_ratio >= 0.0 && balance_ratio < 1.0, "SolverConfig: balance ratio must lie in [0,1)");
  }

  double stage_switch() const {
    return switch_threshold > 0.0 ? switch_threshold : std::max(100.0 * eps, 1e-3);
  }
};

// ---------------------------------------------------------------------------
// Error metrics
// ---------------------------------------------------------------------------

struct ErrorReport {
  double objective = 0.0;   // <C, X> of the minimization form
  double dual_objective = 0.0;  // b^T y
  double err1 = 0.0;
  double err2 = 0.0;
  double err3 = 0.0;
  double primal_inf = 0.0;  // ||A(X) - b|| / (1 + ||b||_inf)
  double sigma_min = 0.0;
  bool err2_evaluated = false;
  bool err2_verified = false;

  double max_error() const { return std::max({err1, err2_evaluated ? err2 : 0.0, err3}); }
};

inline double gap_error(double objective, double dual_objective) {
  return std::abs(objective - dual_objective) /
         (1.0 + std::abs(objective) + std::abs(dual_objective));
}

// Errors of X = U V^T and the dual vector y (usual sign: S = C - A*(y)).
inline ErrorReport errors(const FactorPair& x, std::span<const double> y, const SdpOperators& ops,
                          bool with_err2, double eig_tol = 1e-6, std::uint64_t seed = 1) {
  require(y.size() == ops.m(), "errors: dual vector length mismatch");
  ErrorReport e;
  const auto ax = ops.constraint_values(x.u, x.v);
  double res = 0.0;
  for (std::size_t i = 0; i < ops.m(); ++i) {
    const double d = ax[i] - ops.b()[i];
    res += d * d;
  }
  res = std::sqrt(res);
  e.err1 = res / (1.0 + ops.b_norm1());
  e.primal_inf = res / (1.0 + ops.b_norm_inf());
  e.objective = ops.objective(x.u, x.v);
  e.dual_objective = dot(ops.b(), y);
  e.err3 = gap_error(e.objective, e.dual_objective);
  if (with_err2) {
    const auto r = err2(ops, y, eig_tol, seed);
    e.err2 = r.value;
    e.sigma_min = r.sigma_min;
    e.err2_evaluated = true;
    e.err2_verified = r.verified;
  }
  return e;
}

struct StopDecision {
  bool stop = false;
  bool needs_err2 = false;  // level 2 candidate whose err2 is still unknown
};

inline StopDecision stop_check(const ErrorReport& e, const SolverConfig& cfg) {
  StopDecision d;
  switch (cfg.reopt_level) {
    case 0:
      d.stop = e.primal_inf <= cfg.eps;
      break;
    case 1:
      d.stop = std::max(e.err1, e.err3) < cfg.eps;
      break;
    default:
      if (std::max(e.err1, e.err3) < cfg.eps) {
        if (e.err2_evaluated)
          d.stop = e.err2 < cfg.eps;
        else
          d.needs_err2 = true;
      }
      break;
  }
  return d;
}

// ---------------------------------------------------------------------------
// Solver state and report
// ---------------------------------------------------------------------------

enum class SolveStatus { kOptimal, kBestEffort, kIterationLimit, kTimeout, kDiverged };

inline const char* status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::kOptimal: return "optimal";
    case SolveStatus::kBestEffort: return "best_effort";
    case SolveStatus::kIterationLimit: return "iteration_limit";
    case SolveStatus::kTimeout: return "timeout";
    case SolveStatus::kDiverged: return "diverged";
  }
  return "unknown";
}

struct SolverState {
  FactorPair x;
  DualVector dual;          // internal multiplier for the currently scaled objective
  double gamma = 1.0;       // accumulated objective scaling
  bool in_admm = false;
  std::vector<std::size_t> rank_history;

  // Dual vector of the unscaled problem in the usual sign.
  std::vector<double> reported_dual() const {
    std::vector<double> y(dual.lambda.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = -dual.lambda[i] / gamma;
    return y;
  }
};

struct SolveReport {
  SolveStatus status = SolveStatus::kIterationLimit;
  double objective = 0.0;  // as posed (sign restored for maximization input)
  ErrorReport errors;
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t rank_final = 0;
  std::vector<std::size_t> rank_history;
  double time_total_s = 0.0;
  double time_alm_s = 0.0;
  double time_admm_s = 0.0;
  std::size_t alm_outer_iterations = 0;
  std::size_t alm_inner_iterations = 0;
  std::size_t admm_iterations = 0;
  std::size_t cg_iterations = 0;
  std::size_t reopt_rounds = 0;
  std::vector<ErrorReport> stage_errors;  // one entry per stage end
  std::size_t K = 0;
  std::size_t omega_size = 0;
  std::size_t peak_bytes = 0;
  std::vector<TraceRecord> trace;
  FactorPair x;
  std::vector<double> y;
  std::string message;
};

// Modeled peak working set: operator data plus the factor-shaped and
// m-shaped buffers each stage keeps alive, plus the Lanczos basis.
inline std::size_t modeled_peak_bytes(const SdpOperators& ops, std::size_t rank,
                                      std::size_t lbfgs_memory, bool lanczos) {
  const std::size_t nr = ops.n() * rank;
  const std::size_t factor_buffers = 2 * lbfgs_memory + 8;
  std::size_t bytes = ops.bytes();
  bytes += sizeof(double) * (factor_buffers * nr + 6 * ops.m() + ops.adj().size() +
                             2 * ops.a().K());
  if (lanczos) bytes += sizeof(double) * (std::min<std::size_t>(ops.n(), 300) + 2) * ops.n();
  return bytes;
}

namespace detail {

enum class StageEnd { kConverged, kPrimalOnly, kNotFeasible, kTimeout };

struct StageContext {
  const SdpOperators& ops;  // unscaled
  const SolverConfig& cfg;
  const Deadline& deadline;
  std::mt19937_64& rng;
  SolveReport& report;
};

inline void grow_split_rank(FactorPair& x, std::size_t new_rank, std::mt19937_64& rng) {
  const std::size_t old = x.u.cols();
  extend_rank(x.u, new_rank, rng);
  x.v.append_cols(new_rank - old);
  for (std::size_t c = old; c < new_rank; ++c)
    std::copy(x.u.col(c).begin(), x.u.col(c).end(), x.v.col(c).begin());
}

// ALM (if not yet done) followed by ADMM on the objective scaled by st.gamma.
inline StageEnd run_stage(SolverState& st, StageContext& ctx) {
  const auto& cfg = ctx.cfg;
  const SdpOperators sops = ctx.ops.scaled(st.gamma);
  const double b_inf = ctx.ops.b_norm_inf();

  if (!st.in_admm) {
    AlmConfig ac;
    ac.lbfgs_memory = cfg.lbfgs_memory;
    ac.max_inner = cfg.alm_max_inner;
    ac.max_outer = cfg.alm_max_outer;
    ac.switch_threshold = cfg.stage_switch();
    ac.deadline = ctx.deadline;
    const double t0 = ctx.deadline.elapsed();
    DenseMatrix r = std::move(st.x.u);
    const auto out = alm_outer(r, st.dual, sops, ac, ctx.rng);
    ctx.report.time_alm_s += ctx.deadline.elapsed() - t0;
    ctx.report.alm_outer_iterations += out.outer_iterations;
    ctx.report.alm_inner_iterations += out.inner_iterations;
    ctx.report.trace.insert(ctx.report.trace.end(), out.trace.begin(), out.trace.end());
    for (std::size_t k = 1; k < out.rank_history.size(); ++k)
      st.rank_history.push_back(out.rank_history[k]);
    st.x.v = r;
    st.x.u = std::move(r);
    st.in_admm = true;
    if (ctx.deadline.expired()) return StageEnd::kTimeout;
  }

  AdmmConfig adc;
  adc.max_iter = cfg.admm_max_iter;
  adc.cg_cap = cfg.cg_cap;
  adc.deadline = ctx.deadline;

  // Penalty growth stops once the iterate meets the primal part of the rule.
  adc.rho_target = cfg.reopt_level == 0 ? cfg.eps * (1.0 + b_inf) / (1.0 + ctx.ops.b_norm1())
                                        : cfg.eps;

  AdmmState ast;
  ast.x = std::move(st.x);
  ast.dual = std::move(st.dual);
  const double rho_floor = std::min(slack_norm_estimate(ast.dual, sops), adc.rho_max);
  ast.dual.rho = std::max(ast.dual.rho, rho_floor);

  const std::size_t cap = rank_cap(ctx.ops.m());
  const std::size_t window = std::max<std::size_t>(cfg.gap_window, 1);
  StageEnd end = StageEnd::kNotFeasible;
  std::size_t iter = 0;
  std::size_t gap_ref_iter = 0;
  double gap_ref = std::numeric_limits<double>::infinity();
  std::size_t res_ref_iter = 0;
  double res_ref = std::numeric_limits<double>::infinity();
  bool escalate = false;
  bool done = false;
  std::size_t err2_next = 0;
  std::size_t err2_failures = 0;

  const AdmmStop stop = [&](AdmmState& s) {
    ErrorReport e;
    double res = 0.0;
    for (std::size_t i = 0; i < s.av.size(); ++i) {
      const double d = s.av[i] - ctx.ops.b()[i];
      res += d * d;
    }
    res = std::sqrt(res);
    e.err1 = res / (1.0 + ctx.ops.b_norm1());
    e.primal_inf = res / (1.0 + b_inf);
    e.objective = sops.objective(s.x.u, s.x.v) / st.gamma;
    e.dual_objective = -dot(ctx.ops.b(), s.dual.lambda) / st.gamma;
    e.err3 = gap_error(e.objective, e.dual_objective);
    ++iter;

    auto d = stop_check(e, cfg);
    if (d.needs_err2 && iter < err2_next) d.needs_err2 = false;
    if (d.needs_err2) {
      std::vector<double> y(s.dual.lambda.size());
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = -s.dual.lambda[i] / st.gamma;
      const auto r = err2(ctx.ops, y, cfg.eig_tol, cfg.seed);
      e.err2 = r.value;
      e.err2_evaluated = true;
      d = stop_check(e, cfg);
      if (!d.stop) {
        // Dual infeasible with a rank-deficient factor: give it more columns.
        if (s.x.u.cols() < cap) {
          escalate = true;
          return true;
        }
        // At the rank cap: keep iterating and look again one window later.
        if (++err2_failures >= 4) {
          end = StageEnd::kPrimalOnly;
          done = true;
          return true;
        }
        err2_next = iter + window;
      }
    }
    if (d.stop) {
      end = StageEnd::kConverged;
      done = true;
      return true;
    }
    const bool primal_ok = cfg.reopt_level == 0 ? e.primal_inf <= cfg.eps : e.err1 < cfg.eps;
    // Feasibility far ahead of the gap: lower the penalty, not below the floor.
    if (primal_ok && iter % adc.rho_window == 0 && e.err1 < cfg.balance_ratio * e.err3)
      s.dual.rho = std::max(s.dual.rho / adc.rho_growth, rho_floor);
    if (primal_ok) {
      if (e.err3 < 0.9 * gap_ref) {
        gap_ref = e.err3;
        gap_ref_iter = iter;
      } else if (iter - gap_ref_iter >= window) {
        end = StageEnd::kPrimalOnly;
        done = true;
        return true;
      }
      res_ref_iter = iter;
    } else {
      gap_ref = std::numeric_limits<double>::infinity();
      gap_ref_iter = iter;
      if (e.err1 < 0.9 * res_ref) {
        res_ref = e.err1;
        res_ref_iter = iter;
      } else if (iter - res_ref_iter >= 3 * window && s.x.u.cols() < cap) {
        // Residual stalled: a larger rank may be needed to reach feasibility.
        escalate = true;
        res_ref = std::numeric_limits<double>::infinity();
        res_ref_iter = iter;
        return true;
      }
    }
    return false;
  };

  const double t0 = ctx.deadline.elapsed();
  std::size_t budget = cfg.admm_max_iter;
  while (true) {
    adc.max_iter = budget;
    const auto out = admm_run(ast, sops, adc, stop);
    ctx.report.admm_iterations += out.iterations;
    ctx.report.cg_iterations += out.cg_iterations;
    ctx.report.trace.insert(ctx.report.trace.end(), out.trace.begin(), out.trace.end());
    budget -= std::min(budget, out.iterations);
    if (done) break;
    if (escalate) {
      escalate = false;
      const std::size_t nr = update_rank(ast.x.u.cols(), ctx.ops.m());
      if (nr > ast.x.u.cols()) {
        grow_split_rank(ast.x, nr, ctx.rng);
        st.rank_history.push_back(nr);
        ast.av.clear();
      }
      if (budget > 0 && !ctx.deadline.expired()) continue;
    }
    end = ctx.deadline.expired() ? StageEnd::kTimeout : StageEnd::kNotFeasible;
    break;
  }
  ctx.report.time_admm_s += ctx.deadline.elapsed() - t0;
  st.x = std::move(ast.x);
  st.dual = std::move(ast.dual);
  return end;
}

}  // namespace detail

// Scales the objective of the working problem by cfg.reopt_factor (and the
// multiplier and penalty with it) and re-runs the ADMM stage warm-started. Errors are
// returned for the unscaled problem.
inline ErrorReport reopt_round(SolverState& st, const SdpOperators& ops, const SolverConfig& cfg,
                               SolveReport& report, const Deadline& deadline, std::mt19937_64& rng) {
  st.gamma *= cfg.reopt_factor;
  scale(cfg.reopt_factor, st.dual.lambda);
  // The penalty follows the objective so the penalty-to-objective ratio of the
  // warm start is preserved.
  st.dual.rho = std::max(st.dual.rho * cfg.reopt_factor, std::numeric_limits<double>::min());
  detail::StageContext ctx{ops, cfg, deadline, rng, report};
  detail::run_stage(st, ctx);
  ++report.reopt_rounds;
  const auto y = st.reported_dual();
  auto e = errors(st.x, y, ops, cfg.reopt_level == 2, cfg.eig_tol, cfg.seed);
  report.stage_errors.push_back(e);
  return e;
}

// Initial state: R with i.i.d. N(0, 1/(n r)) entries, lambda = 0,
// rho = max(1, m / sqrt(nnz)).
inline SolverState initial_state(const SdpOperators& ops, const SolverConfig& cfg,
                                 std::mt19937_64& rng) {
  SolverState st;
  std::size_t r = cfg.rank_init > 0 ? cfg.rank_init : initial_rank(ops.m());
  r = std::clamp<std::size_t>(r, 1, rank_cap(ops.m()));
  const double sd = 1.0 / std::sqrt(static_cast<double>(ops.n() * r));
  st.x.u = random_normal(ops.n(), r, sd, rng);
  st.dual.lambda.assign(ops.m(), 0.0);
  const double nnz = static_cast<double>(ops.a().nnz());
  st.dual.rho = nnz > 0.0 ? std::max(1.0, static_cast<double>(ops.m()) / std::sqrt(nnz)) : 1.0;
  st.rank_history.push_back(r);
  return st;
}

inline SolveReport solve(const SdpProblem& p, const SolverConfig& cfg = {}) {
  cfg.validate();
  Deadline deadline;
  deadline.limit_s = cfg.time_limit;
  SolveReport report;
  report.n = p.n();
  report.m = p.m();

  const SdpOperators ops(p, cfg.c_storage);
  report.K = ops.a().K();
  report.omega_size = ops.adj().size();
  std::mt19937_64 rng(cfg.seed);
  SolverState st = initial_state(ops, cfg, rng);
  detail::StageContext ctx{ops, cfg, deadline, rng, report};

  bool diverged = false;
  detail::StageEnd end = detail::StageEnd::kNotFeasible;
  try {
    end = detail::run_stage(st, ctx);
    auto e = errors(st.x, st.reported_dual(), ops, cfg.reopt_level == 2, cfg.eig_tol, cfg.seed);
    report.stage_errors.push_back(e);
    if (cfg.reopt_level > 0) {
      while (end != detail::StageEnd::kTimeout && !stop_check(e, cfg).stop &&
             e.err1 < cfg.eps && report.reopt_rounds < cfg.max_reopts && !deadline.expired()) {
        e = reopt_round(st, ops, cfg, report, deadline, rng);
        end = deadline.expired() ? detail::StageEnd::kTimeout : end;
      }
    }
  } catch (const AlmDiverged& ex) {
    diverged = true;
    report.message = ex.what();
    st.x.u = ex.last_iterate();
    st.x.v = ex.last_iterate();
  } catch (const Diverged& ex) {
    diverged = true;
    report.message = ex.what();
  }

  report.x = st.x;
  report.y = st.reported_dual();
  report.rank_history = st.rank_history;
  report.rank_final = st.x.u.cols();
  const bool finite = all_finite(st.x.u.flat()) && all_finite(st.x.v.flat()) &&
                      all_finite(report.y) && st.x.u.same_shape(st.x.v);
  const bool want_err2 = cfg.reopt_level == 2 || cfg.report_err2;
  if (finite) report.errors = errors(st.x, report.y, ops, want_err2, cfg.eig_tol, cfg.seed);
  report.objective = p.reported_objective(report.errors.objective);

  const bool satisfied = finite && stop_check(report.errors, cfg).stop;
  if (diverged || !finite)
    report.status = SolveStatus::kDiverged;
  else if (satisfied)
    report.status = SolveStatus::kOptimal;
  else if (end == detail::StageEnd::kTimeout || deadline.expired())
    report.status = SolveStatus::kTimeout;
  else if (report.errors.err1 < cfg.eps)
    report.status = SolveStatus::kBestEffort;
  else
    report.status = SolveStatus::kIterationLimit;

  report.peak_bytes = modeled_peak_bytes(ops, report.rank_final, cfg.lbfgs_memory, want_err2);
  report.time_total_s = deadline.elapsed();
  return report;
}

}  // namespace lorasdp
