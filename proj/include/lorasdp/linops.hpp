#pragma once

// Fused, column-compressed constraint operator.
//
// The m constraint matrices are stacked row-wise into one m x n^2 operator
// (full vectorization: (i,j) and (j,i) are separate columns). Only the K
// columns that carry a nonzero are kept, together with the (i,j) position
// each one stands for. A(U V^T) is then one sparse mat-vec against the K
// entries of U V^T that matter, and nothing of size n^2 is ever formed.
//
// The adjoint side lives on Omega = supp(vec C) U {retained columns}: every
// S = C + A*(y) we need is a fixed-pattern sparse matrix over Omega, so
// assembling it is a dense pass over |Omega| values.

#include <algorithm>
#include <cstddef>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "lorasdp/dense.hpp"
#include "lorasdp/errors.hpp"
#include "lorasdp/problem.hpp"

namespace lorasdp {

struct CsrPattern {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr;  // rows + 1
  std::vector<Index> col_idx;

  std::size_t nnz() const noexcept { return col_idx.size(); }
  std::size_t bytes() const noexcept {
    return row_ptr.size() * sizeof(std::size_t) + col_idx.size() * sizeof(Index);
  }
};

// Sparse matrix whose pattern may be shared between many value arrays.
struct CsrMatrix {
  std::shared_ptr<const CsrPattern> pattern;
  std::vector<double> values;

  std::size_t rows() const noexcept { return pattern->rows; }
  std::size_t cols() const noexcept { return pattern->cols; }

  double at(std::size_t i, std::size_t j) const {
    const auto& p = *pattern;
    const auto first = p.col_idx.begin() + static_cast<std::ptrdiff_t>(p.row_ptr[i]);
    const auto last = p.col_idx.begin() + static_cast<std::ptrdiff_t>(p.row_ptr[i + 1]);
    const auto it = std::lower_bound(first, last, static_cast<Index>(j));
    return (it != last && *it == j) ? values[static_cast<std::size_t>(it - p.col_idx.begin())] : 0.0;
  }
};

// out = S * V
// Sparse kernels switch to a row-major copy of the dense factor once they
// touch at least this many entries per factor row.
inline constexpr std::size_t kRowGatherRatio = 8;

inline void spmm(const CsrMatrix& s, const DenseMatrix& v, DenseMatrix& out) {
  require(s.cols() == v.rows(), "spmm: inner dimension mismatch");
  if (out.rows() != s.rows() || out.cols() != v.cols()) out = DenseMatrix(s.rows(), v.cols());
  const auto& p = *s.pattern;
  const std::size_t r = v.cols();
  const std::size_t avg = p.nnz() / std::max<std::size_t>(p.rows, 1) + 1;
  if (p.nnz() < kRowGatherRatio * v.rows()) {
    parallel_for(p.rows, avg * r, [&](std::size_t begin, std::size_t end) {
      for (std::size_t c = 0; c < r; ++c) {
        const auto vc = v.col(c);
        auto oc = out.col(c);
        for (std::size_t i = begin; i < end; ++i) {
          double acc = 0.0;
          for (std::size_t t = p.row_ptr[i]; t < p.row_ptr[i + 1]; ++t)
            acc += s.values[t] * vc[p.col_idx[t]];
          oc[i] = acc;
        }
      }
    });
    return;
  }
  // Rows of V are gathered contiguously; each output entry still sums its
  // terms in CSR order.
  std::vector<double> vr;
  copy_rows(v, vr);
  double* o = out.data();
  const std::size_t rows = p.rows;
  parallel_for(p.rows, avg * r, [&](std::size_t begin, std::size_t end) {
    std::vector<double> acc(r);
    for (std::size_t i = begin; i < end; ++i) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t t = p.row_ptr[i]; t < p.row_ptr[i + 1]; ++t) {
        const double a = s.values[t];
        const double* vj = vr.data() + static_cast<std::size_t>(p.col_idx[t]) * r;
        for (std::size_t c = 0; c < r; ++c) acc[c] += a * vj[c];
      }
      for (std::size_t c = 0; c < r; ++c) o[c * rows + i] = acc[c];
    }
  });
}

inline DenseMatrix spmm(const CsrMatrix& s, const DenseMatrix& v) {
  DenseMatrix out(s.rows(), v.cols());
  spmm(s, v, out);
  return out;
}

// out = S * V for dense square S.
inline void gemm_square(const DenseMatrix& s, const DenseMatrix& v, DenseMatrix& out) {
  require(s.cols() == v.rows(), "gemm: inner dimension mismatch");
  if (out.rows() != s.rows() || out.cols() != v.cols()) out = DenseMatrix(s.rows(), v.cols());
  out.set_zero();
  for (std::size_t c = 0; c < v.cols(); ++c) {
    auto oc = out.col(c);
    for (std::size_t k = 0; k < s.cols(); ++k) {
      const double vk = v(k, c);
      if (vk == 0.0) continue;
      axpy(vk, s.col(k), oc);
    }
  }
}

// ---------------------------------------------------------------------------

struct CompressedConstraintOp {
  std::size_t m = 0;
  std::size_t n = 0;
  CsrPattern a_pattern;        // m x K
  std::vector<double> a_values;
  std::vector<Index> i_map;    // length K
  std::vector<Index> j_map;    // length K

  std::size_t K() const noexcept { return i_map.size(); }
  std::size_t nnz() const noexcept { return a_values.size(); }
  std::size_t bytes() const noexcept {
    return a_pattern.bytes() + a_values.size() * sizeof(double) +
           (i_map.size() + j_map.size()) * sizeof(Index);
  }
};

struct OmegaAdjointOp {
  std::size_t m = 0;
  std::size_t n = 0;
  // Omega, sorted lexicographically by (row, col). The pattern doubles as the
  // CSR layout of every assembled n x n matrix: slot s sits at
  // (omega_row[s], s_pattern->col_idx[s]).
  std::shared_ptr<const CsrPattern> s_pattern;
  std::vector<Index> omega_row;
  // Transposed operator rows, one per retained column (K x m), and the Omega
  // slot each of them lands in. Slots outside the retained set are empty rows
  // of the |Omega| x m adjoint and are not stored.
  CsrPattern at_pattern;
  std::vector<double> at_values;
  std::vector<std::size_t> slot_of_col;
  // The retained columns alone as an n x n pattern (rows iMap, cols jMap).
  std::shared_ptr<const CsrPattern> a_pattern;
  // C at the Omega slots, zero where C has no entry.
  std::vector<double> c_comp;

  std::size_t size() const noexcept { return omega_row.size(); }
  std::size_t retained() const noexcept { return slot_of_col.size(); }
  Index wrap_row(std::size_t s) const { return omega_row[s]; }
  Index wrap_col(std::size_t s) const { return s_pattern->col_idx[s]; }
  std::size_t bytes() const noexcept {
    return s_pattern->bytes() + a_pattern->bytes() + omega_row.size() * sizeof(Index) +
           at_pattern.bytes() + at_values.size() * sizeof(double) +
           slot_of_col.size() * sizeof(std::size_t) + c_comp.size() * sizeof(double);
  }
};

struct CompressedVec {
  std::vector<double> values;
};

struct CompressedOps {
  CompressedConstraintOp a;
  OmegaAdjointOp adj;
};

// Builds the compressed operator and the Omega-aligned adjoint. Memory is
// O(nnz(A) + nnz(C) + m + n).
inline CompressedOps compress(const SdpProblem& p) {
  const std::size_t n = p.n();
  const std::size_t m = p.m();

  struct Triplet {
    Index i;
    Index j;
    Index con;
    double v;
  };
  std::vector<Triplet> t;
  t.reserve(p.A().full_nnz());
  for (std::size_t con = 0; con < m; ++con) {
    for (const auto& e : p.A()[con]) {
      require(e.row < n && e.col < n, "compress: constraint index out of range");
      require(e.row <= e.col, "compress: constraint entry below the diagonal");
      if (e.value == 0.0) continue;
      t.push_back({e.row, e.col, static_cast<Index>(con), e.value});
      if (e.row != e.col) t.push_back({e.col, e.row, static_cast<Index>(con), e.value});
    }
  }
  std::sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
    if (a.i != b.i) return a.i < b.i;
    if (a.j != b.j) return a.j < b.j;
    return a.con < b.con;
  });

  CompressedOps out;
  auto& op = out.a;
  op.m = m;
  op.n = n;
  // Column numbering: position of each distinct (i,j) in sorted order.
  std::vector<Index> col_of(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (k == 0 || t[k].i != t[k - 1].i || t[k].j != t[k - 1].j) {
      op.i_map.push_back(t[k].i);
      op.j_map.push_back(t[k].j);
    }
    col_of[k] = static_cast<Index>(op.i_map.size() - 1);
  }
  const std::size_t K = op.i_map.size();

  // A rows (m x K) by counting sort on the constraint index.
  op.a_pattern.rows = m;
  op.a_pattern.cols = K;
  op.a_pattern.row_ptr.assign(m + 1, 0);
  for (const auto& x : t) ++op.a_pattern.row_ptr[x.con + 1];
  std::partial_sum(op.a_pattern.row_ptr.begin(), op.a_pattern.row_ptr.end(),
                   op.a_pattern.row_ptr.begin());
  op.a_pattern.col_idx.resize(t.size());
  op.a_values.resize(t.size());
  {
    std::vector<std::size_t> fill(op.a_pattern.row_ptr.begin(), op.a_pattern.row_ptr.end() - 1);
    for (std::size_t k = 0; k < t.size(); ++k) {
      const std::size_t dst = fill[t[k].con]++;
      op.a_pattern.col_idx[dst] = col_of[k];
      op.a_values[dst] = t[k].v;
    }
  }
  col_of.clear();
  col_of.shrink_to_fit();

  // Omega = merge of the sorted retained columns and the sorted support of C.
  struct CPos {
    Index i;
    Index j;
    double v;
  };
  std::vector<CPos> cpos;
  cpos.reserve(p.C().full_nnz());
  for (const auto& e : p.C().entries) {
    require(e.row < n && e.col < n, "compress: C index out of range");
    if (e.value == 0.0) continue;
    cpos.push_back({e.row, e.col, e.value});
    if (e.row != e.col) cpos.push_back({e.col, e.row, e.value});
  }
  std::sort(cpos.begin(), cpos.end(),
            [](const CPos& a, const CPos& b) { return a.i != b.i ? a.i < b.i : a.j < b.j; });

  auto& adj = out.adj;
  adj.m = m;
  adj.n = n;
  auto pattern = std::make_shared<CsrPattern>();
  pattern->rows = n;
  pattern->cols = n;
  pattern->row_ptr.assign(n + 1, 0);
  pattern->col_idx.reserve(K + cpos.size());
  adj.omega_row.reserve(K + cpos.size());
  adj.c_comp.reserve(K + cpos.size());
  adj.slot_of_col.resize(K);
  {
    std::size_t ka = 0;
    std::size_t kc = 0;
    auto less = [](Index ai, Index aj, Index bi, Index bj) {
      return ai != bi ? ai < bi : aj < bj;
    };
    while (ka < K || kc < cpos.size()) {
      const bool take_a =
          kc == cpos.size() ||
          (ka < K && !less(cpos[kc].i, cpos[kc].j, op.i_map[ka], op.j_map[ka]));
      const bool take_c =
          ka == K || (kc < cpos.size() && !less(op.i_map[ka], op.j_map[ka], cpos[kc].i, cpos[kc].j));
      const std::size_t slot = adj.omega_row.size();
      Index i = 0;
      Index j = 0;
      double cv = 0.0;
      if (take_a) {
        i = op.i_map[ka];
        j = op.j_map[ka];
        adj.slot_of_col[ka++] = slot;
      }
      if (take_c) {
        i = cpos[kc].i;
        j = cpos[kc].j;
        cv = cpos[kc++].v;
      }
      adj.omega_row.push_back(i);
      pattern->col_idx.push_back(j);
      adj.c_comp.push_back(cv);
      ++pattern->row_ptr[i + 1];
    }
  }
  std::partial_sum(pattern->row_ptr.begin(), pattern->row_ptr.end(), pattern->row_ptr.begin());
  adj.s_pattern = std::move(pattern);
  cpos.clear();
  cpos.shrink_to_fit();

  auto a_only = std::make_shared<CsrPattern>();
  a_only->rows = n;
  a_only->cols = n;
  a_only->row_ptr.assign(n + 1, 0);
  for (Index i : op.i_map) ++a_only->row_ptr[i + 1];
  std::partial_sum(a_only->row_ptr.begin(), a_only->row_ptr.end(), a_only->row_ptr.begin());
  a_only->col_idx = op.j_map;
  adj.a_pattern = std::move(a_only);

  // Transpose of the m x K operator.
  adj.at_pattern.rows = K;
  adj.at_pattern.cols = m;
  adj.at_pattern.row_ptr.assign(K + 1, 0);
  for (Index k : op.a_pattern.col_idx) ++adj.at_pattern.row_ptr[k + 1];
  std::partial_sum(adj.at_pattern.row_ptr.begin(), adj.at_pattern.row_ptr.end(),
                   adj.at_pattern.row_ptr.begin());
  adj.at_pattern.col_idx.resize(op.nnz());
  adj.at_values.resize(op.nnz());
  {
    std::vector<std::size_t> fill(adj.at_pattern.row_ptr.begin(), adj.at_pattern.row_ptr.end() - 1);
    for (std::size_t con = 0; con < m; ++con) {
      for (std::size_t q = op.a_pattern.row_ptr[con]; q < op.a_pattern.row_ptr[con + 1]; ++q) {
        const std::size_t dst = fill[op.a_pattern.col_idx[q]]++;
        adj.at_pattern.col_idx[dst] = static_cast<Index>(con);
        adj.at_values[dst] = op.a_values[q];
      }
    }
  }
  return out;
}

// x[k] = <U row iMap[k], V row jMap[k]>, i.e. (U V^T) gathered at the
// retained positions.
inline void compressed_outer_product(const DenseMatrix& u, const DenseMatrix& v,
                                     std::span<const Index> i_map, std::span<const Index> j_map,
                                     std::span<double> out) {
  require(u.same_shape(v), "compressed_outer_product: factor shapes differ");
  require(i_map.size() == out.size() && j_map.size() == out.size(),
          "compressed_outer_product: output length mismatch");
  const std::size_t r = u.cols();
  if (out.size() < kRowGatherRatio * u.rows()) {
    parallel_for(out.size(), 2 * r + 1, [&](std::size_t begin, std::size_t end) {
      for (std::size_t k = begin; k < end; ++k) out[k] = 0.0;
      for (std::size_t c = 0; c < r; ++c) {
        const double* uc = u.col(c).data();
        const double* vc = v.col(c).data();
        for (std::size_t k = begin; k < end; ++k) out[k] += uc[i_map[k]] * vc[j_map[k]];
      }
    });
    return;
  }
  std::vector<double> ur, vr;
  copy_rows(u, ur);
  copy_rows(v, vr);
  parallel_for(out.size(), 2 * r + 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const double* ui = ur.data() + static_cast<std::size_t>(i_map[k]) * r;
      const double* vj = vr.data() + static_cast<std::size_t>(j_map[k]) * r;
      double acc = 0.0;
      for (std::size_t c = 0; c < r; ++c) acc += ui[c] * vj[c];
      out[k] = acc;
    }
  });
}

inline CompressedVec compressed_outer_product(const DenseMatrix& u, const DenseMatrix& v,
                                              const CompressedConstraintOp& op) {
  require(u.rows() == op.n, "compressed_outer_product: factor row count mismatch");
  CompressedVec x{std::vector<double>(op.K())};
  compressed_outer_product(u, v, op.i_map, op.j_map, x.values);
  return x;
}

inline void apply_A(std::span<const double> x, const CompressedConstraintOp& op,
                    std::span<double> out) {
  require(x.size() == op.K(), "apply_A: compressed vector length mismatch");
  require(out.size() == op.m, "apply_A: output length mismatch");
  const auto& p = op.a_pattern;
  parallel_for(op.m, op.nnz() / std::max<std::size_t>(op.m, 1) + 1,
               [&](std::size_t begin, std::size_t end) {
                 for (std::size_t i = begin; i < end; ++i) {
                   double acc = 0.0;
                   for (std::size_t t = p.row_ptr[i]; t < p.row_ptr[i + 1]; ++t)
                     acc += op.a_values[t] * x[p.col_idx[t]];
                   out[i] = acc;
                 }
               });
}

inline std::vector<double> apply_A(const CompressedVec& x, const CompressedConstraintOp& op) {
  std::vector<double> out(op.m);
  apply_A(x.values, op, out);
  return out;
}

// out[k] = (A^T y) at retained column k.
inline void apply_At_retained(std::span<const double> y, const OmegaAdjointOp& adj,
                              std::span<double> out) {
  require(y.size() == adj.m, "apply_At: input length mismatch");
  require(out.size() == adj.retained(), "apply_At: output length mismatch");
  const auto& p = adj.at_pattern;
  parallel_for(out.size(), p.nnz() / std::max<std::size_t>(out.size(), 1) + 1,
               [&](std::size_t begin, std::size_t end) {
                 for (std::size_t k = begin; k < end; ++k) {
                   double acc = 0.0;
                   for (std::size_t t = p.row_ptr[k]; t < p.row_ptr[k + 1]; ++t)
                     acc += adj.at_values[t] * y[p.col_idx[t]];
                   out[k] = acc;
                 }
               });
}

// out[s] = (A^T y) at Omega slot s.
inline void apply_At(std::span<const double> y, const OmegaAdjointOp& adj, std::span<double> out) {
  require(out.size() == adj.size(), "apply_At: output length mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  std::vector<double> col(adj.retained());
  apply_At_retained(y, adj, col);
  for (std::size_t k = 0; k < col.size(); ++k) out[adj.slot_of_col[k]] = col[k];
}

inline std::vector<double> apply_At(std::span<const double> y, const OmegaAdjointOp& adj) {
  std::vector<double> out(adj.size());
  apply_At(y, adj, out);
  return out;
}

// S = c_scale * C + A^T (y [+ extra]) wrapped on the Omega pattern. The
// optional second coefficient vector is folded into y before the pass, so
// the sum is a dense update over |Omega| values with no index merging.
inline void assemble_S(const OmegaAdjointOp& adj, std::span<const double> y,
                       std::optional<std::span<const double>> extra, double c_scale,
                       CsrMatrix& out) {
  require(y.size() == adj.m, "assemble_S: multiplier length mismatch");
  require(!extra || extra->size() == adj.m, "assemble_S: second vector length mismatch");
  std::vector<double> combined;
  std::span<const double> w = y;
  if (extra) {
    combined.assign(y.begin(), y.end());
    axpy(1.0, *extra, combined);
    w = combined;
  }
  out.pattern = adj.s_pattern;
  out.values.resize(adj.size());
  for (std::size_t s = 0; s < adj.size(); ++s) out.values[s] = c_scale * adj.c_comp[s];
  const auto& p = adj.at_pattern;
  for (std::size_t k = 0; k < adj.retained(); ++k) {
    double acc = 0.0;
    for (std::size_t t = p.row_ptr[k]; t < p.row_ptr[k + 1]; ++t)
      acc += adj.at_values[t] * w[p.col_idx[t]];
    out.values[adj.slot_of_col[k]] += acc;
  }
}

inline CsrMatrix assemble_S(const OmegaAdjointOp& adj, std::span<const double> lambda,
                            std::optional<std::span<const double>> extra = std::nullopt) {
  CsrMatrix s;
  assemble_S(adj, lambda, extra, 1.0, s);
  return s;
}

// mat(A^T y) on the retained columns only (C does not enter).
inline void assemble_At(const OmegaAdjointOp& adj, std::span<const double> y, CsrMatrix& out) {
  out.pattern = adj.a_pattern;
  out.values.resize(adj.retained());
  apply_At_retained(y, adj, out.values);
}

}  // namespace lorasdp
