#pragma once

// SDP data model:  minimize <C, X>  s.t.  <A_i, X> = b_i (i < m),  X PSD.
//
// Symmetric matrices are stored as upper-triangle triplets (row <= col,
// 0-based). An off-diagonal triplet stands for both (i,j) and (j,i).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lorasdp/dense.hpp"
#include "lorasdp/errors.hpp"

namespace lorasdp {

using Index = std::uint32_t;

struct SparseEntry {
  Index row = 0;
  Index col = 0;
  double value = 0.0;

  bool operator==(const SparseEntry&) const = default;
};

// Sorts entries lexicographically, mirrors row > col entries into the upper
// triangle, sums duplicates and drops exact zeros. Returns the number of
// duplicate entries that were merged.
inline std::size_t canonicalize(std::vector<SparseEntry>& entries) {
  for (auto& e : entries) {
    if (e.row > e.col) std::swap(e.row, e.col);
  }
  std::sort(entries.begin(), entries.end(), [](const SparseEntry& a, const SparseEntry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::size_t merged = 0;
  std::size_t out = 0;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (out > 0 && entries[out - 1].row == entries[k].row && entries[out - 1].col == entries[k].col) {
      entries[out - 1].value += entries[k].value;
      ++merged;
    } else {
      entries[out++] = entries[k];
    }
  }
  entries.resize(out);
  std::erase_if(entries, [](const SparseEntry& e) { return e.value == 0.0; });
  return merged;
}

// <M, U V^T> for symmetric M given by its upper triangle.
inline double sym_inner(std::span<const SparseEntry> entries, const DenseMatrix& U,
                        const DenseMatrix& V) {
  require(U.same_shape(V), "sym_inner: factor shapes differ");
  double s = 0.0;
  for (const auto& e : entries) {
    double uv = 0.0;
    double vu = 0.0;
    for (std::size_t c = 0; c < U.cols(); ++c) {
      uv += U(e.row, c) * V(e.col, c);
      vu += U(e.col, c) * V(e.row, c);
    }
    s += e.row == e.col ? e.value * uv : e.value * (uv + vu);
  }
  return s;
}

struct SymmetricSparse {
  std::size_t n = 0;
  std::vector<SparseEntry> entries;

  // Number of nonzeros of the full n x n matrix.
  std::size_t full_nnz() const {
    std::size_t k = 0;
    for (const auto& e : entries) k += e.row == e.col ? 1 : 2;
    return k;
  }

  // ||vec(M)||_1 with off-diagonal entries counted twice.
  double abs_sum() const {
    double s = 0.0;
    for (const auto& e : entries) s += (e.row == e.col ? 1.0 : 2.0) * std::abs(e.value);
    return s;
  }

  // <M, x x^T>
  double quad_form(std::span<const double> x) const {
    require(x.size() == n, "quad_form: length mismatch");
    double s = 0.0;
    for (const auto& e : entries) {
      const double t = e.value * x[e.row] * x[e.col];
      s += e.row == e.col ? t : 2.0 * t;
    }
    return s;
  }

  double inner(const DenseMatrix& U, const DenseMatrix& V) const {
    require(U.rows() == n, "inner: factor row count mismatch");
    return sym_inner(entries, U, V);
  }

  bool operator==(const SymmetricSparse&) const = default;
};

// The m constraint matrices in one flat buffer; constraint i occupies
// entries[offsets[i] .. offsets[i+1]).
class ConstraintSet {
 public:
  ConstraintSet() : offsets_{0} {}

  std::size_t size() const noexcept { return offsets_.size() - 1; }
  std::span<const SparseEntry> operator[](std::size_t i) const {
    return {entries_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  std::span<const SparseEntry> all_entries() const noexcept { return entries_; }

  // Appends one constraint; entries are canonicalized first. Returns the
  // number of merged duplicates.
  std::size_t push_back(std::vector<SparseEntry> entries) {
    const std::size_t merged = canonicalize(entries);
    entries_.insert(entries_.end(), entries.begin(), entries.end());
    offsets_.push_back(entries_.size());
    return merged;
  }

  // Appends without canonicalization (used by validation tests).
  void push_back_raw(std::span<const SparseEntry> entries) {
    entries_.insert(entries_.end(), entries.begin(), entries.end());
    offsets_.push_back(entries_.size());
  }

  void reserve(std::size_t constraints, std::size_t entries) {
    offsets_.reserve(constraints + 1);
    entries_.reserve(entries);
  }

  std::size_t full_nnz() const {
    std::size_t k = 0;
    for (const auto& e : entries_) k += e.row == e.col ? 1 : 2;
    return k;
  }

  bool operator==(const ConstraintSet&) const = default;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<SparseEntry> entries_;
};

enum class Sense { kMinimize, kMaximize };

class SdpProblem {
 public:
  // `sense` only affects reporting: a kMaximize problem was given as
  // max <-C, X> and its objective is reported with the sign flipped back.
  SdpProblem(std::size_t n, SymmetricSparse c, ConstraintSet a, std::vector<double> b,
             Sense sense = Sense::kMinimize)
      : n_(n), c_(std::move(c)), a_(std::move(a)), b_(std::move(b)), sense_(sense) {
    if (n_ == 0) throw EmptyProblem("SdpProblem: n must be positive");
    c_.n = n_;
    require(b_.size() == a_.size(), "SdpProblem: b length differs from constraint count");
    b_norm1_ = norm1(b_);
    b_norm_inf_ = norm_inf(b_);
    c_norm1_ = c_.abs_sum();
  }

  std::size_t n() const noexcept { return n_; }
  std::size_t m() const noexcept { return a_.size(); }
  const SymmetricSparse& C() const noexcept { return c_; }
  const ConstraintSet& A() const noexcept { return a_; }
  std::span<const double> b() const noexcept { return b_; }
  Sense sense() const noexcept { return sense_; }

  double b_norm1() const noexcept { return b_norm1_; }
  double b_norm_inf() const noexcept { return b_norm_inf_; }
  double c_norm1() const noexcept { return c_norm1_; }

  // Objective as the user posed it (sign restored for maximization input).
  double reported_objective(double min_form_value) const noexcept {
    return sense_ == Sense::kMaximize ? -min_form_value : min_form_value;
  }

  // Dense storage for C pays off when it is both dense and small.
  bool prefers_dense_c() const noexcept {
    const double fill = static_cast<double>(c_.full_nnz()) / (static_cast<double>(n_) * n_);
    return fill > 0.25 && n_ <= 4096;
  }

  bool operator==(const SdpProblem& o) const {
    return n_ == o.n_ && c_ == o.c_ && a_ == o.a_ && b_ == o.b_ && sense_ == o.sense_;
  }

 private:
  std::size_t n_;
  SymmetricSparse c_;
  ConstraintSet a_;
  std::vector<double> b_;
  Sense sense_;
  double b_norm1_ = 0.0;
  double b_norm_inf_ = 0.0;
  double c_norm1_ = 0.0;
};

// ---------------------------------------------------------------------------
// Problem families
// ---------------------------------------------------------------------------

struct Edge {
  Index u = 0;  // u < v, 0-based
  Index v = 0;
  double w = 1.0;
};

struct GraphEdgeList {
  std::size_t n = 0;
  std::vector<Edge> edges;
};

struct Observation {
  Index i = 0;  // row of M, 0-based
  Index j = 0;  // column of M, 0-based
  double value = 0.0;
};

struct ObservationSet {
  std::size_t rows = 0;  // n2
  std::size_t cols = 0;  // n1
  std::vector<Observation> obs;
};

inline void check_graph(const GraphEdgeList& g) {
  std::vector<std::pair<Index, Index>> seen;
  seen.reserve(g.edges.size());
  for (const auto& e : g.edges) {
    require(e.u < e.v, "graph: edges must satisfy u < v (no self-loops)");
    require(e.v < g.n, "graph: vertex index out of range");
    seen.emplace_back(e.u, e.v);
  }
  std::sort(seen.begin(), seen.end());
  require(std::adjacent_find(seen.begin(), seen.end()) == seen.end(), "graph: duplicate edge");
}

// MaxCut relaxation  max <L/4, X>  s.t. X_ii = 1, posed as min <-L/4, X>.
inline SdpProblem build_maxcut(const GraphEdgeList& g) {
  if (g.n == 0) throw EmptyProblem("maxcut: graph has no vertices");
  check_graph(g);
  std::vector<double> degree(g.n, 0.0);
  std::vector<SparseEntry> c;
  c.reserve(g.edges.size() + g.n);
  for (const auto& e : g.edges) {
    degree[e.u] += e.w;
    degree[e.v] += e.w;
    c.push_back({e.u, e.v, 0.25 * e.w});
  }
  for (std::size_t i = 0; i < g.n; ++i)
    c.push_back({static_cast<Index>(i), static_cast<Index>(i), -0.25 * degree[i]});
  canonicalize(c);

  ConstraintSet a;
  a.reserve(g.n, g.n);
  for (std::size_t i = 0; i < g.n; ++i)
    a.push_back_raw(std::vector<SparseEntry>{{static_cast<Index>(i), static_cast<Index>(i), 1.0}});
  return SdpProblem(g.n, SymmetricSparse{g.n, std::move(c)}, std::move(a),
                    std::vector<double>(g.n, 1.0), Sense::kMaximize);
}

// Nuclear-norm completion as an SDP over X = [[W1, Y^T], [Y, W2]] with
// Y (n2 x n1) pinned to M on the observed entries:
//   min tr(X)  s.t.  <E_ij + E_ij^T, X> = 2 M_ij.
// The optimal value is 2 ||M_hat||_* for the min-nuclear-norm completion.
inline SdpProblem build_matrix_completion(const ObservationSet& o) {
  if (o.obs.empty()) throw EmptyProblem("completion: no observations");
  require(o.rows > 0 && o.cols > 0, "completion: empty matrix shape");
  const std::size_t n = o.rows + o.cols;
  std::vector<std::pair<Index, Index>> seen;
  seen.reserve(o.obs.size());
  for (const auto& ob : o.obs) {
    require(ob.i < o.rows && ob.j < o.cols, "completion: observation index out of range");
    seen.emplace_back(ob.i, ob.j);
  }
  std::sort(seen.begin(), seen.end());
  require(std::adjacent_find(seen.begin(), seen.end()) == seen.end(),
          "completion: duplicate observation");

  std::vector<SparseEntry> c;
  c.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    c.push_back({static_cast<Index>(i), static_cast<Index>(i), 1.0});

  ConstraintSet a;
  a.reserve(o.obs.size(), o.obs.size());
  std::vector<double> b;
  b.reserve(o.obs.size());
  for (const auto& ob : o.obs) {
    const auto col = ob.j;
    const auto row = static_cast<Index>(o.cols + ob.i);
    a.push_back_raw(std::vector<SparseEntry>{{col, row, 1.0}});
    b.push_back(2.0 * ob.value);
  }
  return SdpProblem(n, SymmetricSparse{n, std::move(c)}, std::move(a), std::move(b));
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct Diagnostics {
  std::size_t out_of_range = 0;
  std::size_t duplicates = 0;
  std::size_t symmetry_violations = 0;  // stored entries with row > col
  std::size_t nnz_a = 0;                // nonzeros of the stacked m x n^2 operator
  std::size_t nnz_c = 0;                // nonzeros of the full C
  std::size_t nonzero_columns = 0;      // distinct (i,j) positions touched by any A_i
  bool empty_constraints = false;
  std::vector<std::string> messages;

  bool ok() const {
    return out_of_range == 0 && duplicates == 0 && symmetry_violations == 0 && !empty_constraints;
  }
};

inline Diagnostics validate(const SdpProblem& p) {
  Diagnostics d;
  const std::size_t n = p.n();
  auto scan = [&](std::span<const SparseEntry> entries, const std::string& name) {
    std::vector<std::pair<Index, Index>> keys;
    keys.reserve(entries.size());
    for (const auto& e : entries) {
      if (e.row >= n || e.col >= n) {
        ++d.out_of_range;
        d.messages.push_back(name + ": index out of range");
        continue;
      }
      if (e.row > e.col) {
        ++d.symmetry_violations;
        d.messages.push_back(name + ": entry below the diagonal (" + std::to_string(e.row + 1) +
                             "," + std::to_string(e.col + 1) + ")");
      }
      keys.emplace_back(std::min(e.row, e.col), std::max(e.row, e.col));
    }
    std::sort(keys.begin(), keys.end());
    for (std::size_t k = 1; k < keys.size(); ++k) {
      if (keys[k] == keys[k - 1]) {
        ++d.duplicates;
        d.messages.push_back(name + ": duplicate entry");
      }
    }
  };

  scan(p.C().entries, "C");
  for (std::size_t i = 0; i < p.m(); ++i) scan(p.A()[i], "A" + std::to_string(i + 1));
  if (p.m() == 0) {
    d.empty_constraints = true;
    d.messages.push_back("problem has no constraints");
  }

  d.nnz_c = p.C().full_nnz();
  d.nnz_a = p.A().full_nnz();

  std::vector<std::pair<Index, Index>> cols;
  cols.reserve(d.nnz_a);
  for (const auto& e : p.A().all_entries()) {
    if (e.row >= n || e.col >= n || e.value == 0.0) continue;
    cols.emplace_back(e.row, e.col);
    if (e.row != e.col) cols.emplace_back(e.col, e.row);
  }
  std::sort(cols.begin(), cols.end());
  d.nonzero_columns = static_cast<std::size_t>(std::unique(cols.begin(), cols.end()) - cols.begin());
  return d;
}

}  // namespace lorasdp
