#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "lorasdp/dense.hpp"
#include "lorasdp/linops.hpp"
#include "lorasdp/problem.hpp"

namespace lorasdp {

enum class CStorage { kAuto, kSparse, kDense };

// An assembled symmetric n x n matrix of the form  w C + A*(y): sparse on the
// Omega pattern normally, dense when C itself is stored densely.
class SMatrix {
 public:
  bool is_dense() const noexcept { return dense_; }
  std::size_t n() const noexcept { return dense_ ? full_.rows() : sparse_.rows(); }

  void multiply(const DenseMatrix& v, DenseMatrix& out) const {
    if (dense_)
      gemm_square(full_, v, out);
    else
      spmm(sparse_, v, out);
  }

  DenseMatrix multiply(const DenseMatrix& v) const {
    DenseMatrix out(n(), v.cols());
    multiply(v, out);
    return out;
  }

  double at(std::size_t i, std::size_t j) const { return dense_ ? full_(i, j) : sparse_.at(i, j); }

  const CsrMatrix& sparse() const { return sparse_; }
  CsrMatrix& sparse_mut() { dense_ = false; return sparse_; }
  DenseMatrix& dense_mut() { dense_ = true; return full_; }

 private:
  bool dense_ = false;
  CsrMatrix sparse_;
  DenseMatrix full_;
};

// Scratch owned by one caller; operators themselves stay immutable.
struct OpWorkspace {
  std::vector<double> xbar;  // length K
  std::vector<double> ybuf;  // length m
  std::vector<double> col;   // length K
};

// The compressed operators plus the bits of problem data the solver stages
// need. Copies share the heavy data; `scaled()` produces a view with the
// objective multiplied by a factor (used by the re-optimization rounds).
class SdpOperators {
 public:
  explicit SdpOperators(const SdpProblem& p, CStorage storage = CStorage::kAuto) {
    auto d = std::make_shared<Data>();
    auto ops = compress(p);
    d->a = std::move(ops.a);
    d->adj = std::move(ops.adj);
    d->b.assign(p.b().begin(), p.b().end());
    d->b_norm1 = p.b_norm1();
    d->b_norm_inf = p.b_norm_inf();
    d->c_norm1 = p.c_norm1();
    for (std::size_t k = 0; k < d->adj.size(); ++k)
      if (d->adj.c_comp[k] != 0.0) d->c_slots.push_back(k);
    d->n = p.n();
    d->m = p.m();
    const bool dense = storage == CStorage::kDense ||
                       (storage == CStorage::kAuto && p.prefers_dense_c());
    if (dense) {
      d->c_dense = std::make_unique<DenseMatrix>(p.n(), p.n());
      for (const auto& e : p.C().entries) {
        (*d->c_dense)(e.row, e.col) = e.value;
        (*d->c_dense)(e.col, e.row) = e.value;
      }
    }
    data_ = std::move(d);
  }

  std::size_t n() const noexcept { return data_->n; }
  std::size_t m() const noexcept { return data_->m; }
  std::span<const double> b() const noexcept { return data_->b; }
  double b_norm1() const noexcept { return data_->b_norm1; }
  double b_norm_inf() const noexcept { return data_->b_norm_inf; }
  double c_norm1() const noexcept { return data_->c_norm1; }
  const CompressedConstraintOp& a() const noexcept { return data_->a; }
  const OmegaAdjointOp& adj() const noexcept { return data_->adj; }
  bool dense_c() const noexcept { return data_->c_dense != nullptr; }
  double c_scale() const noexcept { return c_scale_; }

  SdpOperators scaled(double factor) const {
    SdpOperators s = *this;
    s.c_scale_ *= factor;
    return s;
  }

  // out = A(U V^T)
  void constraint_values(const DenseMatrix& u, const DenseMatrix& v, std::span<double> out,
                         OpWorkspace& ws) const {
    require(u.rows() == n() && v.rows() == n(), "constraint_values: factor row count mismatch");
    ws.xbar.resize(a().K());
    compressed_outer_product(u, v, a().i_map, a().j_map, ws.xbar);
    apply_A(ws.xbar, a(), out);
  }

  std::vector<double> constraint_values(const DenseMatrix& u, const DenseMatrix& v) const {
    OpWorkspace ws;
    std::vector<double> out(m());
    constraint_values(u, v, out, ws);
    return out;
  }

  // c_scale * <C, U V^T>, without forming U V^T.
  double objective(const DenseMatrix& u, const DenseMatrix& v) const {
    require(u.same_shape(v) && u.rows() == n(), "objective: factor shape mismatch");
    double s = 0.0;
    if (dense_c()) {
      DenseMatrix cv;
      gemm_square(*data_->c_dense, v, cv);
      s = dot(cv, u);
    } else {
      const auto& adj = data_->adj;
      const auto& cols = adj.s_pattern->col_idx;
      for (std::size_t q = 0; q < u.cols(); ++q) {
        const double* uq = u.col(q).data();
        const double* vq = v.col(q).data();
        double acc = 0.0;
        for (const std::size_t k : data_->c_slots)
          acc += adj.c_comp[k] * uq[adj.omega_row[k]] * vq[cols[k]];
        s += acc;
      }
    }
    return c_scale_ * s;
  }

  // out = c_weight * c_scale * C + A*(y [+ extra])
  void assemble(std::span<const double> y, std::optional<std::span<const double>> extra,
                double c_weight, SMatrix& out, OpWorkspace& ws) const {
    if (!dense_c()) {
      assemble_S(adj(), y, extra, c_weight * c_scale_, out.sparse_mut());
      return;
    }
    require(y.size() == m(), "assemble: multiplier length mismatch");
    std::span<const double> w = y;
    if (extra) {
      require(extra->size() == m(), "assemble: second vector length mismatch");
      ws.ybuf.assign(y.begin(), y.end());
      axpy(1.0, *extra, ws.ybuf);
      w = ws.ybuf;
    }
    DenseMatrix& full = out.dense_mut();
    const auto& c = *data_->c_dense;
    if (!full.same_shape(c)) full = DenseMatrix(n(), n());
    const double cw = c_weight * c_scale_;
    for (std::size_t k = 0; k < c.size(); ++k) full.flat()[k] = cw * c.flat()[k];
    ws.col.resize(a().K());
    apply_At_retained(w, adj(), ws.col);
    for (std::size_t k = 0; k < ws.col.size(); ++k) full(a().i_map[k], a().j_map[k]) += ws.col[k];
  }

  SMatrix assemble(std::span<const double> y,
                   std::optional<std::span<const double>> extra = std::nullopt,
                   double c_weight = 1.0) const {
    SMatrix s;
    OpWorkspace ws;
    assemble(y, extra, c_weight, s, ws);
    return s;
  }

  // Bytes held by the operator data (excluding per-call workspaces).
  std::size_t bytes() const noexcept {
    std::size_t b = data_->a.bytes() + data_->adj.bytes() + data_->b.size() * sizeof(double);
    if (data_->c_dense) b += data_->c_dense->size() * sizeof(double);
    return b;
  }

 private:
  struct Data {
    std::size_t n = 0;
    std::size_t m = 0;
    CompressedConstraintOp a;
    OmegaAdjointOp adj;
    std::vector<double> b;
    double b_norm1 = 0.0;
    double b_norm_inf = 0.0;
    double c_norm1 = 0.0;
    std::unique_ptr<DenseMatrix> c_dense;
    std::vector<std::size_t> c_slots;  // Omega slots where C is nonzero
  };
  std::shared_ptr<const Data> data_;
  double c_scale_ = 1.0;
};

}  // namespace lorasdp
