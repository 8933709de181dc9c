#include "ctxenc/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

#include "ctxenc/errors.hpp"
#include "ctxenc/macs.hpp"

namespace ctxenc {

namespace {

template <class S>
using MatrixRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using ConstMatMap = Eigen::Map<const MatrixRM<S>>;
template <class S>
using MatMap = Eigen::Map<MatrixRM<S>>;
template <class S>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>;
template <class S>
using VecMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>;

template <class S>
bool wants_tape(const TensorT<S>& a) {
  return TapeT<S>::current() != nullptr && a.requires_grad();
}

template <class S>
void check_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

template <class S>
void check_matrix(const TensorT<S>& a, const char* op) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_to_string(a.shape()));
  }
}

template <class S>
void check_vector(const TensorT<S>& a, const char* op) {
  if (a.rank() != 1) {
    throw DimensionError(std::string(op) + ": expected a vector, got " +
                         shape_to_string(a.shape()));
  }
}

}  // namespace

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  check_same_shape(a, b, "add");
  const bool track = wants_tape(a) || wants_tape(b);
  TensorT<S> out = TensorT<S>::zeros(a.shape(), track);
  for (std::size_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) + b.at(i);
  if (track) {
    TapeT<S>::current()->record([a = a, b = b, out]() mutable {
      for (std::size_t i = 0; i < out.numel(); ++i) {
        const S g = out.grad()[i];
        if (a.requires_grad()) a.grad()[i] += g;
        if (b.requires_grad()) b.grad()[i] += g;
      }
    });
  }
  return out;
}

template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
  check_same_shape(a, b, "sub");
  const bool track = wants_tape(a) || wants_tape(b);
  TensorT<S> out = TensorT<S>::zeros(a.shape(), track);
  for (std::size_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) - b.at(i);
  if (track) {
    TapeT<S>::current()->record([a = a, b = b, out]() mutable {
      for (std::size_t i = 0; i < out.numel(); ++i) {
        const S g = out.grad()[i];
        if (a.requires_grad()) a.grad()[i] += g;
        if (b.requires_grad()) b.grad()[i] -= g;
      }
    });
  }
  return out;
}

template <class S>
TensorT<S> hadamard(const TensorT<S>& a, const TensorT<S>& b) {
  check_same_shape(a, b, "hadamard");
  macs::add(a.numel());
  const bool track = wants_tape(a) || wants_tape(b);
  TensorT<S> out = TensorT<S>::zeros(a.shape(), track);
  for (std::size_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) * b.at(i);
  if (track) {
    TapeT<S>::current()->record([a = a, b = b, out]() mutable {
      macs::add(2 * out.numel());
      for (std::size_t i = 0; i < out.numel(); ++i) {
        const S g = out.grad()[i];
        if (a.requires_grad()) a.grad()[i] += g * b.at(i);
        if (b.requires_grad()) b.grad()[i] += g * a.at(i);
      }
    });
  }
  return out;
}

template <class S>
TensorT<S> scale(const TensorT<S>& a, S factor) {
  const bool track = wants_tape(a);
  TensorT<S> out = TensorT<S>::zeros(a.shape(), track);
  for (std::size_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) * factor;
  if (track) {
    TapeT<S>::current()->record([a = a, out, factor]() mutable {
      for (std::size_t i = 0; i < out.numel(); ++i) a.grad()[i] += out.grad()[i] * factor;
    });
  }
  return out;
}

template <class S>
TensorT<S> matvec(const TensorT<S>& m, const TensorT<S>& v) {
  check_matrix(m, "matvec");
  check_vector(v, "matvec");
  const std::size_t rows = m.dim(0);
  const std::size_t cols = m.dim(1);
  if (cols != v.dim(0)) {
    throw DimensionError("matvec: inner dimensions differ " + shape_to_string(m.shape()) +
                         " vs " + shape_to_string(v.shape()));
  }
  macs::add(static_cast<std::uint64_t>(rows) * cols);
  const bool track = wants_tape(m) || wants_tape(v);
  TensorT<S> out = TensorT<S>::zeros({rows}, track);
  {
    ConstMatMap<S> em(m.values().data(), rows, cols);
    ConstVecMap<S> ev(v.values().data(), cols);
    VecMap<S> eo(out.values().data(), rows);
    eo.noalias() = em * ev;
  }
  if (track) {
    TapeT<S>::current()->record([m = m, v = v, out, rows, cols]() mutable {
      ConstVecMap<S> g(out.grad().data(), rows);
      if (m.requires_grad()) {
        macs::add(static_cast<std::uint64_t>(rows) * cols);
        MatMap<S> dm(m.grad().data(), rows, cols);
        ConstVecMap<S> ev(v.values().data(), cols);
        dm.noalias() += g * ev.transpose();
      }
      if (v.requires_grad()) {
        macs::add(static_cast<std::uint64_t>(rows) * cols);
        ConstMatMap<S> em(m.values().data(), rows, cols);
        VecMap<S> dv(v.grad().data(), cols);
        dv.noalias() += em.transpose() * g;
      }
    });
  }
  return out;
}

template <class S>
TensorT<S> matmul_nt(const TensorT<S>& a, const TensorT<S>& b) {
  check_matrix(a, "matmul_nt");
  check_matrix(b, "matmul_nt");
  const std::size_t n = a.dim(0);
  const std::size_t k = a.dim(1);
  const std::size_t m = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("matmul_nt: inner dimensions differ " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
  macs::add(static_cast<std::uint64_t>(n) * m * k);
  const bool track = wants_tape(a) || wants_tape(b);
  TensorT<S> out = TensorT<S>::zeros({n, m}, track);
  {
    ConstMatMap<S> ea(a.values().data(), n, k);
    ConstMatMap<S> eb(b.values().data(), m, k);
    MatMap<S> eo(out.values().data(), n, m);
    eo.noalias() = ea * eb.transpose();
  }
  if (track) {
    TapeT<S>::current()->record([a = a, b = b, out, n, k, m]() mutable {
      ConstMatMap<S> g(out.grad().data(), n, m);
      if (a.requires_grad()) {
        macs::add(static_cast<std::uint64_t>(n) * m * k);
        MatMap<S> da(a.grad().data(), n, k);
        ConstMatMap<S> eb(b.values().data(), m, k);
        da.noalias() += g * eb;
      }
      if (b.requires_grad()) {
        macs::add(static_cast<std::uint64_t>(n) * m * k);
        MatMap<S> db(b.grad().data(), m, k);
        ConstMatMap<S> ea(a.values().data(), n, k);
        db.noalias() += g.transpose() * ea;
      }
    });
  }
  return out;
}

template <class S>
TensorT<S> row_broadcast_mul(const TensorT<S>& a, const TensorT<S>& v) {
  check_matrix(a, "row_broadcast_mul");
  check_vector(v, "row_broadcast_mul");
  const std::size_t n = a.dim(0);
  const std::size_t k = a.dim(1);
  if (v.dim(0) != k) {
    throw DimensionError("row_broadcast_mul: row width differs " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(v.shape()));
  }
  macs::add(static_cast<std::uint64_t>(n) * k);
  const bool track = wants_tape(a) || wants_tape(v);
  TensorT<S> out = TensorT<S>::zeros({n, k}, track);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) out.at(i, j) = a.at(i, j) * v.at(j);
  }
  if (track) {
    TapeT<S>::current()->record([a = a, v = v, out, n, k]() mutable {
      macs::add(2 * static_cast<std::uint64_t>(n) * k);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          const S g = out.grad()[i * k + j];
          if (a.requires_grad()) a.grad()[i * k + j] += g * v.at(j);
          if (v.requires_grad()) v.grad()[j] += g * a.at(i, j);
        }
      }
    });
  }
  return out;
}

template <class S>
TensorT<S> row(const TensorT<S>& a, std::size_t i) {
  check_matrix(a, "row");
  const std::size_t n = a.dim(0);
  const std::size_t k = a.dim(1);
  if (i >= n) {
    throw DimensionError("row: index " + std::to_string(i) + " out of range for " +
                         shape_to_string(a.shape()));
  }
  const bool track = wants_tape(a);
  TensorT<S> out = TensorT<S>::zeros({k}, track);
  for (std::size_t j = 0; j < k; ++j) out.at(j) = a.at(i, j);
  if (track) {
    TapeT<S>::current()->record([a = a, out, i, k]() mutable {
      for (std::size_t j = 0; j < k; ++j) a.grad()[i * k + j] += out.grad()[j];
    });
  }
  return out;
}

template <class S>
TensorT<S> softmax_over_tokens(const TensorT<S>& a) {
  check_matrix(a, "softmax_over_tokens");
  const std::size_t n = a.dim(0);
  const std::size_t d = a.dim(1);
  if (n == 0) {
    throw DimensionError("softmax_over_tokens: needs at least one row");
  }
  for (std::size_t i = 0; i < a.numel(); ++i) {
    if (!std::isfinite(static_cast<double>(a.at(i)))) {
      throw NumericError("softmax_over_tokens: non-finite input");
    }
  }
  const bool track = wants_tape(a);
  TensorT<S> out = TensorT<S>::zeros({n, d}, track);
  for (std::size_t j = 0; j < d; ++j) {
    S column_max = a.at(0, j);
    for (std::size_t i = 1; i < n; ++i) column_max = std::max(column_max, a.at(i, j));
    S denom = S(0);
    for (std::size_t i = 0; i < n; ++i) {
      const S e = std::exp(a.at(i, j) - column_max);
      out.at(i, j) = e;
      denom += e;
    }
    for (std::size_t i = 0; i < n; ++i) out.at(i, j) /= denom;
  }
  if (track) {
    TapeT<S>::current()->record([a = a, out, n, d]() mutable {
      for (std::size_t j = 0; j < d; ++j) {
        S weighted = S(0);
        for (std::size_t i = 0; i < n; ++i) weighted += out.grad()[i * d + j] * out.at(i, j);
        for (std::size_t i = 0; i < n; ++i) {
          a.grad()[i * d + j] += out.at(i, j) * (out.grad()[i * d + j] - weighted);
        }
      }
    });
  }
  return out;
}

template <class S>
TensorT<S> weighted_sum_rows(const TensorT<S>& w, const TensorT<S>& x) {
  check_matrix(w, "weighted_sum_rows");
  check_same_shape(w, x, "weighted_sum_rows");
  const std::size_t n = w.dim(0);
  const std::size_t d = w.dim(1);
  macs::add(static_cast<std::uint64_t>(n) * d);
  const bool track = wants_tape(w) || wants_tape(x);
  TensorT<S> out = TensorT<S>::zeros({d}, track);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out.at(j) += w.at(i, j) * x.at(i, j);
  }
  if (track) {
    TapeT<S>::current()->record([w = w, x = x, out, n, d]() mutable {
      macs::add(2 * static_cast<std::uint64_t>(n) * d);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          const S g = out.grad()[j];
          if (w.requires_grad()) w.grad()[i * d + j] += g * x.at(i, j);
          if (x.requires_grad()) x.grad()[i * d + j] += g * w.at(i, j);
        }
      }
    });
  }
  return out;
}

template <class S>
TensorT<S> mean_rows(const TensorT<S>& x) {
  check_matrix(x, "mean_rows");
  const std::size_t n = x.dim(0);
  const std::size_t d = x.dim(1);
  if (n == 0) {
    throw DimensionError("mean_rows: needs at least one row");
  }
  const bool track = wants_tape(x);
  TensorT<S> out = TensorT<S>::zeros({d}, track);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out.at(j) += x.at(i, j);
  }
  const S inv = S(1) / static_cast<S>(n);
  for (std::size_t j = 0; j < d; ++j) out.at(j) *= inv;
  if (track) {
    TapeT<S>::current()->record([x = x, out, n, d, inv]() mutable {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) x.grad()[i * d + j] += out.grad()[j] * inv;
      }
    });
  }
  return out;
}

template <class S>
TensorT<S> stack_rows(const std::vector<TensorT<S>>& rows) {
  if (rows.empty()) throw DimensionError("stack_rows: needs at least one row");
  const std::size_t d = rows.front().numel();
  bool track = false;
  for (const auto& r : rows) {
    check_vector(r, "stack_rows");
    if (r.numel() != d) {
      throw DimensionError("stack_rows: row length mismatch " + shape_to_string(r.shape()) +
                           " vs " + shape_to_string(rows.front().shape()));
    }
    track = track || wants_tape(r);
  }
  const std::size_t n = rows.size();
  TensorT<S> out = TensorT<S>::zeros({n, d}, track);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = rows[i].at(j);
  }
  if (track) {
    TapeT<S>::current()->record([rows = rows, out, n, d]() mutable {
      for (std::size_t i = 0; i < n; ++i) {
        if (!rows[i].requires_grad()) continue;
        for (std::size_t j = 0; j < d; ++j) rows[i].grad()[j] += out.grad()[i * d + j];
      }
    });
  }
  return out;
}

template <class S>
TensorT<S> sum(const TensorT<S>& a) {
  const bool track = wants_tape(a);
  TensorT<S> out = TensorT<S>::zeros({1}, track);
  S total = S(0);
  for (std::size_t i = 0; i < a.numel(); ++i) total += a.at(i);
  out.at(0) = total;
  if (track) {
    TapeT<S>::current()->record([a = a, out]() mutable {
      const S g = out.grad()[0];
      for (std::size_t i = 0; i < a.numel(); ++i) a.grad()[i] += g;
    });
  }
  return out;
}

template <class S>
TensorT<S> dot(const TensorT<S>& a, const TensorT<S>& b) {
  check_same_shape(a, b, "dot");
  macs::add(a.numel());
  const bool track = wants_tape(a) || wants_tape(b);
  TensorT<S> out = TensorT<S>::zeros({1}, track);
  S total = S(0);
  for (std::size_t i = 0; i < a.numel(); ++i) total += a.at(i) * b.at(i);
  out.at(0) = total;
  if (track) {
    TapeT<S>::current()->record([a = a, b = b, out]() mutable {
      macs::add(2 * out.numel());
      const S g = out.grad()[0];
      for (std::size_t i = 0; i < a.numel(); ++i) {
        if (a.requires_grad()) a.grad()[i] += g * b.at(i);
        if (b.requires_grad()) b.grad()[i] += g * a.at(i);
      }
    });
  }
  return out;
}

template <class S>
TensorT<S> affine(const TensorT<S>& w, const TensorT<S>& x, const TensorT<S>& b) {
  check_vector(w, "affine");
  check_vector(x, "affine");
  check_same_shape(w, x, "affine");
  if (b.numel() != 1) {
    throw DimensionError("affine: bias must be scalar, got " + shape_to_string(b.shape()));
  }
  macs::add(w.numel());
  const bool track = wants_tape(w) || wants_tape(x) || wants_tape(b);
  TensorT<S> out = TensorT<S>::zeros({1}, track);
  S total = b.at(0);
  for (std::size_t i = 0; i < w.numel(); ++i) total += w.at(i) * x.at(i);
  out.at(0) = total;
  if (track) {
    TapeT<S>::current()->record([w = w, x = x, b = b, out]() mutable {
      macs::add(2 * w.numel());
      const S g = out.grad()[0];
      for (std::size_t i = 0; i < w.numel(); ++i) {
        if (w.requires_grad()) w.grad()[i] += g * x.at(i);
        if (x.requires_grad()) x.grad()[i] += g * w.at(i);
      }
      if (b.requires_grad()) b.grad()[0] += g;
    });
  }
  return out;
}

template <class S>
TensorT<S> sigmoid(const TensorT<S>& x) {
  const bool track = wants_tape(x);
  TensorT<S> out = TensorT<S>::zeros(x.shape(), track);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    out.at(i) = S(1) / (S(1) + std::exp(-x.at(i)));
  }
  if (track) {
    TapeT<S>::current()->record([x = x, out]() mutable {
      for (std::size_t i = 0; i < out.numel(); ++i) {
        const S s = out.at(i);
        x.grad()[i] += out.grad()[i] * s * (S(1) - s);
      }
    });
  }
  return out;
}

template <class S>
TensorT<S> bce_with_logits(const TensorT<S>& logit, int label) {
  if (logit.numel() != 1) {
    throw DimensionError("bce_with_logits: logit must be scalar, got " +
                         shape_to_string(logit.shape()));
  }
  if (label != 0 && label != 1) {
    throw InputError("bce_with_logits: label must be 0 or 1, got " + std::to_string(label));
  }
  const S z = logit.at(0);
  if (!std::isfinite(static_cast<double>(z))) {
    throw NumericError("bce_with_logits: non-finite logit");
  }
  const S y = static_cast<S>(label);
  const bool track = wants_tape(logit);
  TensorT<S> out = TensorT<S>::zeros({1}, track);
  // max(z, 0) - z*y + log(1 + exp(-|z|)) avoids overflow on both tails.
  out.at(0) = std::max(z, S(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
  if (track) {
    TapeT<S>::current()->record([logit = logit, out, y]() mutable {
      const S z = logit.at(0);
      const S s = S(1) / (S(1) + std::exp(-z));
      logit.grad()[0] += out.grad()[0] * (s - y);
    });
  }
  return out;
}

template <class S>
TensorT<S> embed_concat(const TensorT<S>& table, const std::vector<std::size_t>& ids,
                        const TensorT<S>& positions) {
  check_matrix(table, "embed_concat");
  check_matrix(positions, "embed_concat");
  const std::size_t n = ids.size();
  if (n == 0) {
    throw InputError("embed_concat: empty token sequence");
  }
  if (positions.dim(0) != n) {
    throw DimensionError("embed_concat: position block has " +
                         std::to_string(positions.dim(0)) + " rows for " + std::to_string(n) +
                         " tokens");
  }
  const std::size_t v = table.dim(1);
  const std::size_t p = positions.dim(1);
  for (std::size_t id : ids) {
    if (id >= table.dim(0)) {
      throw DimensionError("embed_concat: token id " + std::to_string(id) +
                           " outside table with " + std::to_string(table.dim(0)) + " rows");
    }
  }
  const bool track = wants_tape(table);
  TensorT<S> out = TensorT<S>::zeros({n, v + p}, track);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < v; ++j) out.at(i, j) = table.at(ids[i], j);
    for (std::size_t j = 0; j < p; ++j) out.at(i, v + j) = positions.at(i, j);
  }
  if (track) {
    TapeT<S>::current()->record([table = table, out, ids, n, v, p]() mutable {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < v; ++j) {
          table.grad()[ids[i] * v + j] += out.grad()[i * (v + p) + j];
        }
      }
    });
  }
  return out;
}

template <class S>
void backward(const TensorT<S>& loss, S seed) {
  TapeT<S>* tape = TapeT<S>::current();
  if (tape == nullptr) {
    throw ContractViolation("backward: no active tape on this thread");
  }
  tape->backward(loss, seed);
}

#define CTXENC_INSTANTIATE_OPS(S)                                                            \
  template TensorT<S> add<S>(const TensorT<S>&, const TensorT<S>&);                          \
  template TensorT<S> sub<S>(const TensorT<S>&, const TensorT<S>&);                          \
  template TensorT<S> hadamard<S>(const TensorT<S>&, const TensorT<S>&);                     \
  template TensorT<S> scale<S>(const TensorT<S>&, S);                                        \
  template TensorT<S> matvec<S>(const TensorT<S>&, const TensorT<S>&);                       \
  template TensorT<S> matmul_nt<S>(const TensorT<S>&, const TensorT<S>&);                    \
  template TensorT<S> row_broadcast_mul<S>(const TensorT<S>&, const TensorT<S>&);            \
  template TensorT<S> row<S>(const TensorT<S>&, std::size_t);                                \
  template TensorT<S> softmax_over_tokens<S>(const TensorT<S>&);                             \
  template TensorT<S> weighted_sum_rows<S>(const TensorT<S>&, const TensorT<S>&);            \
  template TensorT<S> mean_rows<S>(const TensorT<S>&);                                       \
  template TensorT<S> stack_rows<S>(const std::vector<TensorT<S>>&);                         \
  template TensorT<S> sum<S>(const TensorT<S>&);                                             \
  template TensorT<S> dot<S>(const TensorT<S>&, const TensorT<S>&);                          \
  template TensorT<S> affine<S>(const TensorT<S>&, const TensorT<S>&, const TensorT<S>&);    \
  template TensorT<S> sigmoid<S>(const TensorT<S>&);                                         \
  template TensorT<S> bce_with_logits<S>(const TensorT<S>&, int);                            \
  template TensorT<S> embed_concat<S>(const TensorT<S>&, const std::vector<std::size_t>&,    \
                                      const TensorT<S>&);                                    \
  template void backward<S>(const TensorT<S>&, S);

CTXENC_INSTANTIATE_OPS(float)
CTXENC_INSTANTIATE_OPS(double)

#undef CTXENC_INSTANTIATE_OPS

}  // namespace ctxenc
