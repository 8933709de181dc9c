#pragma once

#include <cstddef>
#include <vector>

#include "ctxenc/tensor.hpp"

namespace ctxenc {

// Differentiable primitives. Every op records its backward step on the
// current thread's tape when one is active and any input requires a gradient.
// Gradients accumulate additively, so a tensor used several times receives
// the sum of all path gradients.

/// Elementwise sum; shapes must match.
template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b);

/// Elementwise difference; shapes must match.
template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b);

/// Hadamard (elementwise) product; shapes must match.
template <class S>
TensorT<S> hadamard(const TensorT<S>& a, const TensorT<S>& b);

/// Multiplies every entry by a constant.
template <class S>
TensorT<S> scale(const TensorT<S>& a, S factor);

/// Matrix [a x b] times vector [b] -> [a].
template <class S>
TensorT<S> matvec(const TensorT<S>& m, const TensorT<S>& v);

/// A [n x k] times B^T for B [m x k] -> [n x m].
template <class S>
TensorT<S> matmul_nt(const TensorT<S>& a, const TensorT<S>& b);

/// Multiplies every row of A [n x k] elementwise by v [k].
template <class S>
TensorT<S> row_broadcast_mul(const TensorT<S>& a, const TensorT<S>& v);

/// Copies row i of A [n x k] -> [k].
template <class S>
TensorT<S> row(const TensorT<S>& a, std::size_t i);

/// Softmax normalized ACROSS ROWS, independently per column: for every
/// column j, out(i,j) = exp(a(i,j)) / sum_l exp(a(l,j)). Each column of the
/// result sums to 1. Stabilized by per-column max subtraction. Rows are
/// tokens, columns are vector components.
template <class S>
TensorT<S> softmax_over_tokens(const TensorT<S>& a);

/// Sum over rows of the elementwise product: out[j] = sum_i w(i,j) * x(i,j).
/// This is the weighted aggregation of token rows into a single vector.
template <class S>
TensorT<S> weighted_sum_rows(const TensorT<S>& w, const TensorT<S>& x);

/// Column means of a [n x d] matrix -> [d].
template <class S>
TensorT<S> mean_rows(const TensorT<S>& x);

/// Stacks equal-length vectors into a matrix, one vector per row.
template <class S>
TensorT<S> stack_rows(const std::vector<TensorT<S>>& rows);

/// Sum of all entries -> scalar.
template <class S>
TensorT<S> sum(const TensorT<S>& a);

/// Inner product of two equally shaped tensors -> scalar.
template <class S>
TensorT<S> dot(const TensorT<S>& a, const TensorT<S>& b);

/// w . x + b -> scalar. b must be a scalar tensor.
template <class S>
TensorT<S> affine(const TensorT<S>& w, const TensorT<S>& x, const TensorT<S>& b);

/// Elementwise logistic function.
template <class S>
TensorT<S> sigmoid(const TensorT<S>& x);

/// Numerically stable binary cross-entropy on a raw logit, label in {0, 1}.
template <class S>
TensorT<S> bce_with_logits(const TensorT<S>& logit, int label);

/// Builds the token matrix of a document: row i is the embedding row for
/// ids[i] concatenated with row i of the (constant) position block
/// [n x p]. Gradients flow into the referenced embedding rows only.
template <class S>
TensorT<S> embed_concat(const TensorT<S>& table, const std::vector<std::size_t>& ids,
                        const TensorT<S>& positions);

/// Replays the current tape in reverse from a scalar loss, scaling the seed
/// gradient by `seed`. Requires an active tape on this thread.
template <class S>
void backward(const TensorT<S>& loss, S seed = S(1));

}  // namespace ctxenc
