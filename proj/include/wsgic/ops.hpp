#pragma once

// Differentiable primitives. All ops use the matrix view of Tensor (rows x
// cols, last extent = cols) and raise ShapeMismatch on incompatible inputs.

#include <cstddef>
#include <span>
#include <vector>

#include "wsgic/tensor.hpp"

namespace wsgic {

// a[m x k] * b[k x n]. A rank-1 a is treated as a single row and the result
// keeps a's leading shape.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// a[m x k] * b[n x k]^T -> [m x n].
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

// Elementwise sum. b may also be a single row of a's column count, in which
// case it is broadcast over every row of a.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

template <typename T>
Tensor<T> tanh(const Tensor<T>& x);

// Softmax along axis 0 (down columns) or 1 (along rows). -1 means the last axis.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis = -1);

inline constexpr double kLayerNormEps = 1e-5;

// Per-row normalisation to zero mean / unit variance, then gain * xhat + bias.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(kLayerNormEps));

// axis 0 stacks rows, axis 1 joins columns.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t end);

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end);

// Mean over rows -> [1 x cols].
template <typename T>
Tensor<T> mean_pool(const Tensor<T>& x);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

// Gathers rows of table[vocab x dim] -> [ids.size() x dim].
template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const int> ids);

// Mean over rows whose target differs from ignore_index of -log softmax(row)[target].
// Returns 0 when every row is ignored.
template <typename T>
Tensor<T> cross_entropy_from_logits(const Tensor<T>& logits, std::span<const int> targets,
                                    int ignore_index = -1);

// Sum over entries of the numerically stable binary cross-entropy with logits.
template <typename T>
Tensor<T> sigmoid_bce(const Tensor<T>& logits, std::span<const T> targets);

// Same values, no gradient path back to x.
template <typename T>
Tensor<T> detach(const Tensor<T>& x);

}  // namespace wsgic
