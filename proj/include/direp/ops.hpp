#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "direp/tensor.hpp"

namespace direp {

// Elementwise arithmetic. Operands must have equal shapes, or one of them
// must hold a single element (scalar broadcast). Nothing else broadcasts.
template <typename Real> Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> scale(const Tensor<Real>& x, Real factor);
template <typename Real> Tensor<Real> add_scalar(const Tensor<Real>& x, Real value);

/// [n, k] x [k, m] -> [n, m]
template <typename Real> Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);
/// x W + b for x [n, k], W [k, m], b [m].
template <typename Real>
Tensor<Real> affine(const Tensor<Real>& x, const Tensor<Real>& weight, const Tensor<Real>& bias);
template <typename Real> Tensor<Real> transpose(const Tensor<Real>& x);
template <typename Real> Tensor<Real> reshape(const Tensor<Real>& x, Shape shape);

/// Joins rank-2 tensors along the last axis; row counts must agree.
template <typename Real> Tensor<Real> concat_last(std::span<const Tensor<Real>> parts);
template <typename Real> Tensor<Real> concat_last(const Tensor<Real>& a, const Tensor<Real>& b);
/// Stacks rank-2 tensors along the first axis; column counts must agree.
template <typename Real> Tensor<Real> concat_rows(std::span<const Tensor<Real>> parts);
template <typename Real> Tensor<Real> slice_rows(const Tensor<Real>& x, std::size_t begin, std::size_t end);
template <typename Real>
Tensor<Real> gather_rows(const Tensor<Real>& x, std::span<const std::size_t> indices);

template <typename Real> Tensor<Real> relu(const Tensor<Real>& x);
template <typename Real> Tensor<Real> sigmoid(const Tensor<Real>& x);
/// Row-max stabilized softmax over the last axis.
template <typename Real> Tensor<Real> softmax_last(const Tensor<Real>& x);
template <typename Real> Tensor<Real> log_softmax_last(const Tensor<Real>& x);
/// Throws DomainError if any entry is <= 0.
template <typename Real> Tensor<Real> log(const Tensor<Real>& x);
template <typename Real> Tensor<Real> exp(const Tensor<Real>& x);

/// Mean over the first axis: [n, rest...] -> [rest...]; a vector reduces to a scalar.
template <typename Real> Tensor<Real> batch_mean(const Tensor<Real>& x);
/// Sum over the last axis: [..., k] -> [...].
template <typename Real> Tensor<Real> sum_last(const Tensor<Real>& x);
template <typename Real> Tensor<Real> sum_all(const Tensor<Real>& x);
template <typename Real> Tensor<Real> sum_of_squares(const Tensor<Real>& x);

/// Subtracts each column's mean over the rows of a rank-2 tensor.
template <typename Real> Tensor<Real> center_columns(const Tensor<Real>& x);
/// Divides each row of a rank-2 tensor by its L2 norm (plus a tiny floor).
template <typename Real> Tensor<Real> normalize_rows(const Tensor<Real>& x);

/// Identity on the forward pass; multiplies the incoming gradient by
/// `factor` on the way back. factor = -lambda is gradient reversal.
template <typename Real> Tensor<Real> scale_gradient(const Tensor<Real>& x, Real factor);

enum class OpKind {
  add,
  subtract,
  multiply,
  matmul,
  concat_last,
  relu,
  sigmoid,
  softmax_last,
  log,
  exp,
  batch_mean,
  sum_of_squares,
};

std::string_view op_name(OpKind kind);

/// Dispatches `kind` over `inputs`, checking arity.
template <typename Real>
Tensor<Real> apply(OpKind kind, std::span<const Tensor<Real>> inputs);

}  // namespace direp
