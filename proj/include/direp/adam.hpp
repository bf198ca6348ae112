#pragma once

#include <cstdint>
#include <vector>

#include "direp/tensor.hpp"

namespace direp {

/// Per-parameter Adam moments.
template <typename Real>
struct AdamState {
  std::vector<Real> first_moment;
  std::vector<Real> second_moment;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t size) : first_moment(size, Real(0)), second_moment(size, Real(0)) {}
};

/// One bias-corrected Adam step on `param` using its accumulated gradient,
/// then zeroes that gradient. Throws ContractError if no gradient exists.
template <typename Real>
void adam_update(Tensor<Real>& param, AdamState<Real>& state, double learning_rate);

}  // namespace direp
