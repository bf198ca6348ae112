#include "direp/adam.hpp"

#include <cmath>

namespace direp {

template <typename Real>
void adam_update(Tensor<Real>& param, AdamState<Real>& state, double learning_rate) {
  if (!param.has_grad()) throw ContractError("adam_update: parameter has no gradient");
  const std::size_t n = param.size();
  if (state.first_moment.empty() && state.second_moment.empty()) {
    state.first_moment.assign(n, Real(0));
    state.second_moment.assign(n, Real(0));
  }
  if (state.first_moment.size() != n || state.second_moment.size() != n) {
    throw ShapeError("adam_update: moment buffers do not match parameter of shape " +
                     to_string(param.shape()));
  }
  ++state.step;
  const Real b1 = static_cast<Real>(state.beta1);
  const Real b2 = static_cast<Real>(state.beta2);
  const Real eps = static_cast<Real>(state.epsilon);
  const Real lr = static_cast<Real>(learning_rate);
  const double t = static_cast<double>(state.step);
  const Real correction1 = static_cast<Real>(1.0 - std::pow(state.beta1, t));
  const Real correction2 = static_cast<Real>(1.0 - std::pow(state.beta2, t));

  auto values = param.mutable_data();
  auto grad = param.mutable_grad();
  for (std::size_t i = 0; i < n; ++i) {
    const Real g = grad[i];
    Real& m = state.first_moment[i];
    Real& v = state.second_moment[i];
    m = b1 * m + (Real(1) - b1) * g;
    v = b2 * v + (Real(1) - b2) * g * g;
    const Real m_hat = m / correction1;
    const Real v_hat = v / correction2;
    values[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    grad[i] = Real(0);
  }
}

template void adam_update(Tensor<float>&, AdamState<float>&, double);
template void adam_update(Tensor<double>&, AdamState<double>&, double);

}  // namespace direp
