#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace direp {

using Shape = std::vector<std::size_t>;

/// Raised when operand shapes do not conform to an operation's rule.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a value lies outside an operation's mathematical domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when a caller violates a documented precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename Real>
struct TensorNode {
  Shape shape;
  std::shared_ptr<std::vector<Real>> data;
  std::vector<Real> grad;  // empty when no gradient has been accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward;

  bool has_grad() const { return !grad.empty(); }
  std::vector<Real>& ensure_grad() {
    if (grad.empty()) grad.assign(data->size(), Real(0));
    return grad;
  }
};

/// Dense row-major array with an optional gradient buffer.
///
/// A Tensor is a shared handle: copies alias the same storage. Operations
/// on tensors that require gradients are recorded on a thread-local tape,
/// which `backward` replays in reverse creation order and then clears.
template <typename Real>
class Tensor {
 public:
  using Node = TensorNode<Real>;

  Tensor();
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<Real> values, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data->size(); }
  std::size_t rank() const { return node_->shape.size(); }
  /// Leading dimension; 1 for scalars.
  std::size_t rows() const;
  /// Product of all trailing dimensions; the row stride.
  std::size_t cols() const;

  std::span<const Real> data() const { return *node_->data; }
  std::span<Real> mutable_data() { return *node_->data; }
  Real item() const;
  Real operator[](std::size_t i) const { return (*node_->data)[i]; }
  Real at(std::size_t row, std::size_t col) const { return (*node_->data)[row * cols() + col]; }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool value);

  bool has_grad() const { return node_->has_grad(); }
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> mutable_grad() { return node_->ensure_grad(); }
  /// Gradient of zeros, allocated when absent.
  void zero_grad();
  void clear_grad() { node_->grad.clear(); }

  /// Gradient-free view sharing this tensor's storage.
  Tensor detach() const;
  /// Deep copy of the values (no gradient, no tape history).
  Tensor clone() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Disables tape recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

template <typename Real>
std::size_t tape_size();

template <typename Real>
void clear_tape();

/// Creates an op result. When recording is enabled and any parent requires
/// a gradient, the node is put on the tape with `backward` attached.
template <typename Real>
Tensor<Real> make_result(Shape shape, std::vector<Real> values,
                         std::vector<std::shared_ptr<TensorNode<Real>>> parents,
                         std::function<void(TensorNode<Real>&)> backward);

/// Accumulates d(loss)/d(scalar_loss) into every reachable tensor that
/// requires a gradient, then consumes the tape.
template <typename Real>
void backward(const Tensor<Real>& scalar_loss);

}  // namespace direp
