#include "direp/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace direp {

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

thread_local bool g_grad_mode = true;

template <typename Real>
std::vector<std::shared_ptr<TensorNode<Real>>>& tape() {
  thread_local std::vector<std::shared_ptr<TensorNode<Real>>> nodes;
  return nodes;
}

void check_shape(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
  }
}

}  // namespace

bool grad_mode_enabled() { return g_grad_mode; }

NoGradGuard::NoGradGuard() : previous_(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = previous_; }

template <typename Real>
std::size_t tape_size() {
  return tape<Real>().size();
}

template <typename Real>
void clear_tape() {
  tape<Real>().clear();
}

template <typename Real>
Tensor<Real>::Tensor() : node_(std::make_shared<Node>()) {
  node_->data = std::make_shared<std::vector<Real>>(1, Real(0));
}

template <typename Real>
Tensor<Real> Tensor<Real>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), Real(0), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::full(Shape shape, Real value, bool requires_grad) {
  check_shape(shape);
  auto node = std::make_shared<Node>();
  node->data = std::make_shared<std::vector<Real>>(element_count(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename Real>
Tensor<Real> Tensor<Real>::from(Shape shape, std::vector<Real> values, bool requires_grad) {
  check_shape(shape);
  if (values.size() != element_count(shape)) {
    throw ShapeError("tensor of shape " + to_string(shape) + " needs " +
                     std::to_string(element_count(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<Node>();
  node->data = std::make_shared<std::vector<Real>>(std::move(values));
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename Real>
Tensor<Real> Tensor<Real>::scalar(Real value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

template <typename Real>
std::size_t Tensor<Real>::rows() const {
  return node_->shape.empty() ? 1 : node_->shape.front();
}

template <typename Real>
std::size_t Tensor<Real>::cols() const {
  return node_->shape.empty() ? 1 : size() / node_->shape.front();
}

template <typename Real>
Real Tensor<Real>::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return (*node_->data)[0];
}

template <typename Real>
Tensor<Real>& Tensor<Real>::set_requires_grad(bool value) {
  node_->requires_grad = value;
  return *this;
}

template <typename Real>
void Tensor<Real>::zero_grad() {
  node_->grad.assign(node_->data->size(), Real(0));
}

template <typename Real>
Tensor<Real> Tensor<Real>::detach() const {
  auto node = std::make_shared<Node>();
  node->shape = node_->shape;
  node->data = node_->data;
  return Tensor(std::move(node));
}

template <typename Real>
Tensor<Real> Tensor<Real>::clone() const {
  return from(node_->shape, *node_->data);
}

template <typename Real>
Tensor<Real> make_result(Shape shape, std::vector<Real> values,
                         std::vector<std::shared_ptr<TensorNode<Real>>> parents,
                         std::function<void(TensorNode<Real>&)> backward_fn) {
  auto node = std::make_shared<TensorNode<Real>>();
  node->shape = std::move(shape);
  node->data = std::make_shared<std::vector<Real>>(std::move(values));
  const bool record =
      g_grad_mode && std::any_of(parents.begin(), parents.end(),
                                 [](const auto& p) { return p->requires_grad; });
  if (record) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward_fn);
    tape<Real>().push_back(node);
  }
  return Tensor<Real>(std::move(node));
}

template <typename Real>
void backward(const Tensor<Real>& scalar_loss) {
  if (scalar_loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        to_string(scalar_loss.shape()));
  }
  auto& nodes = tape<Real>();
  if (!scalar_loss.requires_grad() || nodes.empty()) {
    throw ContractError("backward() called on a loss with no recorded computation");
  }
  scalar_loss.node()->ensure_grad()[0] += Real(1);
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    TensorNode<Real>& node = **it;
    if (node.has_grad() && node.backward) node.backward(node);
  }
  for (auto& node : nodes) {
    // Interior gradients are scratch space; leaves keep theirs.
    node->grad.clear();
    node->grad.shrink_to_fit();
  }
  nodes.clear();
}

template class Tensor<float>;
template class Tensor<double>;
template std::size_t tape_size<float>();
template std::size_t tape_size<double>();
template void clear_tape<float>();
template void clear_tape<double>();
template Tensor<float> make_result(Shape, std::vector<float>,
                                   std::vector<std::shared_ptr<TensorNode<float>>>,
                                   std::function<void(TensorNode<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>,
                                    std::vector<std::shared_ptr<TensorNode<double>>>,
                                    std::function<void(TensorNode<double>&)>);
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace direp
