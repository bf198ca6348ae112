#include "direp/losses.hpp"

#include <cmath>
#include <limits>

#include "direp/ops.hpp"

namespace direp {

double lambda_schedule(double iteration, double tau) {
  return 2.0 / (1.0 + std::exp(-iteration / tau)) - 1.0;
}

template <typename Real>
Tensor<Real> one_hot(std::span<const int> labels, std::size_t classes) {
  if (labels.empty()) throw ShapeError("one_hot: no labels");
  std::vector<Real> values(labels.size() * classes, Real(0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw ShapeError("one_hot: label " + std::to_string(labels[i]) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
    values[i * classes + static_cast<std::size_t>(labels[i])] = Real(1);
  }
  return Tensor<Real>::from({labels.size(), classes}, std::move(values));
}

template <typename Real>
Tensor<Real> domain_column(std::span<const int> domains) {
  if (domains.empty()) throw ShapeError("domain_column: no domain bits");
  std::vector<Real> values(domains.begin(), domains.end());
  return Tensor<Real>::from({domains.size(), 1}, std::move(values));
}

namespace {

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
  }
}

/// [n] or [n, 1] viewed as [n, 1].
template <typename Real>
Tensor<Real> as_column(const Tensor<Real>& x, const char* op) {
  if (x.rank() == 1) return reshape(x, {x.size(), 1});
  if (x.rank() == 2 && x.shape()[1] == 1) return x;
  throw ShapeError(std::string(op) + ": expected [n] or [n, 1], got " + to_string(x.shape()));
}

template <typename Real>
Tensor<Real> binary_cross_entropy(const Tensor<Real>& p_domain1, const Tensor<Real>& domains,
                                  bool invert) {
  const Tensor<Real> p = as_column(p_domain1, "discriminator_loss");
  Tensor<Real> d = as_column(domains, "discriminator_loss").detach();
  require_same_shape(p.shape(), d.shape(), "discriminator_loss");
  if (invert) d = add_scalar(scale(d, Real(-1)), Real(1));
  // Probability assigned to the true bit: d p + (1 - d)(1 - p).
  const Tensor<Real> not_d = add_scalar(scale(d, Real(-1)), Real(1));
  const Tensor<Real> not_p = add_scalar(scale(p, Real(-1)), Real(1));
  const Tensor<Real> truth = add(mul(d, p), mul(not_d, not_p));
  return scale(batch_mean(sum_last(log(truth))), Real(-1));
}

template <typename Real>
Tensor<Real> domain_cross_entropy(const Tensor<Real>& logits, std::span<const int> domains,
                                  bool invert) {
  if (logits.rank() != 2 || logits.shape()[1] != 2 || logits.shape()[0] != domains.size()) {
    throw ShapeError("discriminator logits must be [n, 2] matching " +
                     std::to_string(domains.size()) + " domain bits, got " +
                     to_string(logits.shape()));
  }
  std::vector<int> targets(domains.begin(), domains.end());
  if (invert) {
    for (int& d : targets) d = 1 - d;
  }
  return classification_loss_from_logits(logits, one_hot<Real>(targets, 2));
}

}  // namespace

template <typename Real>
Tensor<Real> classification_loss(const Tensor<Real>& probabilities, const Tensor<Real>& labels) {
  require_same_shape(probabilities.shape(), labels.shape(), "classification_loss");
  // With one-hot rows, sum(l * p) is the probability of the true class.
  const Tensor<Real> true_class = sum_last(mul(labels.detach(), probabilities));
  return scale(batch_mean(log(true_class)), Real(-1));
}

template <typename Real>
Tensor<Real> classification_loss_from_logits(const Tensor<Real>& logits, const Tensor<Real>& labels) {
  require_same_shape(logits.shape(), labels.shape(), "classification_loss");
  return scale(batch_mean(sum_last(mul(labels.detach(), log_softmax_last(logits)))), Real(-1));
}

template <typename Real>
Tensor<Real> discriminator_loss(const Tensor<Real>& p_domain1, const Tensor<Real>& domains) {
  return binary_cross_entropy(p_domain1, domains, false);
}

template <typename Real>
Tensor<Real> discriminator_loss_from_logits(const Tensor<Real>& logits, std::span<const int> domains) {
  return domain_cross_entropy(logits, domains, false);
}

template <typename Real>
Tensor<Real> generator_adversarial_loss(const Tensor<Real>& p_domain1, const Tensor<Real>& domains) {
  return binary_cross_entropy(p_domain1, domains, true);
}

template <typename Real>
Tensor<Real> generator_adversarial_loss_from_logits(const Tensor<Real>& logits,
                                                    std::span<const int> domains) {
  return domain_cross_entropy(logits, domains, true);
}

template <typename Real>
Tensor<Real> reconstruction_loss(const Tensor<Real>& reconstruction, const Tensor<Real>& input) {
  require_same_shape(reconstruction.shape(), input.shape(), "reconstruction_loss");
  const Tensor<Real> diff = sub(reconstruction, input.detach());
  return batch_mean(sum_last(mul(diff, diff)));
}

template <typename Real>
Tensor<Real> kl_loss(const Tensor<Real>& z_mean, const Tensor<Real>& z_log_var) {
  require_same_shape(z_mean.shape(), z_log_var.shape(), "kl_loss");
  // 1 + log V - V - E^2
  const Tensor<Real> inner =
      sub(sub(add_scalar(z_log_var, Real(1)), exp(z_log_var)), mul(z_mean, z_mean));
  return batch_mean(sum_last(scale(inner, Real(-0.5))));
}

template <typename Real>
Tensor<Real> difference_loss(const Tensor<Real>& shared, const Tensor<Real>& private_rep) {
  if (shared.rank() != 2 || private_rep.rank() != 2 || shared.shape()[0] != private_rep.shape()[0]) {
    throw ShapeError("difference_loss: need [n, k] inputs with equal n, got " +
                     to_string(shared.shape()) + " and " + to_string(private_rep.shape()));
  }
  return sum_of_squares(matmul(transpose(shared), private_rep));
}

template <typename Real>
Tensor<Real> normalized_difference_loss(const Tensor<Real>& shared, const Tensor<Real>& private_rep) {
  return difference_loss(normalize_rows(center_columns(shared)),
                         normalize_rows(center_columns(private_rep)));
}

template <typename Real>
Tensor<Real> batch_statistics_kl(const Tensor<Real>& representation) {
  if (representation.rank() != 2 || representation.shape()[0] < 2) {
    throw ShapeError("batch_statistics_kl needs [n >= 2, k], got " +
                     to_string(representation.shape()));
  }
  const std::size_t k = representation.shape()[1];
  const Tensor<Real> mean = reshape(batch_mean(representation), {1, k});
  const Tensor<Real> centered = center_columns(representation);
  const Tensor<Real> variance = batch_mean(mul(centered, centered));
  const Tensor<Real> log_var =
      reshape(log(add_scalar(variance, std::numeric_limits<Real>::epsilon())), {1, k});
  return kl_loss(mean, log_var);
}

#define DIREP_INSTANTIATE_LOSSES(Real)                                                            \
  template Tensor<Real> one_hot<Real>(std::span<const int>, std::size_t);                         \
  template Tensor<Real> domain_column<Real>(std::span<const int>);                                \
  template Tensor<Real> classification_loss(const Tensor<Real>&, const Tensor<Real>&);            \
  template Tensor<Real> classification_loss_from_logits(const Tensor<Real>&, const Tensor<Real>&);\
  template Tensor<Real> discriminator_loss(const Tensor<Real>&, const Tensor<Real>&);             \
  template Tensor<Real> discriminator_loss_from_logits(const Tensor<Real>&, std::span<const int>);\
  template Tensor<Real> generator_adversarial_loss(const Tensor<Real>&, const Tensor<Real>&);     \
  template Tensor<Real> generator_adversarial_loss_from_logits(const Tensor<Real>&,               \
                                                               std::span<const int>);             \
  template Tensor<Real> reconstruction_loss(const Tensor<Real>&, const Tensor<Real>&);            \
  template Tensor<Real> kl_loss(const Tensor<Real>&, const Tensor<Real>&);                        \
  template Tensor<Real> difference_loss(const Tensor<Real>&, const Tensor<Real>&);                \
  template Tensor<Real> normalized_difference_loss(const Tensor<Real>&, const Tensor<Real>&);     \
  template Tensor<Real> batch_statistics_kl(const Tensor<Real>&);

DIREP_INSTANTIATE_LOSSES(float)
DIREP_INSTANTIATE_LOSSES(double)

}  // namespace direp
