#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "direp/tensor.hpp"

namespace direp {

/// Relative loss weights and per-network learning rates.
struct LossWeights {
  double beta = 1.0;   // classification weight on G
  double gamma = 1.0;  // reconstruction weight on G
  double mu = 1.0;     // reconstruction weight on E
  double lambda_tau = 1.0;

  double lr_generator = 2e-4;
  double lr_classifier = 2e-4;
  double lr_discriminator = 2e-4;
  double lr_encoder = 2e-4;
  double lr_decoder = 2e-4;

  double dsn_reconstruction = 0.15;
  double dsn_difference = 0.05;
  double reverse_kl = 0.01;
  double reverse_difference = 0.05;

  bool operator==(const LossWeights&) const = default;
};

/// Adversarial weight ramp 2 / (1 + exp(-t / tau)) - 1; 0 at t = 0, tending to 1.
double lambda_schedule(double iteration, double tau = 1.0);

template <typename Real>
Tensor<Real> one_hot(std::span<const int> labels, std::size_t classes);

/// Column vector [n, 1] of domain bits.
template <typename Real>
Tensor<Real> domain_column(std::span<const int> domains);

/// -sum(l * log p) per row, averaged over the batch. `probabilities` rows are
/// distributions, `labels` rows one-hot. Throws DomainError when the
/// probability of a true class is 0.
template <typename Real>
Tensor<Real> classification_loss(const Tensor<Real>& probabilities, const Tensor<Real>& labels);

/// classification_loss evaluated from logits with a fused log-softmax.
template <typename Real>
Tensor<Real> classification_loss_from_logits(const Tensor<Real>& logits, const Tensor<Real>& labels);

/// Binary cross-entropy of the predicted probability of domain 1 against the
/// domain bits, batch mean. Both inputs are [n] or [n, 1].
template <typename Real>
Tensor<Real> discriminator_loss(const Tensor<Real>& p_domain1, const Tensor<Real>& domains);

/// Same loss from 2-way discriminator logits [n, 2].
template <typename Real>
Tensor<Real> discriminator_loss_from_logits(const Tensor<Real>& logits, std::span<const int> domains);

/// discriminator_loss with every domain bit inverted.
template <typename Real>
Tensor<Real> generator_adversarial_loss(const Tensor<Real>& p_domain1, const Tensor<Real>& domains);

template <typename Real>
Tensor<Real> generator_adversarial_loss_from_logits(const Tensor<Real>& logits,
                                                    std::span<const int> domains);

/// Per-sample squared L2 error, batch mean. Sum two calls for both domains.
template <typename Real>
Tensor<Real> reconstruction_loss(const Tensor<Real>& reconstruction, const Tensor<Real>& input);

/// Gaussian KL to N(0, I): -1/2 (1 + log V - V - E^2) summed over latent
/// dimensions, batch mean, with V = exp(z_log_var).
template <typename Real>
Tensor<Real> kl_loss(const Tensor<Real>& z_mean, const Tensor<Real>& z_log_var);

/// Squared Frobenius norm of shared^T * private.
template <typename Real>
Tensor<Real> difference_loss(const Tensor<Real>& shared, const Tensor<Real>& private_rep);

/// difference_loss after centering columns and L2-normalizing rows of both inputs.
template <typename Real>
Tensor<Real> normalized_difference_loss(const Tensor<Real>& shared, const Tensor<Real>& private_rep);

/// KL to N(0, I) of a diagonal Gaussian fitted to the batch (per-column
/// mean and variance of `representation`).
template <typename Real>
Tensor<Real> batch_statistics_kl(const Tensor<Real>& representation);

}  // namespace direp
