#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "direp/tensor.hpp"

namespace direp {

enum class Activation { relu, sigmoid, softmax, identity };

/// Which part of the model a network plays.
enum class Role { generator, encoder, decoder, classifier, discriminator, private_source, private_target };

std::string_view role_name(Role role);
std::string_view activation_name(Activation activation);

struct LayerSpec {
  std::size_t input_width = 0;
  std::size_t output_width = 0;
  Activation activation = Activation::identity;
};

/// Fully connected stack with Glorot-uniform weights and zero biases.
template <typename Real>
class Network {
 public:
  Network() = default;
  Network(Role role, std::vector<LayerSpec> layers, std::uint64_t seed);
  // Copies are deep: a copied network owns fresh parameter storage.
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  Role role() const { return role_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t input_width() const { return layers_.front().input_width; }
  std::size_t output_width() const { return layers_.back().output_width; }

  /// Runs every layer including the final activation.
  Tensor<Real> forward(const Tensor<Real>& x) const;
  /// Runs every layer but leaves the last one's output pre-activation.
  Tensor<Real> forward_logits(const Tensor<Real>& x) const;
  /// forward_logits through gradient-free views of the parameters: gradients
  /// still reach `x`, but never this network's weights.
  Tensor<Real> forward_logits_frozen(const Tensor<Real>& x) const;

  /// weight0, bias0, weight1, bias1, ...
  std::vector<Tensor<Real>>& parameters() { return parameters_; }
  const std::vector<Tensor<Real>>& parameters() const { return parameters_; }
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  Tensor<Real> run(const Tensor<Real>& x, bool final_activation, bool frozen) const;

  Role role_ = Role::generator;
  std::vector<LayerSpec> layers_;
  std::vector<Tensor<Real>> parameters_;
};

/// Closed-form parameter count of a layer stack: sum of in*out + out.
std::size_t parameter_count(const std::vector<LayerSpec>& layers);

template <typename Real>
struct EncoderOutput {
  Tensor<Real> ddrep;
  Tensor<Real> z_mean;
  Tensor<Real> z_log_var;
};

/// Variational encoder: a ReLU trunk feeding separate linear mean and
/// log-variance heads.
template <typename Real>
class Encoder {
 public:
  Encoder() = default;
  Encoder(std::size_t input_width, std::size_t hidden_width, std::size_t hidden_layers,
          std::size_t latent_width, std::uint64_t seed);

  std::size_t input_width() const { return trunk_.input_width(); }
  std::size_t latent_width() const { return mean_head_.output_width(); }

  /// Reparameterized sample ddrep = z_mean + exp(z_log_var / 2) * eps.
  /// `eps` must be [batch, latent_width].
  EncoderOutput<Real> forward(const Tensor<Real>& x, const Tensor<Real>& eps) const;

  std::vector<Tensor<Real>*> parameters();
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;
  const Network<Real>& trunk() const { return trunk_; }
  const Network<Real>& mean_head() const { return mean_head_; }
  const Network<Real>& log_var_head() const { return log_var_head_; }

 private:
  Network<Real> trunk_;
  Network<Real> mean_head_;
  Network<Real> log_var_head_;
};

/// Layer widths for every network. Defaults are the Fashion-MNIST MLPs.
struct Architecture {
  std::size_t input_width = 794;
  std::size_t classes = 10;
  std::size_t generator_hidden_width = 100;
  std::size_t generator_hidden_layers = 4;
  std::size_t direp_width = 100;
  std::size_t wide_width = 400;
  std::size_t classifier_hidden_layers = 2;
  std::size_t discriminator_hidden_layers = 4;
  std::size_t decoder_hidden_layers = 4;
  std::size_t encoder_hidden_layers = 2;
  std::size_t ddrep_width = 1;

  bool operator==(const Architecture&) const = default;
};

std::vector<LayerSpec> generator_layers(const Architecture& arch);
std::vector<LayerSpec> classifier_layers(const Architecture& arch);
std::vector<LayerSpec> discriminator_layers(const Architecture& arch);
std::vector<LayerSpec> decoder_layers(const Architecture& arch, std::size_t decoder_input_width);

/// One step of the SplitMix64 generator; used to derive independent seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed for a network derived from a run seed and the network's role.
std::uint64_t network_seed(std::uint64_t run_seed, Role role);

template <typename Real>
struct FashionNetworks {
  Network<Real> generator;
  Encoder<Real> encoder;
  Network<Real> decoder;
  Network<Real> classifier;
  Network<Real> discriminator;
};

/// The five Fashion-MNIST networks. The decoder reads DIRep followed by the
/// encoder's DDRep.
template <typename Real>
FashionNetworks<Real> build_default_fm_networks(std::uint64_t seed, std::size_t input_width = 794);

template <typename Real>
Tensor<Real> generator_forward(const Network<Real>& generator, const Tensor<Real>& x);
template <typename Real>
EncoderOutput<Real> encoder_forward(const Encoder<Real>& encoder, const Tensor<Real>& x,
                                    const Tensor<Real>& eps);
/// Reconstruction from DIRep followed by DDRep (the project-wide order).
template <typename Real>
Tensor<Real> decoder_forward(const Network<Real>& decoder, const Tensor<Real>& direp,
                             const Tensor<Real>& ddrep);
template <typename Real>
Tensor<Real> predict_label(const Network<Real>& classifier, const Tensor<Real>& direp);
template <typename Real>
Tensor<Real> predict_domain(const Network<Real>& discriminator, const Tensor<Real>& direp);

/// Index of the largest entry in each row; ties go to the lowest index.
template <typename Real>
std::vector<std::size_t> argmax_rows(const Tensor<Real>& probabilities);

}  // namespace direp
