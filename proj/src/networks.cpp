#include "direp/networks.hpp"

#include <cmath>
#include <random>

#include "direp/ops.hpp"

namespace direp {

std::string_view role_name(Role role) {
  switch (role) {
    case Role::generator: return "G";
    case Role::encoder: return "E";
    case Role::decoder: return "F";
    case Role::classifier: return "C";
    case Role::discriminator: return "D";
    case Role::private_source: return "Ps";
    case Role::private_target: return "Pt";
  }
  return "?";
}

std::string_view activation_name(Activation activation) {
  switch (activation) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softmax: return "softmax";
    case Activation::identity: return "identity";
  }
  return "?";
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

template <typename Real>
Tensor<Real> activate(const Tensor<Real>& x, Activation activation) {
  switch (activation) {
    case Activation::relu: return relu(x);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::softmax: return softmax_last(x);
    case Activation::identity: return x;
  }
  return x;
}

std::vector<LayerSpec> chain(std::size_t input, std::size_t width, std::size_t count,
                             Activation hidden, std::size_t output, Activation last) {
  std::vector<LayerSpec> layers;
  std::size_t in = input;
  for (std::size_t i = 0; i < count; ++i) {
    layers.push_back({in, width, hidden});
    in = width;
  }
  layers.push_back({in, output, last});
  return layers;
}

}  // namespace

std::uint64_t network_seed(std::uint64_t run_seed, Role role) {
  return splitmix64(splitmix64(run_seed) ^ (static_cast<std::uint64_t>(role) + 1) * 0x51ed2701ULL);
}

std::size_t parameter_count(const std::vector<LayerSpec>& layers) {
  std::size_t total = 0;
  for (const auto& l : layers) total += l.input_width * l.output_width + l.output_width;
  return total;
}

template <typename Real>
Network<Real>::Network(Role role, std::vector<LayerSpec> layers, std::uint64_t seed)
    : role_(role), layers_(std::move(layers)) {
  if (layers_.empty()) throw ShapeError("network needs at least one layer");
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& spec = layers_[i];
    if (spec.input_width == 0 || spec.output_width == 0) {
      throw ShapeError("layer widths must be positive");
    }
    if (i > 0 && layers_[i - 1].output_width != spec.input_width) {
      throw ShapeError("layer " + std::to_string(i) + " expects width " +
                       std::to_string(spec.input_width) + " but previous layer emits " +
                       std::to_string(layers_[i - 1].output_width));
    }
    const double limit = std::sqrt(6.0 / static_cast<double>(spec.input_width + spec.output_width));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    std::vector<Real> weights(spec.input_width * spec.output_width);
    for (Real& w : weights) w = static_cast<Real>(uniform(rng));
    parameters_.push_back(
        Tensor<Real>::from({spec.input_width, spec.output_width}, std::move(weights), true));
    parameters_.push_back(Tensor<Real>::zeros({spec.output_width}, true));
  }
}

template <typename Real>
Network<Real>::Network(const Network& other) : role_(other.role_), layers_(other.layers_) {
  for (const auto& p : other.parameters_) {
    parameters_.push_back(p.clone().set_requires_grad(true));
  }
}

template <typename Real>
Network<Real>& Network<Real>::operator=(const Network& other) {
  if (this != &other) *this = Network(other);
  return *this;
}

template <typename Real>
Tensor<Real> Network<Real>::run(const Tensor<Real>& x, bool final_activation, bool frozen) const {
  if (x.rank() != 2 || x.shape()[1] != input_width()) {
    throw ShapeError(std::string(role_name(role_)) + " expects input [batch, " +
                     std::to_string(input_width()) + "], got " + to_string(x.shape()));
  }
  Tensor<Real> h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Tensor<Real>& w = parameters_[2 * i];
    const Tensor<Real>& b = parameters_[2 * i + 1];
    h = frozen ? affine(h, w.detach(), b.detach()) : affine(h, w, b);
    if (i + 1 < layers_.size() || final_activation) h = activate(h, layers_[i].activation);
  }
  return h;
}

template <typename Real>
Tensor<Real> Network<Real>::forward(const Tensor<Real>& x) const {
  return run(x, true, false);
}

template <typename Real>
Tensor<Real> Network<Real>::forward_logits(const Tensor<Real>& x) const {
  return run(x, false, false);
}

template <typename Real>
Tensor<Real> Network<Real>::forward_logits_frozen(const Tensor<Real>& x) const {
  return run(x, false, true);
}

template <typename Real>
std::vector<std::string> Network<Real>::parameter_names() const {
  std::vector<std::string> names;
  const std::string prefix(role_name(role_));
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    names.push_back(prefix + ".fc" + std::to_string(i) + ".weight");
    names.push_back(prefix + ".fc" + std::to_string(i) + ".bias");
  }
  return names;
}

template <typename Real>
std::size_t Network<Real>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters_) total += p.size();
  return total;
}

template <typename Real>
void Network<Real>::zero_grad() {
  for (auto& p : parameters_) p.zero_grad();
}

template <typename Real>
Encoder<Real>::Encoder(std::size_t input_width, std::size_t hidden_width, std::size_t hidden_layers,
                       std::size_t latent_width, std::uint64_t seed) {
  std::vector<LayerSpec> trunk;
  std::size_t in = input_width;
  for (std::size_t i = 0; i < hidden_layers; ++i) {
    trunk.push_back({in, hidden_width, Activation::relu});
    in = hidden_width;
  }
  trunk_ = Network<Real>(Role::encoder, std::move(trunk), seed);
  mean_head_ = Network<Real>(Role::encoder, {{in, latent_width, Activation::identity}},
                             splitmix64(seed ^ 0x6d65616eULL));
  log_var_head_ = Network<Real>(Role::encoder, {{in, latent_width, Activation::identity}},
                                splitmix64(seed ^ 0x6c6f6776ULL));
}

template <typename Real>
EncoderOutput<Real> Encoder<Real>::forward(const Tensor<Real>& x, const Tensor<Real>& eps) const {
  if (eps.rank() != 2 || eps.shape()[0] != x.rows() || eps.shape()[1] != latent_width()) {
    throw ShapeError("encoder noise must be [" + std::to_string(x.rows()) + ", " +
                     std::to_string(latent_width()) + "], got " + to_string(eps.shape()));
  }
  const Tensor<Real> hidden = trunk_.forward(x);
  EncoderOutput<Real> out;
  out.z_mean = mean_head_.forward(hidden);
  out.z_log_var = log_var_head_.forward(hidden);
  out.ddrep = add(out.z_mean, mul(exp(scale(out.z_log_var, Real(0.5))), eps));
  return out;
}

template <typename Real>
std::vector<Tensor<Real>*> Encoder<Real>::parameters() {
  std::vector<Tensor<Real>*> params;
  for (Network<Real>* net : {&trunk_, &mean_head_, &log_var_head_}) {
    for (auto& p : net->parameters()) params.push_back(&p);
  }
  return params;
}

template <typename Real>
std::vector<std::string> Encoder<Real>::parameter_names() const {
  std::vector<std::string> names;
  auto add_names = [&](const Network<Real>& net, const std::string& prefix) {
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
      names.push_back(prefix + std::to_string(i) + ".weight");
      names.push_back(prefix + std::to_string(i) + ".bias");
    }
  };
  add_names(trunk_, "E.fc");
  add_names(mean_head_, "E.z_mean");
  add_names(log_var_head_, "E.z_log_var");
  return names;
}

template <typename Real>
std::size_t Encoder<Real>::parameter_count() const {
  return trunk_.parameter_count() + mean_head_.parameter_count() + log_var_head_.parameter_count();
}

std::vector<LayerSpec> generator_layers(const Architecture& arch) {
  return chain(arch.input_width, arch.generator_hidden_width, arch.generator_hidden_layers,
               Activation::relu, arch.direp_width, Activation::identity);
}

std::vector<LayerSpec> classifier_layers(const Architecture& arch) {
  return chain(arch.direp_width, arch.wide_width, arch.classifier_hidden_layers, Activation::relu,
               arch.classes, Activation::softmax);
}

std::vector<LayerSpec> discriminator_layers(const Architecture& arch) {
  return chain(arch.direp_width, arch.wide_width, arch.discriminator_hidden_layers,
               Activation::relu, 2, Activation::softmax);
}

std::vector<LayerSpec> decoder_layers(const Architecture& arch, std::size_t decoder_input_width) {
  return chain(decoder_input_width, arch.wide_width, arch.decoder_hidden_layers, Activation::relu,
               arch.input_width, Activation::sigmoid);
}

template <typename Real>
FashionNetworks<Real> build_default_fm_networks(std::uint64_t seed, std::size_t input_width) {
  Architecture arch;
  arch.input_width = input_width;
  FashionNetworks<Real> nets;
  nets.generator = Network<Real>(Role::generator, generator_layers(arch),
                                 network_seed(seed, Role::generator));
  nets.encoder = Encoder<Real>(input_width, arch.wide_width, arch.encoder_hidden_layers,
                               arch.ddrep_width, network_seed(seed, Role::encoder));
  nets.decoder = Network<Real>(Role::decoder,
                               decoder_layers(arch, arch.direp_width + arch.ddrep_width),
                               network_seed(seed, Role::decoder));
  nets.classifier = Network<Real>(Role::classifier, classifier_layers(arch),
                                  network_seed(seed, Role::classifier));
  nets.discriminator = Network<Real>(Role::discriminator, discriminator_layers(arch),
                                     network_seed(seed, Role::discriminator));
  return nets;
}

template <typename Real>
Tensor<Real> generator_forward(const Network<Real>& generator, const Tensor<Real>& x) {
  return generator.forward(x);
}

template <typename Real>
EncoderOutput<Real> encoder_forward(const Encoder<Real>& encoder, const Tensor<Real>& x,
                                    const Tensor<Real>& eps) {
  return encoder.forward(x, eps);
}

template <typename Real>
Tensor<Real> decoder_forward(const Network<Real>& decoder, const Tensor<Real>& direp,
                             const Tensor<Real>& ddrep) {
  return decoder.forward(concat_last(direp, ddrep));
}

template <typename Real>
Tensor<Real> predict_label(const Network<Real>& classifier, const Tensor<Real>& direp) {
  return classifier.forward(direp);
}

template <typename Real>
Tensor<Real> predict_domain(const Network<Real>& discriminator, const Tensor<Real>& direp) {
  return discriminator.forward(direp);
}

template <typename Real>
std::vector<std::size_t> argmax_rows(const Tensor<Real>& probabilities) {
  const std::size_t n = probabilities.rows();
  const std::size_t k = probabilities.cols();
  std::vector<std::size_t> out(n, 0);
  const auto& v = probabilities.data();
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (v[r * k + c] > v[r * k + best]) best = c;
    }
    out[r] = best;
  }
  return out;
}

#define DIREP_INSTANTIATE_NETWORKS(Real)                                                          \
  template class Network<Real>;                                                                   \
  template class Encoder<Real>;                                                                   \
  template FashionNetworks<Real> build_default_fm_networks<Real>(std::uint64_t, std::size_t);     \
  template Tensor<Real> generator_forward(const Network<Real>&, const Tensor<Real>&);             \
  template EncoderOutput<Real> encoder_forward(const Encoder<Real>&, const Tensor<Real>&,          \
                                               const Tensor<Real>&);                              \
  template Tensor<Real> decoder_forward(const Network<Real>&, const Tensor<Real>&,                \
                                        const Tensor<Real>&);                                     \
  template Tensor<Real> predict_label(const Network<Real>&, const Tensor<Real>&);                 \
  template Tensor<Real> predict_domain(const Network<Real>&, const Tensor<Real>&);                \
  template std::vector<std::size_t> argmax_rows(const Tensor<Real>&);

DIREP_INSTANTIATE_NETWORKS(float)
DIREP_INSTANTIATE_NETWORKS(double)

}  // namespace direp
