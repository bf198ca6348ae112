#include "direp/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

#include "direp/checkpoint.hpp"
#include "direp/ops.hpp"

namespace direp {

std::string_view algorithm_name(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::vaegan: return "vaegan";
    case Algorithm::explicit_ddrep: return "explicit";
    case Algorithm::gan_based: return "gan";
    case Algorithm::dann: return "dann";
    case Algorithm::dsn: return "dsn";
    case Algorithm::source_only: return "source";
    case Algorithm::target_only: return "target";
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view text) {
  if (text == "vaegan") return Algorithm::vaegan;
  if (text == "explicit" || text == "explicit_ddrep") return Algorithm::explicit_ddrep;
  if (text == "gan" || text == "gan_based") return Algorithm::gan_based;
  if (text == "dann") return Algorithm::dann;
  if (text == "dsn") return Algorithm::dsn;
  if (text == "source" || text == "source_only") return Algorithm::source_only;
  if (text == "target" || text == "target_only") return Algorithm::target_only;
  throw ConfigError("unknown algorithm '" + std::string(text) +
                    "' (expected vaegan|explicit|gan|dann|dsn|source|target)");
}

std::string_view ablation_name(Ablation ablation) {
  switch (ablation) {
    case Ablation::none: return "none";
    case Ablation::dsn_reverse_kl: return "dsn_reverse_kl";
    case Ablation::dsn_star: return "dsn_star";
    case Ablation::vaegan_reverse_difference: return "vaegan_reverse_difference";
  }
  return "?";
}

Ablation parse_ablation(std::string_view text) {
  if (text == "none") return Ablation::none;
  if (text == "dsn_reverse_kl") return Ablation::dsn_reverse_kl;
  if (text == "dsn_star") return Ablation::dsn_star;
  if (text == "vaegan_reverse_difference") return Ablation::vaegan_reverse_difference;
  throw ConfigError("unknown ablation '" + std::string(text) +
                    "' (expected none|dsn_reverse_kl|dsn_star|vaegan_reverse_difference)");
}

// ---------------------------------------------------------------- config

std::vector<std::string> TrainConfig::problems() const {
  std::vector<std::string> out;
  if (batch_size == 0) out.push_back("batch_size must be positive");
  if (cadence == 0) out.push_back("cadence must be positive");
  if (std::find(std::begin(kSemiLabelLevels), std::end(kSemiLabelLevels), semi_labels_per_class) ==
      std::end(kSemiLabelLevels)) {
    out.push_back("semi labels per class must be one of 0,1,5,10,20,50,100 (got " +
                  std::to_string(semi_labels_per_class) + ")");
  }
  if (semi_labels_per_class > 0 && algorithm == Algorithm::target_only) {
    out.push_back("semi-supervised labels make no sense for target-only training");
  }
  switch (ablation) {
    case Ablation::none: break;
    case Ablation::dsn_reverse_kl:
    case Ablation::dsn_star:
      if (algorithm != Algorithm::dsn) {
        out.push_back("ablation " + std::string(ablation_name(ablation)) + " requires algorithm dsn");
      }
      break;
    case Ablation::vaegan_reverse_difference:
      if (algorithm != Algorithm::vaegan) {
        out.push_back("ablation vaegan_reverse_difference requires algorithm vaegan");
      }
      break;
  }
  if (explicit_with_encoder && algorithm != Algorithm::explicit_ddrep) {
    out.push_back("explicit_with_encoder applies to the explicit algorithm only");
  }
  const std::pair<const char*, double> non_negative[] = {
      {"beta", weights.beta},
      {"gamma", weights.gamma},
      {"mu", weights.mu},
      {"lr_generator", weights.lr_generator},
      {"lr_classifier", weights.lr_classifier},
      {"lr_discriminator", weights.lr_discriminator},
      {"lr_encoder", weights.lr_encoder},
      {"lr_decoder", weights.lr_decoder},
      {"dsn_reconstruction", weights.dsn_reconstruction},
      {"dsn_difference", weights.dsn_difference},
      {"reverse_kl", weights.reverse_kl},
      {"reverse_difference", weights.reverse_difference},
  };
  for (const auto& [name, value] : non_negative) {
    if (!(value >= 0.0) || !std::isfinite(value)) {
      out.push_back(std::string(name) + " must be a finite non-negative number");
    }
  }
  if (!(weights.lambda_tau > 0.0)) out.push_back("lambda_tau must be positive");
  const auto& a = architecture;
  if (a.classes < 2) out.push_back("classes must be at least 2");
  if (a.generator_hidden_width == 0 || a.direp_width == 0 || a.wide_width == 0 || a.ddrep_width == 0) {
    out.push_back("layer widths must be positive");
  }
  if (a.encoder_hidden_layers == 0) out.push_back("encoder needs at least one hidden layer");
  return out;
}

void TrainConfig::validate() const {
  const auto list = problems();
  if (list.empty()) return;
  std::string message = "invalid configuration:";
  for (const auto& p : list) message += "\n  - " + p;
  throw ConfigError(message);
}

std::size_t TrainConfig::total_iterations() const {
  return ablation == Ablation::dsn_star ? 2 * iterations : iterations;
}

bool TrainConfig::is_frozen(Role role) const {
  return std::find(frozen.begin(), frozen.end(), role) != frozen.end();
}

// ---------------------------------------------------------------- models

template <typename Real>
Batch<Real> make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  const std::size_t width = data.width();
  std::vector<Real> values;
  values.reserve(indices.size() * width);
  Batch<Real> batch;
  for (std::size_t i : indices) {
    const auto x = data.features(i);
    values.insert(values.end(), x.begin(), x.end());
    batch.labels.push_back(data.label(i).value_or(-1));
    batch.domains.push_back(data.domain(i));
  }
  batch.x = Tensor<Real>::from({indices.size(), width}, std::move(values));
  return batch;
}

template <typename Real>
std::vector<typename ModelSet<Real>::Parameter> ModelSet<Real>::parameters() {
  std::vector<Parameter> out;
  auto add = [&](Network<Real>& net) {
    const auto names = net.parameter_names();
    auto& params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) out.push_back({names[i], net.role(), &params[i]});
  };
  add(generator);
  add(classifier);
  if (discriminator) add(*discriminator);
  if (encoder) {
    const auto names = encoder->parameter_names();
    const auto params = encoder->parameters();
    for (std::size_t i = 0; i < params.size(); ++i) out.push_back({names[i], Role::encoder, params[i]});
  }
  if (decoder) add(*decoder);
  if (private_source) add(*private_source);
  if (private_target) add(*private_target);
  return out;
}

template <typename Real>
ModelSet<Real> make_models(const TrainConfig& config, std::size_t input_width) {
  Architecture arch = config.architecture;
  arch.input_width = input_width;
  const std::uint64_t seed = config.seed;
  ModelSet<Real> m;
  m.algorithm = config.algorithm;
  m.generator = Network<Real>(Role::generator, generator_layers(arch), network_seed(seed, Role::generator));
  m.classifier =
      Network<Real>(Role::classifier, classifier_layers(arch), network_seed(seed, Role::classifier));
  auto make_encoder = [&] {
    return Encoder<Real>(input_width, arch.wide_width, arch.encoder_hidden_layers, arch.ddrep_width,
                         network_seed(seed, Role::encoder));
  };
  auto make_decoder = [&](std::size_t in) {
    return Network<Real>(Role::decoder, decoder_layers(arch, in), network_seed(seed, Role::decoder));
  };
  const bool supervised_only =
      config.algorithm == Algorithm::source_only || config.algorithm == Algorithm::target_only;
  if (!supervised_only) {
    m.discriminator = Network<Real>(Role::discriminator, discriminator_layers(arch),
                                    network_seed(seed, Role::discriminator));
  }
  switch (config.algorithm) {
    case Algorithm::vaegan:
      m.encoder = make_encoder();
      m.decoder = make_decoder(arch.direp_width + arch.ddrep_width);
      break;
    case Algorithm::explicit_ddrep:
      m.decoder_reads_domain_bit = true;
      if (config.explicit_with_encoder) {
        m.encoder = make_encoder();
        m.decoder = make_decoder(arch.direp_width + arch.ddrep_width + 1);
      } else {
        m.decoder = make_decoder(arch.direp_width + 1);
      }
      break;
    case Algorithm::dsn:
      m.private_source = Network<Real>(Role::private_source, generator_layers(arch),
                                       network_seed(seed, Role::private_source));
      m.private_target = Network<Real>(Role::private_target, generator_layers(arch),
                                       network_seed(seed, Role::private_target));
      m.decoder = make_decoder(2 * arch.direp_width);
      break;
    default: break;
  }
  m.adam.resize(m.parameters().size());
  return m;
}

// ---------------------------------------------------------------- steps

namespace {

enum class Reconstruction { none, encoder, domain_bit, encoder_and_bit, private_reps };

struct StepOptions {
  Reconstruction reconstruction = Reconstruction::none;
  bool gradient_reversal = false;
  double reverse_kl = 0.0;
  std::optional<double> reverse_difference;
};

StepOptions reconstructing(Reconstruction mode) {
  StepOptions opt;
  opt.reconstruction = mode;
  return opt;
}

template <typename Real>
Tensor<Real> standard_normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Real> values(rows * cols);
  for (auto& v : values) v = static_cast<Real>(normal(rng));
  return Tensor<Real>::from({rows, cols}, std::move(values));
}

double learning_rate(const LossWeights& w, Role role) {
  switch (role) {
    case Role::generator:
    case Role::private_source:
    case Role::private_target: return w.lr_generator;
    case Role::encoder: return w.lr_encoder;
    case Role::decoder: return w.lr_decoder;
    case Role::classifier: return w.lr_classifier;
    case Role::discriminator: return w.lr_discriminator;
  }
  return 0.0;
}

void require_finite(double value, const char* name, std::size_t iteration) {
  if (!std::isfinite(value)) throw NumericError(iteration, std::string("non-finite ") + name);
}

/// Backward from `total`, then one Adam update per parameter of every
/// unfrozen network. Frozen networks have their gradients discarded.
template <typename Real>
void apply_updates(ModelSet<Real>& models, const Tensor<Real>& total, const TrainConfig& config) {
  backward(total);
  auto params = models.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (config.is_frozen(p.role)) {
      p.tensor->clear_grad();
      continue;
    }
    adam_update(*p.tensor, models.adam[i], learning_rate(config.weights, p.role));
  }
}

std::vector<std::size_t> iota(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back(i);
  return out;
}

template <typename Real>
Tensor<Real> domain_bits(std::span<const int> domains, bool flip) {
  std::vector<int> bits(domains.begin(), domains.end());
  if (flip) {
    for (int& b : bits) b = 1 - b;
  }
  return domain_column<Real>(bits);
}

/// Per-domain sum of normalized_difference_loss over the rows [0, ns) and [ns, n).
template <typename Real>
Tensor<Real> split_difference(const Tensor<Real>& shared, const Tensor<Real>& private_rep, std::size_t ns) {
  const std::size_t n = shared.rows();
  return add(normalized_difference_loss(slice_rows(shared, 0, ns), slice_rows(private_rep, 0, ns)),
             normalized_difference_loss(slice_rows(shared, ns, n), slice_rows(private_rep, ns, n)));
}

/// The shared adversarial step. One backward pass reaches every network with
/// exactly its own objective: gradient-scale nodes weight the terms G sees,
/// D reads a detached DIRep for its own loss and frozen copies of its weights
/// for the generator's loss.
template <typename Real>
StepReport adversarial_step(ModelSet<Real>& m, const StepInput<Real>& in, const TrainConfig& config,
                            std::size_t t, std::mt19937_64* noise, const StepOptions& opt) {
  const auto& w = config.weights;
  const double lambda = lambda_schedule(static_cast<double>(t), w.lambda_tau);
  const std::size_t ns = in.source.size();
  const std::size_t nt = in.target.size();
  const std::size_t nr = in.revealed.size();
  const std::size_t ndom = ns + nt;
  if (ns == 0 || nt == 0) throw ShapeError("adversarial step needs both a source and a target batch");
  if (!m.discriminator) throw ContractError("model set has no discriminator");

  std::vector<Tensor<Real>> parts{in.source.x, in.target.x};
  if (nr > 0) parts.push_back(in.revealed.x);
  const Tensor<Real> x = concat_rows<Real>(parts);
  const Tensor<Real> direp = m.generator.forward(x);
  const Tensor<Real> direp_dom = slice_rows(direp, 0, ndom);

  std::vector<std::size_t> supervised = iota(0, ns);
  std::vector<int> labels(in.source.labels.begin(), in.source.labels.end());
  for (std::size_t i = 0; i < nr; ++i) {
    supervised.push_back(ndom + i);
    labels.push_back(in.revealed.labels[i]);
  }
  const Tensor<Real> class_logits =
      m.classifier.forward_logits(scale_gradient(gather_rows(direp, supervised), Real(w.beta)));
  const Tensor<Real> loss_c =
      classification_loss_from_logits(class_logits, one_hot<Real>(labels, m.classifier.output_width()));

  std::vector<int> domains(in.source.domains.begin(), in.source.domains.end());
  domains.insert(domains.end(), in.target.domains.begin(), in.target.domains.end());

  StepReport report;
  report.iteration = t;
  report.lambda = lambda;
  Tensor<Real> total;
  if (opt.gradient_reversal) {
    const Tensor<Real> loss_d = discriminator_loss_from_logits(
        m.discriminator->forward_logits(scale_gradient(direp_dom, Real(-lambda))), domains);
    total = add(loss_c, loss_d);
    report.loss_d = loss_d.item();
  } else {
    const Tensor<Real> loss_d =
        discriminator_loss_from_logits(m.discriminator->forward_logits(direp_dom.detach()), domains);
    const Tensor<Real> loss_g = generator_adversarial_loss_from_logits(
        m.discriminator->forward_logits_frozen(scale_gradient(direp_dom, Real(lambda))), domains);
    total = add(add(loss_c, loss_d), loss_g);
    report.loss_d = loss_d.item();
    report.loss_g = loss_g.item();
  }
  report.loss_c = loss_c.item();

  if (opt.reconstruction != Reconstruction::none) {
    const Tensor<Real> x_dom = slice_rows(x, 0, ndom);
    std::vector<Tensor<Real>> decoder_in;
    std::optional<Tensor<Real>> ddrep;
    const Real recon_scale =
        opt.reconstruction == Reconstruction::private_reps ? Real(1) : Real(w.gamma);
    decoder_in.push_back(scale_gradient(direp_dom, recon_scale));

    if (opt.reconstruction == Reconstruction::encoder ||
        opt.reconstruction == Reconstruction::encoder_and_bit) {
      if (!m.encoder || !noise) throw ContractError("encoder step needs an encoder and a noise source");
      const auto enc = m.encoder->forward(x_dom, standard_normal<Real>(ndom, m.encoder->latent_width(), *noise));
      const Tensor<Real> loss_kl = kl_loss(enc.z_mean, enc.z_log_var);
      total = add(total, loss_kl);
      report.loss_kl = loss_kl.item();
      ddrep = enc.ddrep;
      decoder_in.push_back(scale_gradient(enc.ddrep, Real(w.mu)));
    }
    if (opt.reconstruction == Reconstruction::domain_bit ||
        opt.reconstruction == Reconstruction::encoder_and_bit) {
      decoder_in.push_back(domain_bits<Real>(domains, false));
    }
    std::optional<Tensor<Real>> private_dom;
    if (opt.reconstruction == Reconstruction::private_reps) {
      if (!m.private_source || !m.private_target) throw ContractError("DSN step needs private encoders");
      const Tensor<Real> ps = m.private_source->forward(in.source.x);
      const Tensor<Real> pt = m.private_target->forward(in.target.x);
      std::vector<Tensor<Real>> private_parts{ps, pt};
      private_dom = concat_rows<Real>(private_parts);
      decoder_in.push_back(*private_dom);
    }
    if (!m.decoder) throw ContractError("model set has no decoder");
    const Tensor<Real> xhat = m.decoder->forward(concat_last<Real>(decoder_in));
    const Tensor<Real> loss_r = add(reconstruction_loss(slice_rows(xhat, 0, ns), in.source.x),
                                    reconstruction_loss(slice_rows(xhat, ns, ndom), in.target.x));
    report.loss_r = loss_r.item();

    if (private_dom) {
      total = add(total, scale(loss_r, Real(w.dsn_reconstruction)));
      const Tensor<Real> loss_diff = split_difference(direp_dom.detach(), *private_dom, ns);
      total = add(total, scale(loss_diff, Real(w.dsn_difference)));
      report.loss_difference = loss_diff.item();
    } else {
      total = add(total, loss_r);
    }

    if (opt.reverse_difference) {
      if (!ddrep) throw ContractError("reverse difference needs an encoder DDRep");
      // DDRep [n, k] spread over the DIRep width by a constant averaging map.
      const std::size_t k = ddrep->cols();
      const std::size_t width = direp_dom.cols();
      const Tensor<Real> spread = Tensor<Real>::full({k, width}, Real(1) / Real(k));
      const Tensor<Real> loss_diff = split_difference(direp_dom, matmul(*ddrep, spread), ns);
      total = sub(total, scale(loss_diff, Real(*opt.reverse_difference)));
      report.loss_difference = loss_diff.item();
    }
  }

  if (opt.reverse_kl > 0.0) {
    const Tensor<Real> loss_info = batch_statistics_kl(direp_dom);
    total = add(total, scale(loss_info, Real(opt.reverse_kl)));
    report.loss_kl = loss_info.item();
  }

  require_finite(report.loss_c, "classification loss", t);
  require_finite(report.loss_d, "discriminator loss", t);
  require_finite(report.loss_g, "generator loss", t);
  require_finite(report.loss_r, "reconstruction loss", t);
  require_finite(report.loss_kl, "KL loss", t);
  require_finite(report.loss_difference, "difference loss", t);
  apply_updates(m, total, config);
  return report;
}

}  // namespace

template <typename Real>
StepReport vaegan_step(ModelSet<Real>& models, const StepInput<Real>& input, const TrainConfig& config,
                       std::size_t iteration, std::mt19937_64& noise) {
  return adversarial_step(models, input, config, iteration, &noise, reconstructing(Reconstruction::encoder));
}

template <typename Real>
StepReport explicit_ddrep_step(ModelSet<Real>& models, const StepInput<Real>& input,
                               const TrainConfig& config, std::size_t iteration, std::mt19937_64& noise) {
  const auto mode = models.encoder ? Reconstruction::encoder_and_bit : Reconstruction::domain_bit;
  return adversarial_step(models, input, config, iteration, &noise, reconstructing(mode));
}

template <typename Real>
StepReport gan_based_step(ModelSet<Real>& models, const StepInput<Real>& input, const TrainConfig& config,
                          std::size_t iteration) {
  return adversarial_step<Real>(models, input, config, iteration, nullptr, {});
}

template <typename Real>
StepReport dann_step(ModelSet<Real>& models, const StepInput<Real>& input, const TrainConfig& config,
                     std::size_t iteration) {
  StepOptions opt;
  opt.gradient_reversal = true;
  return adversarial_step<Real>(models, input, config, iteration, nullptr, opt);
}

template <typename Real>
StepReport dsn_step(ModelSet<Real>& models, const StepInput<Real>& input, const TrainConfig& config,
                    std::size_t iteration) {
  return adversarial_step<Real>(models, input, config, iteration, nullptr, reconstructing(Reconstruction::private_reps));
}

template <typename Real>
StepReport supervised_step(ModelSet<Real>& models, const StepInput<Real>& input,
                           const TrainConfig& config, std::size_t iteration) {
  const bool on_target = models.algorithm == Algorithm::target_only;
  const Batch<Real>& labelled = on_target ? input.target : input.source;
  if (labelled.size() == 0) throw ShapeError("supervised step needs a labelled batch");
  std::vector<Tensor<Real>> parts{labelled.x};
  std::vector<int> labels(labelled.labels.begin(), labelled.labels.end());
  if (input.revealed.size() > 0) {
    parts.push_back(input.revealed.x);
    labels.insert(labels.end(), input.revealed.labels.begin(), input.revealed.labels.end());
  }
  const Tensor<Real> direp = models.generator.forward(concat_rows<Real>(parts));
  const Tensor<Real> loss_c = classification_loss_from_logits(
      models.classifier.forward_logits(scale_gradient(direp, Real(config.weights.beta))),
      one_hot<Real>(labels, models.classifier.output_width()));
  StepReport report;
  report.iteration = iteration;
  report.loss_c = loss_c.item();
  require_finite(report.loss_c, "classification loss", iteration);
  apply_updates(models, loss_c, config);
  return report;
}

template <typename Real>
StepReport ablation_step(Ablation variant, ModelSet<Real>& models, const StepInput<Real>& input,
                         const TrainConfig& config, std::size_t iteration, std::mt19937_64& noise) {
  switch (variant) {
    case Ablation::dsn_reverse_kl:
    case Ablation::dsn_star: {
      if (models.algorithm != Algorithm::dsn) {
        throw ConfigError(std::string(ablation_name(variant)) + " needs a DSN model set");
      }
      StepOptions opt = reconstructing(Reconstruction::private_reps);
      const bool first_phase = variant == Ablation::dsn_reverse_kl || iteration < config.iterations;
      if (first_phase) opt.reverse_kl = config.weights.reverse_kl;
      return adversarial_step(models, input, config, iteration, &noise, opt);
    }
    case Ablation::vaegan_reverse_difference: {
      if (models.algorithm != Algorithm::vaegan) {
        throw ConfigError("vaegan_reverse_difference needs a VAEGAN model set");
      }
      StepOptions opt = reconstructing(Reconstruction::encoder);
      opt.reverse_difference = config.weights.reverse_difference;
      return adversarial_step(models, input, config, iteration, &noise, opt);
    }
    case Ablation::none: break;
  }
  throw ConfigError("ablation_step called without an ablation variant");
}

template <typename Real>
StepReport train_step(ModelSet<Real>& models, const StepInput<Real>& input, const TrainConfig& config,
                      std::size_t iteration, std::mt19937_64& noise) {
  if (config.ablation != Ablation::none) {
    return ablation_step(config.ablation, models, input, config, iteration, noise);
  }
  switch (config.algorithm) {
    case Algorithm::vaegan: return vaegan_step(models, input, config, iteration, noise);
    case Algorithm::explicit_ddrep: return explicit_ddrep_step(models, input, config, iteration, noise);
    case Algorithm::gan_based: return gan_based_step(models, input, config, iteration);
    case Algorithm::dann: return dann_step(models, input, config, iteration);
    case Algorithm::dsn: return dsn_step(models, input, config, iteration);
    case Algorithm::source_only:
    case Algorithm::target_only: return supervised_step(models, input, config, iteration);
  }
  throw ConfigError("unknown algorithm");
}

// ---------------------------------------------------------------- loop

namespace {

constexpr std::size_t kEvalChunk = 1000;

template <typename Real>
Tensor<Real> rows_of(const Dataset& data, std::size_t begin, std::size_t end) {
  const auto& all = data.feature_data();
  const std::size_t w = data.width();
  std::vector<Real> values(all.begin() + static_cast<std::ptrdiff_t>(begin * w),
                           all.begin() + static_cast<std::ptrdiff_t>(end * w));
  return Tensor<Real>::from({end - begin, w}, std::move(values));
}

}  // namespace

template <typename Real>
double evaluate(const Network<Real>& generator, const Network<Real>& classifier, const Dataset& data,
                std::size_t limit) {
  const std::size_t n = limit == 0 ? data.size() : std::min(limit, data.size());
  if (n == 0) throw DatasetError("evaluate: empty dataset");
  NoGradGuard no_grad;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < n; begin += kEvalChunk) {
    const std::size_t end = std::min(n, begin + kEvalChunk);
    const auto predicted = argmax_rows(classifier.forward(generator.forward(rows_of<Real>(data, begin, end))));
    for (std::size_t i = begin; i < end; ++i) {
      const auto label = data.label(i);
      if (!label) throw DatasetError("evaluate: sample " + std::to_string(i) + " has no label");
      if (predicted[i - begin] == static_cast<std::size_t>(*label)) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

std::vector<std::size_t> reveal_target_labels(const Dataset& target, std::size_t per_class,
                                              std::uint64_t seed) {
  if (per_class == 0) return {};
  std::vector<std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const auto label = target.label(i);
    if (!label) continue;
    const auto c = static_cast<std::size_t>(*label);
    if (by_class.size() <= c) by_class.resize(c + 1);
    by_class[c].push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t take = std::min(per_class, members.size());
    out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return out;
}

template <typename Real>
TrainResult<Real> train(const TrainConfig& config, const DomainPair& pair, const ProgressFn& progress) {
  config.validate();
#if defined(__SSE2__)
  // Denormals from near-dead ReLU units slow every later matmul severalfold.
  _mm_setcsr(_mm_getcsr() | 0x8040);  // flush-to-zero, denormals-are-zero
#endif
  if (pair.source_train.empty() || pair.target_train.empty()) {
    throw DatasetError("train: both domains need training samples");
  }
  if (pair.source_train.width() != pair.target_train.width()) {
    throw DatasetError("train: source and target widths differ");
  }
  const std::uint64_t seed = config.seed;
  TrainResult<Real> result{make_models<Real>(config, pair.source_train.width()), {}, 0.0, 0.0};
  auto& models = result.models;

  BatchStream source_stream(pair.source_train.size(), config.batch_size, splitmix64(seed ^ 0x5eed0001ULL));
  BatchStream target_stream(pair.target_train.size(), config.batch_size, splitmix64(seed ^ 0x5eed0002ULL));
  std::mt19937_64 noise(splitmix64(seed ^ 0x5eed0003ULL));
  const auto revealed = reveal_target_labels(pair.target_train, config.semi_labels_per_class,
                                             splitmix64(seed ^ 0x5eed0004ULL));
  std::optional<BatchStream> revealed_stream;
  if (!revealed.empty()) {
    revealed_stream.emplace(revealed.size(), std::min(config.batch_size, revealed.size()),
                            splitmix64(seed ^ 0x5eed0005ULL));
  }

  const std::size_t total = config.total_iterations();
  for (std::size_t t = 0; t < total; ++t) {
    StepInput<Real> input;
    input.source = make_batch<Real>(pair.source_train, source_stream.next());
    input.target = make_batch<Real>(pair.target_train, target_stream.next());
    if (revealed_stream) {
      std::vector<std::size_t> picks;
      for (std::size_t k : revealed_stream->next()) picks.push_back(revealed[k]);
      input.revealed = make_batch<Real>(pair.target_train, picks);
    }
    StepReport report = train_step(models, input, config, t, noise);
    if ((t + 1) % config.cadence == 0) {
      report.source_acc = evaluate(models.generator, models.classifier, pair.source_test, config.eval_samples);
      report.target_acc = evaluate(models.generator, models.classifier, pair.target_test, config.eval_samples);
      result.history.push_back(report);
      if (progress) progress(report);
    }
  }
  if (!pair.source_test.empty()) {
    result.source_acc = evaluate(models.generator, models.classifier, pair.source_test);
  }
  if (!pair.target_test.empty()) {
    result.target_acc = evaluate(models.generator, models.classifier, pair.target_test);
  }
  return result;
}

// ---------------------------------------------------------------- probes

template <typename Real>
Tensor<Real> flip_bit_reconstruct(const ModelSet<Real>& models, const Tensor<Real>& x,
                                  std::span<const int> domains, bool flip) {
  if (!models.decoder_reads_domain_bit || !models.decoder) {
    throw ContractError("flip_bit_reconstruct needs an explicit-DDRep model");
  }
  if (domains.size() != x.rows()) {
    throw ShapeError("flip_bit_reconstruct: " + std::to_string(domains.size()) + " domain bits for " +
                     std::to_string(x.rows()) + " samples");
  }
  NoGradGuard no_grad;
  std::vector<Tensor<Real>> parts{models.generator.forward(x)};
  if (models.encoder) {
    const auto zeros = Tensor<Real>::zeros({x.rows(), models.encoder->latent_width()});
    parts.push_back(models.encoder->forward(x, zeros).z_mean);
  }
  parts.push_back(domain_bits<Real>(domains, flip));
  return models.decoder->forward(concat_last<Real>(parts));
}

template <typename Real>
double ddrep_information_bits(const Encoder<Real>& encoder, const Dataset& data, std::size_t limit) {
  const std::size_t n = limit == 0 ? data.size() : std::min(limit, data.size());
  if (n == 0) throw DatasetError("ddrep_information_bits: empty dataset");
  NoGradGuard no_grad;
  double total = 0.0;
  for (std::size_t begin = 0; begin < n; begin += kEvalChunk) {
    const std::size_t end = std::min(n, begin + kEvalChunk);
    const Tensor<Real> x = rows_of<Real>(data, begin, end);
    const auto out = encoder.forward(x, Tensor<Real>::zeros({end - begin, encoder.latent_width()}));
    total += static_cast<double>(kl_loss(out.z_mean, out.z_log_var).item()) * static_cast<double>(end - begin);
  }
  return total / static_cast<double>(n) / std::numbers::ln2;
}

template <typename Real>
void save_models(ModelSet<Real>& models, const std::filesystem::path& path, std::uint64_t seed,
                 const std::string& meta) {
  std::vector<NamedTensor<Real>> tensors;
  for (const auto& p : models.parameters()) tensors.push_back({p.name, *p.tensor});
  save_checkpoint(path, tensors, seed, meta);
}

template <typename Real>
void load_models(ModelSet<Real>& models, const std::filesystem::path& path) {
  const auto ckpt = load_checkpoint<Real>(path);
  for (auto& p : models.parameters()) {
    const Tensor<Real>& stored = ckpt.at(p.name);
    if (stored.shape() != p.tensor->shape()) {
      throw CheckpointError(path.string() + ": " + p.name + " has shape " + to_string(stored.shape()) +
                            ", model expects " + to_string(p.tensor->shape()));
    }
    std::copy(stored.data().begin(), stored.data().end(), p.tensor->mutable_data().begin());
  }
}

#define DIREP_INSTANTIATE_TRAINERS(Real)                                                              \
  template Batch<Real> make_batch<Real>(const Dataset&, std::span<const std::size_t>);               \
  template struct ModelSet<Real>;                                                                     \
  template ModelSet<Real> make_models<Real>(const TrainConfig&, std::size_t);                        \
  template StepReport vaegan_step(ModelSet<Real>&, const StepInput<Real>&, const TrainConfig&,       \
                                  std::size_t, std::mt19937_64&);                                     \
  template StepReport explicit_ddrep_step(ModelSet<Real>&, const StepInput<Real>&,                   \
                                          const TrainConfig&, std::size_t, std::mt19937_64&);         \
  template StepReport gan_based_step(ModelSet<Real>&, const StepInput<Real>&, const TrainConfig&,    \
                                     std::size_t);                                                    \
  template StepReport dann_step(ModelSet<Real>&, const StepInput<Real>&, const TrainConfig&,         \
                                std::size_t);                                                         \
  template StepReport dsn_step(ModelSet<Real>&, const StepInput<Real>&, const TrainConfig&,          \
                               std::size_t);                                                          \
  template StepReport supervised_step(ModelSet<Real>&, const StepInput<Real>&, const TrainConfig&,   \
                                      std::size_t);                                                   \
  template StepReport ablation_step(Ablation, ModelSet<Real>&, const StepInput<Real>&,               \
                                    const TrainConfig&, std::size_t, std::mt19937_64&);               \
  template StepReport train_step(ModelSet<Real>&, const StepInput<Real>&, const TrainConfig&,        \
                                 std::size_t, std::mt19937_64&);                                      \
  template double evaluate(const Network<Real>&, const Network<Real>&, const Dataset&, std::size_t); \
  template TrainResult<Real> train<Real>(const TrainConfig&, const DomainPair&, const ProgressFn&);  \
  template Tensor<Real> flip_bit_reconstruct(const ModelSet<Real>&, const Tensor<Real>&,             \
                                             std::span<const int>, bool);                             \
  template double ddrep_information_bits(const Encoder<Real>&, const Dataset&, std::size_t);         \
  template void save_models(ModelSet<Real>&, const std::filesystem::path&, std::uint64_t,            \
                            const std::string&);                                                      \
  template void load_models(ModelSet<Real>&, const std::filesystem::path&);

DIREP_INSTANTIATE_TRAINERS(float)
DIREP_INSTANTIATE_TRAINERS(double)

}  // namespace direp
