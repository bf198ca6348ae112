#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "direp/adam.hpp"
#include "direp/datasets.hpp"
#include "direp/losses.hpp"
#include "direp/networks.hpp"

namespace direp {

enum class Algorithm { vaegan, explicit_ddrep, gan_based, dann, dsn, source_only, target_only };
enum class Ablation { none, dsn_reverse_kl, dsn_star, vaegan_reverse_difference };
enum class Precision { float32, float64 };

std::string_view algorithm_name(Algorithm algorithm);
Algorithm parse_algorithm(std::string_view text);
std::string_view ablation_name(Ablation ablation);
Ablation parse_ablation(std::string_view text);

/// Invalid configuration; the message lists every problem found.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A loss went NaN or infinite.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::size_t iteration, const std::string& what)
      : std::runtime_error(what + " at iteration " + std::to_string(iteration)), iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

struct TrainConfig {
  Algorithm algorithm = Algorithm::vaegan;
  Ablation ablation = Ablation::none;
  LossWeights weights;
  Architecture architecture;  // input_width is taken from the data
  std::size_t iterations = 10000;
  std::size_t batch_size = 128;  // per domain
  std::uint64_t seed = 0;
  std::size_t semi_labels_per_class = 0;
  std::size_t cadence = 100;
  std::size_t eval_samples = 1000;  // test samples per domain at the cadence; 0 = all
  bool explicit_with_encoder = false;  // explicit DDRep variant B: encoder output followed by d
  std::vector<Role> frozen;  // networks that are never updated
  Precision precision = Precision::float32;

  /// Every problem with this configuration; empty when valid.
  std::vector<std::string> problems() const;
  /// Throws ConfigError listing problems().
  void validate() const;
  /// Training steps actually run (dsn_star runs two phases of `iterations`).
  std::size_t total_iterations() const;
  bool is_frozen(Role role) const;
};

inline constexpr std::size_t kSemiLabelLevels[] = {0, 1, 5, 10, 20, 50, 100};

struct StepReport {
  std::size_t iteration = 0;
  double loss_c = 0.0;
  double loss_d = 0.0;
  double loss_g = 0.0;
  double loss_r = 0.0;
  double loss_kl = 0.0;
  double loss_difference = 0.0;
  double lambda = 0.0;
  // Filled in by train() at the evaluation cadence; NaN otherwise.
  double source_acc = std::numeric_limits<double>::quiet_NaN();
  double target_acc = std::numeric_limits<double>::quiet_NaN();
};

template <typename Real>
struct Batch {
  Tensor<Real> x;
  std::vector<int> labels;  // -1 where unknown
  std::vector<int> domains;
  std::size_t size() const { return domains.size(); }
};

/// Inputs of one training step. `revealed` holds labelled target samples in
/// semi-supervised mode and is empty otherwise.
template <typename Real>
struct StepInput {
  Batch<Real> source;
  Batch<Real> target;
  Batch<Real> revealed;
};

template <typename Real>
Batch<Real> make_batch(const Dataset& data, std::span<const std::size_t> indices);

/// The networks of one run plus their optimizer state. Which networks exist
/// depends on the algorithm.
template <typename Real>
struct ModelSet {
  Algorithm algorithm = Algorithm::vaegan;
  bool decoder_reads_domain_bit = false;
  Network<Real> generator;
  Network<Real> classifier;
  std::optional<Network<Real>> discriminator;
  std::optional<Encoder<Real>> encoder;
  std::optional<Network<Real>> decoder;
  std::optional<Network<Real>> private_source;
  std::optional<Network<Real>> private_target;

  struct Parameter {
    std::string name;
    Role role;
    Tensor<Real>* tensor;
  };
  /// Every parameter in a fixed order.
  std::vector<Parameter> parameters();
  std::vector<AdamState<Real>> adam;  // parallel to parameters()
};

/// Builds the networks `config` needs for inputs of width `input_width`.
template <typename Real>
ModelSet<Real> make_models(const TrainConfig& config, std::size_t input_width);

// Each step runs one forward pass, one backward pass and then one Adam update
// per unfrozen network, so no network sees another's post-update weights.
// `iteration` sets lambda; `noise` feeds the encoder's reparameterization draws.

template <typename Real>
StepReport vaegan_step(ModelSet<Real>& models, const StepInput<Real>& input, const TrainConfig& config,
                       std::size_t iteration, std::mt19937_64& noise);
template <typename Real>
StepReport explicit_ddrep_step(ModelSet<Real>& models, const StepInput<Real>& input,
                               const TrainConfig& config, std::size_t iteration, std::mt19937_64& noise);
template <typename Real>
StepReport gan_based_step(ModelSet<Real>& models, const StepInput<Real>& input, const TrainConfig& config,
                          std::size_t iteration);
template <typename Real>
StepReport dann_step(ModelSet<Real>& models, const StepInput<Real>& input, const TrainConfig& config,
                     std::size_t iteration);
template <typename Real>
StepReport dsn_step(ModelSet<Real>& models, const StepInput<Real>& input, const TrainConfig& config,
                    std::size_t iteration);
/// Classifier-only training on the labelled source (source_only) or on the
/// labelled target (target_only).
template <typename Real>
StepReport supervised_step(ModelSet<Real>& models, const StepInput<Real>& input,
                           const TrainConfig& config, std::size_t iteration);
/// The ablation variants: dsn_reverse_kl and dsn_star on DSN models,
/// vaegan_reverse_difference on VAEGAN models.
template <typename Real>
StepReport ablation_step(Ablation variant, ModelSet<Real>& models, const StepInput<Real>& input,
                         const TrainConfig& config, std::size_t iteration, std::mt19937_64& noise);

/// Dispatches to the configured step.
template <typename Real>
StepReport train_step(ModelSet<Real>& models, const StepInput<Real>& input, const TrainConfig& config,
                      std::size_t iteration, std::mt19937_64& noise);

/// Accuracy of argmax C(G(x)) against the labels of `data`, over its first
/// `limit` samples (0 = all).
template <typename Real>
double evaluate(const Network<Real>& generator, const Network<Real>& classifier, const Dataset& data,
                std::size_t limit = 0);

template <typename Real>
struct TrainResult {
  ModelSet<Real> models;
  std::vector<StepReport> history;
  double source_acc = 0.0;  // full source test set
  double target_acc = 0.0;  // full target test set
};

using ProgressFn = std::function<void(const StepReport&)>;

/// Runs the configured algorithm on `pair`. Throws NumericError on a
/// non-finite loss.
template <typename Real>
TrainResult<Real> train(const TrainConfig& config, const DomainPair& pair, const ProgressFn& progress = {});

/// Revealed target indices: `per_class` samples of each class, drawn with `seed`.
std::vector<std::size_t> reveal_target_labels(const Dataset& target, std::size_t per_class,
                                              std::uint64_t seed);

/// x~ = F(G(x), 1 - d) for an explicit-DDRep model (variant B uses the
/// encoder mean). `flip` = false gives the ordinary reconstruction.
template <typename Real>
Tensor<Real> flip_bit_reconstruct(const ModelSet<Real>& models, const Tensor<Real>& x,
                                  std::span<const int> domains, bool flip = true);

/// Batch-mean KL of the encoder's posterior over `data`, in bits.
template <typename Real>
double ddrep_information_bits(const Encoder<Real>& encoder, const Dataset& data, std::size_t limit = 0);

/// Saves parameters with `meta` text (the harness stores the run config).
template <typename Real>
void save_models(ModelSet<Real>& models, const std::filesystem::path& path, std::uint64_t seed,
                 const std::string& meta);
/// Loads parameters saved by save_models into models built for the same config.
template <typename Real>
void load_models(ModelSet<Real>& models, const std::filesystem::path& path);

}  // namespace direp
