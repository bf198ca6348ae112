#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace direp {

/// Raised for malformed or missing dataset files.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kFashionSide = 28;
inline constexpr std::size_t kFashionPixels = kFashionSide * kFashionSide;
inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPlane = kCifarSide * kCifarSide;
inline constexpr std::size_t kCifarPixels = 3 * kCifarPlane;
inline constexpr std::size_t kClasses = 10;

/// One (x, l, d) triple.
struct LabeledSample {
  std::vector<float> x;
  std::optional<int> label;
  int domain = 0;
};

/// Row-major feature matrix with per-row label (-1 when absent) and domain bit.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::size_t width) : width_(width) {}

  std::size_t size() const { return labels_.size(); }
  std::size_t width() const { return width_; }
  bool empty() const { return labels_.empty(); }

  void reserve(std::size_t n);
  void push_back(const LabeledSample& sample);
  void push_back(std::span<const float> x, std::optional<int> label, int domain);

  LabeledSample sample(std::size_t i) const;
  std::span<const float> features(std::size_t i) const;
  std::optional<int> label(std::size_t i) const;
  int domain(std::size_t i) const { return domains_[i]; }

  const std::vector<float>& feature_data() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<int>& domains() const { return domains_; }

 private:
  std::size_t width_ = 0;
  std::vector<float> features_;
  std::vector<int> labels_;
  std::vector<int> domains_;
};

enum class CheatMode { correct, shift, random };
enum class CheatScenario { none, shift, random };

std::string_view scenario_name(CheatScenario scenario);
CheatScenario parse_scenario(std::string_view text);

/// Provenance of a constructed pair.
struct PairDescriptor {
  std::string dataset;  // "fm", "cifar", "blobs"
  CheatScenario scenario = CheatScenario::none;
  double bias = 0.0;
  std::uint64_t seed = 0;
  std::size_t raw_width = 0;    // features before any cheating segment
  std::size_t cheat_width = 0;  // 0 or kClasses
  std::size_t image_rows = 0;   // 0 when the raw features are not an image
  std::size_t image_cols = 0;
};

/// Source samples carry d = 0, target samples d = 1.
struct DomainPair {
  Dataset source_train;
  Dataset source_test;
  Dataset target_train;
  Dataset target_test;
  PairDescriptor descriptor;
};

/// Reads IDX images (magic 0x00000803) and labels (0x00000801), gzip or
/// plain. Pixels are scaled by 1/255; every sample gets domain 0.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Writes IDX files; a ".gz" suffix selects gzip compression.
void write_idx_images(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                      std::span<const std::uint8_t> pixels);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

/// Rotates a row-major image by 180 degrees: (r, c) -> (rows-1-r, cols-1-c).
std::vector<float> flip180(std::span<const float> image, std::size_t rows = kFashionSide,
                           std::size_t cols = kFashionSide);

/// Appends a 10-way one-hot: the label (correct), label + 1 mod 10 (shift)
/// or a uniform draw (random).
LabeledSample attach_cheating(const LabeledSample& sample, CheatMode mode, std::mt19937_64& rng);

/// Builds the upright-source / rotated-target pair from already loaded
/// Fashion-MNIST splits.
DomainPair make_fashion_pair(const Dataset& train, const Dataset& test, CheatScenario scenario,
                             std::uint64_t seed);
/// Loads Fashion-MNIST from `data_dir/fashion` and builds the pair.
DomainPair build_fashion_pair(CheatScenario scenario, std::uint64_t seed,
                              const std::filesystem::path& data_dir);

/// Reads CIFAR-10 binary batches (1 label byte + 3072 planar RGB bytes).
Dataset load_cifar_batches(std::span<const std::filesystem::path> paths);

/// Keeps one colour plane of a planar RGB image and zeroes the other two.
enum class ColorPlane { red = 0, green = 1, blue = 2 };
std::vector<float> keep_plane(std::span<const float> image, ColorPlane plane);

/// Source-domain plane choice: the label-parity plane (odd -> blue, even ->
/// red) with probability p, otherwise red or blue uniformly.
ColorPlane choose_source_plane(int label, double bias, std::mt19937_64& rng);

DomainPair make_cifar_bias_pair(const Dataset& train, const Dataset& test, double bias,
                                std::uint64_t seed);
DomainPair cifar_bias_pair(double bias, std::uint64_t seed, const std::filesystem::path& data_dir);

/// 2-D Gaussian clusters; the target is the source rotated 180 degrees
/// about the origin. Cheating bits follow the Fashion-MNIST scenarios.
DomainPair synthetic_blobs(std::size_t n_per_class, std::size_t classes, CheatScenario scenario,
                           std::uint64_t seed);

/// Checks the LabeledSample invariants over every split; throws DatasetError.
void validate_pair(const DomainPair& pair);

/// Endless stream of shuffled index batches, reshuffled at each epoch.
class BatchStream {
 public:
  BatchStream(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed);
  std::vector<std::size_t> next();
  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle();

  std::size_t batch_size_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

/// Flat binary container: "DIREPDP1", u64 header length, JSON header, then
/// per split float32 features, int32 labels and uint8 domains (little endian).
void export_domain_pair(const DomainPair& pair, const std::filesystem::path& path);
DomainPair import_domain_pair(const std::filesystem::path& path);

/// Dataset root from DIREP_DATA_DIR, falling back to ./data.
std::filesystem::path default_data_dir();

}  // namespace direp
