#include "direp/datasets.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <numbers>

#include "json.hpp"

namespace direp {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- Dataset

void Dataset::reserve(std::size_t n) {
  features_.reserve(n * width_);
  labels_.reserve(n);
  domains_.reserve(n);
}

void Dataset::push_back(const LabeledSample& sample) {
  push_back(sample.x, sample.label, sample.domain);
}

void Dataset::push_back(std::span<const float> x, std::optional<int> label, int domain) {
  if (x.size() != width_) {
    throw DatasetError("sample width " + std::to_string(x.size()) + " does not match dataset width " +
                       std::to_string(width_));
  }
  features_.insert(features_.end(), x.begin(), x.end());
  labels_.push_back(label.value_or(-1));
  domains_.push_back(domain);
}

LabeledSample Dataset::sample(std::size_t i) const {
  const auto x = features(i);
  return {std::vector<float>(x.begin(), x.end()), label(i), domains_[i]};
}

std::span<const float> Dataset::features(std::size_t i) const {
  return std::span<const float>(features_).subspan(i * width_, width_);
}

std::optional<int> Dataset::label(std::size_t i) const {
  return labels_[i] < 0 ? std::nullopt : std::optional<int>(labels_[i]);
}

std::string_view scenario_name(CheatScenario scenario) {
  switch (scenario) {
    case CheatScenario::none: return "none";
    case CheatScenario::shift: return "shift";
    case CheatScenario::random: return "random";
  }
  return "?";
}

CheatScenario parse_scenario(std::string_view text) {
  if (text == "none") return CheatScenario::none;
  if (text == "shift") return CheatScenario::shift;
  if (text == "random") return CheatScenario::random;
  throw std::invalid_argument("unknown cheating scenario '" + std::string(text) +
                              "' (expected none|shift|random)");
}

// ---------------------------------------------------------------- IDX

namespace {

class GzReader {
 public:
  explicit GzReader(const fs::path& path) : path_(path) {
    file_ = gzopen(path.c_str(), "rb");
    if (!file_) throw DatasetError("cannot open " + path.string());
  }
  ~GzReader() {
    if (file_) gzclose(file_);
  }
  GzReader(const GzReader&) = delete;
  GzReader& operator=(const GzReader&) = delete;

  void read(void* dst, std::size_t n, const char* what) {
    auto* out = static_cast<unsigned char*>(dst);
    std::size_t done = 0;
    while (done < n) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n - done, 1u << 30));
      const int got = gzread(file_, out + done, chunk);
      if (got <= 0) {
        throw DatasetError(path_.string() + ": truncated " + what + " (needed " + std::to_string(n) +
                           " bytes, got " + std::to_string(done) + ")");
      }
      done += static_cast<std::size_t>(got);
    }
  }

  std::uint32_t read_be32(const char* what) {
    std::array<unsigned char, 4> b{};
    read(b.data(), 4, what);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
           std::uint32_t{b[3]};
  }

 private:
  fs::path path_;
  gzFile file_ = nullptr;
};

class Writer {
 public:
  explicit Writer(const fs::path& path) : path_(path) {
    gz_ = path.extension() == ".gz";
    if (gz_) {
      gz_file_ = gzopen(path.c_str(), "wb");
      if (!gz_file_) throw DatasetError("cannot write " + path.string());
    } else {
      plain_.open(path, std::ios::binary);
      if (!plain_) throw DatasetError("cannot write " + path.string());
    }
  }
  ~Writer() {
    if (gz_file_) gzclose(gz_file_);
  }
  Writer(const Writer&) = delete;
  Writer& operator=(const Writer&) = delete;

  void write(const void* src, std::size_t n) {
    if (gz_) {
      if (n > 0 && gzwrite(gz_file_, src, static_cast<unsigned>(n)) != static_cast<int>(n)) {
        throw DatasetError("write failed: " + path_.string());
      }
    } else {
      plain_.write(static_cast<const char*>(src), static_cast<std::streamsize>(n));
      if (!plain_) throw DatasetError("write failed: " + path_.string());
    }
  }

  void write_be32(std::uint32_t v) {
    const std::array<unsigned char, 4> b{static_cast<unsigned char>(v >> 24),
                                         static_cast<unsigned char>(v >> 16),
                                         static_cast<unsigned char>(v >> 8),
                                         static_cast<unsigned char>(v)};
    write(b.data(), 4);
  }

 private:
  fs::path path_;
  bool gz_ = false;
  gzFile gz_file_ = nullptr;
  std::ofstream plain_;
};

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

}  // namespace

Dataset load_idx(const fs::path& images_path, const fs::path& labels_path) {
  GzReader images(images_path);
  const std::uint32_t image_magic = images.read_be32("header");
  if (image_magic != kIdxImagesMagic) {
    throw DatasetError(images_path.string() + ": bad IDX image magic 0x" +
                       std::to_string(image_magic));
  }
  const std::size_t count = images.read_be32("header");
  const std::size_t rows = images.read_be32("header");
  const std::size_t cols = images.read_be32("header");

  GzReader labels(labels_path);
  const std::uint32_t label_magic = labels.read_be32("header");
  if (label_magic != kIdxLabelsMagic) {
    throw DatasetError(labels_path.string() + ": bad IDX label magic 0x" +
                       std::to_string(label_magic));
  }
  const std::size_t label_count = labels.read_be32("header");
  if (label_count != count) {
    throw DatasetError("image/label count mismatch: " + std::to_string(count) + " images vs " +
                       std::to_string(label_count) + " labels");
  }

  const std::size_t pixels = rows * cols;
  std::vector<std::uint8_t> raw(count * pixels);
  std::vector<std::uint8_t> raw_labels(count);
  if (count > 0) {
    images.read(raw.data(), raw.size(), "image payload");
    labels.read(raw_labels.data(), raw_labels.size(), "label payload");
  }

  Dataset out(pixels);
  out.reserve(count);
  std::vector<float> x(pixels);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t p = 0; p < pixels; ++p) x[p] = static_cast<float>(raw[i * pixels + p]) / 255.0f;
    out.push_back(x, static_cast<int>(raw_labels[i]), 0);
  }
  return out;
}

void write_idx_images(const fs::path& path, std::size_t rows, std::size_t cols,
                      std::span<const std::uint8_t> pixels) {
  const std::size_t per_image = rows * cols;
  if (per_image == 0 || pixels.size() % per_image != 0) {
    throw DatasetError("write_idx_images: payload is not a whole number of images");
  }
  Writer out(path);
  out.write_be32(kIdxImagesMagic);
  out.write_be32(static_cast<std::uint32_t>(pixels.size() / per_image));
  out.write_be32(static_cast<std::uint32_t>(rows));
  out.write_be32(static_cast<std::uint32_t>(cols));
  out.write(pixels.data(), pixels.size());
}

void write_idx_labels(const fs::path& path, std::span<const std::uint8_t> labels) {
  Writer out(path);
  out.write_be32(kIdxLabelsMagic);
  out.write_be32(static_cast<std::uint32_t>(labels.size()));
  out.write(labels.data(), labels.size());
}

// ---------------------------------------------------------------- transforms

std::vector<float> flip180(std::span<const float> image, std::size_t rows, std::size_t cols) {
  if (image.size() != rows * cols) {
    throw DatasetError("flip180 expects " + std::to_string(rows * cols) + " pixels, got " +
                       std::to_string(image.size()));
  }
  std::vector<float> out(image.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out[(rows - 1 - r) * cols + (cols - 1 - c)] = image[r * cols + c];
    }
  }
  return out;
}

LabeledSample attach_cheating(const LabeledSample& sample, CheatMode mode, std::mt19937_64& rng) {
  if (mode != CheatMode::random && !sample.label) {
    throw DatasetError("attach_cheating: correct/shift cheating needs a labelled sample");
  }
  std::size_t index = 0;
  switch (mode) {
    case CheatMode::correct: index = static_cast<std::size_t>(*sample.label); break;
    case CheatMode::shift: index = (static_cast<std::size_t>(*sample.label) + 1) % kClasses; break;
    case CheatMode::random: index = std::uniform_int_distribution<std::size_t>(0, kClasses - 1)(rng); break;
  }
  LabeledSample out = sample;
  out.x.resize(sample.x.size() + kClasses, 0.0f);
  out.x[sample.x.size() + index] = 1.0f;
  return out;
}

namespace {

std::optional<CheatMode> target_cheat_mode(CheatScenario scenario) {
  switch (scenario) {
    case CheatScenario::none: return std::nullopt;
    case CheatScenario::shift: return CheatMode::shift;
    case CheatScenario::random: return CheatMode::random;
  }
  return std::nullopt;
}

/// Applies `transform` to every sample of `src` and tags it with `domain`,
/// appending cheating bits when `cheat` is set.
template <typename Transform>
Dataset build_domain(const Dataset& src, int domain, std::optional<CheatMode> cheat,
                     std::mt19937_64& rng, Transform&& transform) {
  const std::size_t width = src.width() + (cheat ? kClasses : 0);
  Dataset out(width);
  out.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    LabeledSample s{transform(src.features(i)), src.label(i), domain};
    if (cheat) s = attach_cheating(s, *cheat, rng);
    out.push_back(s);
  }
  return out;
}

}  // namespace

DomainPair make_fashion_pair(const Dataset& train, const Dataset& test, CheatScenario scenario,
                             std::uint64_t seed) {
  if (train.width() != kFashionPixels || test.width() != kFashionPixels) {
    throw DatasetError("Fashion-MNIST splits must have 784 pixels per sample");
  }
  std::mt19937_64 rng(seed);
  const bool cheating = scenario != CheatScenario::none;
  const std::optional<CheatMode> source_mode =
      cheating ? std::optional<CheatMode>(CheatMode::correct) : std::nullopt;
  const auto target_mode = target_cheat_mode(scenario);
  auto upright = [](std::span<const float> x) { return std::vector<float>(x.begin(), x.end()); };
  auto rotated = [](std::span<const float> x) { return flip180(x); };

  DomainPair pair;
  pair.source_train = build_domain(train, 0, source_mode, rng, upright);
  pair.source_test = build_domain(test, 0, source_mode, rng, upright);
  pair.target_train = build_domain(train, 1, target_mode, rng, rotated);
  pair.target_test = build_domain(test, 1, target_mode, rng, rotated);
  pair.descriptor = {"fm", scenario, 0.0, seed, kFashionPixels, cheating ? kClasses : 0,
                     kFashionSide, kFashionSide};
  return pair;
}

namespace {

fs::path first_existing(const fs::path& dir, std::initializer_list<const char*> names) {
  for (const char* name : names) {
    if (fs::exists(dir / name)) return dir / name;
  }
  throw DatasetError("missing dataset file " + (dir / *names.begin()).string() +
                     " (set DIREP_DATA_DIR or run tools/fetch_fashion_mnist.py)");
}

}  // namespace

DomainPair build_fashion_pair(CheatScenario scenario, std::uint64_t seed, const fs::path& data_dir) {
  const fs::path dir = data_dir / "fashion";
  const Dataset train =
      load_idx(first_existing(dir, {"train-images-idx3-ubyte.gz", "train-images-idx3-ubyte"}),
               first_existing(dir, {"train-labels-idx1-ubyte.gz", "train-labels-idx1-ubyte"}));
  const Dataset test =
      load_idx(first_existing(dir, {"t10k-images-idx3-ubyte.gz", "t10k-images-idx3-ubyte"}),
               first_existing(dir, {"t10k-labels-idx1-ubyte.gz", "t10k-labels-idx1-ubyte"}));
  return make_fashion_pair(train, test, scenario, seed);
}

// ---------------------------------------------------------------- CIFAR

Dataset load_cifar_batches(std::span<const fs::path> paths) {
  constexpr std::size_t kRecord = 1 + kCifarPixels;
  Dataset out(kCifarPixels);
  std::vector<float> x(kCifarPixels);
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() % kRecord != 0) {
      throw DatasetError(path.string() + ": truncated CIFAR batch (" + std::to_string(bytes.size()) +
                         " bytes is not a multiple of 3073)");
    }
    for (std::size_t off = 0; off < bytes.size(); off += kRecord) {
      const int label = bytes[off];
      if (label >= static_cast<int>(kClasses)) {
        throw DatasetError(path.string() + ": label byte " + std::to_string(label) + " out of range");
      }
      for (std::size_t p = 0; p < kCifarPixels; ++p) x[p] = static_cast<float>(bytes[off + 1 + p]) / 255.0f;
      out.push_back(x, label, 0);
    }
  }
  return out;
}

std::vector<float> keep_plane(std::span<const float> image, ColorPlane plane) {
  if (image.size() != kCifarPixels) {
    throw DatasetError("keep_plane expects 3072 planar RGB values, got " + std::to_string(image.size()));
  }
  std::vector<float> out(kCifarPixels, 0.0f);
  const std::size_t offset = static_cast<std::size_t>(plane) * kCifarPlane;
  std::copy_n(image.begin() + static_cast<std::ptrdiff_t>(offset), kCifarPlane,
              out.begin() + static_cast<std::ptrdiff_t>(offset));
  return out;
}

ColorPlane choose_source_plane(int label, double bias, std::mt19937_64& rng) {
  const ColorPlane favoured = (label % 2 != 0) ? ColorPlane::blue : ColorPlane::red;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < bias) return favoured;
  return unit(rng) < 0.5 ? ColorPlane::red : ColorPlane::blue;
}

DomainPair make_cifar_bias_pair(const Dataset& train, const Dataset& test, double bias,
                                std::uint64_t seed) {
  if (!(bias >= 0.0 && bias <= 1.0)) {
    throw std::invalid_argument("bias must lie in [0, 1], got " + std::to_string(bias));
  }
  std::mt19937_64 rng(seed);
  auto source = [&](const Dataset& src) {
    Dataset out(kCifarPixels);
    out.reserve(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
      const int label = *src.label(i);
      out.push_back(keep_plane(src.features(i), choose_source_plane(label, bias, rng)), label, 0);
    }
    return out;
  };
  auto target = [&](const Dataset& src) {
    Dataset out(kCifarPixels);
    out.reserve(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
      out.push_back(keep_plane(src.features(i), ColorPlane::green), src.label(i), 1);
    }
    return out;
  };
  DomainPair pair;
  pair.source_train = source(train);
  pair.source_test = source(test);
  pair.target_train = target(train);
  pair.target_test = target(test);
  pair.descriptor = {"cifar", CheatScenario::none, bias, seed, kCifarPixels, 0, 0, 0};
  return pair;
}

DomainPair cifar_bias_pair(double bias, std::uint64_t seed, const fs::path& data_dir) {
  if (!(bias >= 0.0 && bias <= 1.0)) {
    throw std::invalid_argument("bias must lie in [0, 1], got " + std::to_string(bias));
  }
  const fs::path dir = data_dir / "cifar-10-batches-bin";
  std::vector<fs::path> train_paths;
  for (int i = 1; i <= 5; ++i) {
    train_paths.push_back(first_existing(dir, {("data_batch_" + std::to_string(i) + ".bin").c_str()}));
  }
  const std::vector<fs::path> test_paths{first_existing(dir, {"test_batch.bin"})};
  return make_cifar_bias_pair(load_cifar_batches(train_paths), load_cifar_batches(test_paths), bias,
                              seed);
}

// ---------------------------------------------------------------- blobs

DomainPair synthetic_blobs(std::size_t n_per_class, std::size_t classes, CheatScenario scenario,
                           std::uint64_t seed) {
  if (classes == 0 || classes > kClasses) {
    throw std::invalid_argument("synthetic_blobs supports 1..10 classes");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.25, 0.25);
  // Class k sits at radius 1.5 + 1.2k along one ray; the target clusters lie
  // on the opposite ray. Distance from the origin identifies the class in
  // both domains, direction identifies the domain.
  const double angle = std::numbers::pi * std::uniform_real_distribution<double>(0.25, 0.75)(rng);
  std::vector<std::array<double, 2>> means(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    const double radius = 1.5 + 1.2 * static_cast<double>(k) + 0.2 * jitter(rng);
    means[k] = {radius * std::cos(angle), radius * std::sin(angle)};
  }
  std::normal_distribution<double> noise(0.0, 0.3);

  auto draw = [&](int domain) {
    Dataset raw(2);
    raw.reserve(n_per_class * classes);
    for (std::size_t i = 0; i < n_per_class; ++i) {
      for (std::size_t k = 0; k < classes; ++k) {
        std::array<float, 2> x{static_cast<float>(means[k][0] + noise(rng)),
                               static_cast<float>(means[k][1] + noise(rng))};
        if (domain == 1) x = {-x[0], -x[1]};
        raw.push_back(x, static_cast<int>(k), domain);
      }
    }
    return raw;
  };
  const bool cheating = scenario != CheatScenario::none;
  const std::optional<CheatMode> source_mode =
      cheating ? std::optional<CheatMode>(CheatMode::correct) : std::nullopt;
  const auto target_mode = target_cheat_mode(scenario);
  auto keep = [](std::span<const float> x) { return std::vector<float>(x.begin(), x.end()); };

  DomainPair pair;
  pair.source_train = build_domain(draw(0), 0, source_mode, rng, keep);
  pair.source_test = build_domain(draw(0), 0, source_mode, rng, keep);
  pair.target_train = build_domain(draw(1), 1, target_mode, rng, keep);
  pair.target_test = build_domain(draw(1), 1, target_mode, rng, keep);
  pair.descriptor = {"blobs", scenario, 0.0, seed, 2, cheating ? kClasses : 0, 0, 0};
  return pair;
}

// ---------------------------------------------------------------- validation

void validate_pair(const DomainPair& pair) {
  const auto& desc = pair.descriptor;
  auto check = [&](const Dataset& set, int domain, const char* name) {
    if (set.width() != desc.raw_width + desc.cheat_width) {
      throw DatasetError(std::string(name) + ": width " + std::to_string(set.width()) +
                         " does not match descriptor");
    }
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (set.domain(i) != domain) {
        throw DatasetError(std::string(name) + ": sample " + std::to_string(i) + " has domain bit " +
                           std::to_string(set.domain(i)));
      }
      if (auto l = set.label(i); l && (*l < 0 || *l >= static_cast<int>(kClasses))) {
        throw DatasetError(std::string(name) + ": label out of range at " + std::to_string(i));
      }
      if (desc.cheat_width > 0) {
        const auto bits = set.features(i).subspan(desc.raw_width);
        std::size_t ones = 0;
        for (float b : bits) {
          if (b == 1.0f) ++ones;
          else if (b != 0.0f) ones += 2;
        }
        if (ones != 1) {
          throw DatasetError(std::string(name) + ": cheating segment of sample " +
                             std::to_string(i) + " is not one-hot");
        }
      }
    }
  };
  check(pair.source_train, 0, "source_train");
  check(pair.source_test, 0, "source_test");
  check(pair.target_train, 1, "target_train");
  check(pair.target_test, 1, "target_test");
}

// ---------------------------------------------------------------- batching

BatchStream::BatchStream(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed)
    : batch_size_(batch_size), rng_(seed), order_(dataset_size) {
  if (dataset_size == 0) throw DatasetError("BatchStream: empty dataset");
  if (batch_size == 0) throw DatasetError("BatchStream: batch size must be positive");
  for (std::size_t i = 0; i < dataset_size; ++i) order_[i] = i;
  reshuffle();
}

void BatchStream::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::vector<std::size_t> BatchStream::next() {
  std::vector<std::size_t> batch;
  batch.reserve(batch_size_);
  while (batch.size() < batch_size_) {
    if (cursor_ == order_.size()) {
      ++epoch_;
      reshuffle();
    }
    batch.push_back(order_[cursor_++]);
  }
  return batch;
}

// ---------------------------------------------------------------- export

namespace {

constexpr char kPairMagic[8] = {'D', 'I', 'R', 'E', 'P', 'D', 'P', '1'};

template <typename T>
void write_le(std::ofstream& out, std::span<const T> values) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size_bytes()));
}

template <typename T>
void read_le(std::ifstream& in, std::span<T> values, const fs::path& path) {
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  if (!in) throw DatasetError(path.string() + ": truncated domain pair payload");
}

}  // namespace

void export_domain_pair(const DomainPair& pair, const fs::path& path) {
  const auto& d = pair.descriptor;
  nlohmann::json header;
  header["format"] = "direp-domain-pair";
  header["version"] = 1;
  header["descriptor"] = {{"dataset", d.dataset},        {"scenario", scenario_name(d.scenario)},
                          {"bias", d.bias},              {"seed", d.seed},
                          {"raw_width", d.raw_width},    {"cheat_width", d.cheat_width},
                          {"image_rows", d.image_rows},  {"image_cols", d.image_cols}};
  const std::array<std::pair<const char*, const Dataset*>, 4> splits{{
      {"source_train", &pair.source_train},
      {"source_test", &pair.source_test},
      {"target_train", &pair.target_train},
      {"target_test", &pair.target_test},
  }};
  for (const auto& [name, set] : splits) {
    header["splits"].push_back({{"name", name}, {"count", set->size()}, {"width", set->width()}});
  }
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write " + path.string());
  out.write(kPairMagic, sizeof kPairMagic);
  const std::uint64_t length = text.size();
  write_le(out, std::span<const std::uint64_t>(&length, 1));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, set] : splits) {
    write_le(out, std::span<const float>(set->feature_data()));
    std::vector<std::int32_t> labels(set->labels().begin(), set->labels().end());
    write_le(out, std::span<const std::int32_t>(labels));
    std::vector<std::uint8_t> domains(set->domains().begin(), set->domains().end());
    write_le(out, std::span<const std::uint8_t>(domains));
  }
  if (!out) throw DatasetError("write failed: " + path.string());
}

DomainPair import_domain_pair(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kPairMagic, sizeof magic) != 0) {
    throw DatasetError(path.string() + ": not a domain pair file");
  }
  std::uint64_t length = 0;
  read_le(in, std::span<std::uint64_t>(&length, 1), path);
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw DatasetError(path.string() + ": truncated header");
  const auto header = nlohmann::json::parse(text);
  const auto& d = header.at("descriptor");

  DomainPair pair;
  pair.descriptor = {d.at("dataset").get<std::string>(),
                     parse_scenario(d.at("scenario").get<std::string>()),
                     d.at("bias").get<double>(),
                     d.at("seed").get<std::uint64_t>(),
                     d.at("raw_width").get<std::size_t>(),
                     d.at("cheat_width").get<std::size_t>(),
                     d.at("image_rows").get<std::size_t>(),
                     d.at("image_cols").get<std::size_t>()};
  std::array<Dataset*, 4> targets{&pair.source_train, &pair.source_test, &pair.target_train,
                                  &pair.target_test};
  const auto& splits = header.at("splits");
  if (splits.size() != targets.size()) throw DatasetError(path.string() + ": expected 4 splits");
  for (std::size_t s = 0; s < targets.size(); ++s) {
    const std::size_t count = splits[s].at("count").get<std::size_t>();
    const std::size_t width = splits[s].at("width").get<std::size_t>();
    std::vector<float> features(count * width);
    std::vector<std::int32_t> labels(count);
    std::vector<std::uint8_t> domains(count);
    read_le(in, std::span<float>(features), path);
    read_le(in, std::span<std::int32_t>(labels), path);
    read_le(in, std::span<std::uint8_t>(domains), path);
    Dataset set(width);
    set.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      set.push_back(std::span<const float>(features).subspan(i * width, width),
                    labels[i] < 0 ? std::nullopt : std::optional<int>(labels[i]), domains[i]);
    }
    *targets[s] = std::move(set);
  }
  return pair;
}

fs::path default_data_dir() {
  if (const char* env = std::getenv("DIREP_DATA_DIR"); env && *env) return env;
  return "data";
}

}  // namespace direp
