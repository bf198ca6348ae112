#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "direp/datasets.hpp"

using namespace direp;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("direp_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int cheat_index(std::span<const float> x, std::size_t raw_width) {
  int index = -1;
  for (std::size_t k = 0; k < kClasses; ++k) {
    if (x[raw_width + k] == 1.0f) {
      EXPECT_EQ(index, -1) << "more than one cheating bit set";
      index = static_cast<int>(k);
    } else {
      EXPECT_EQ(x[raw_width + k], 0.0f);
    }
  }
  return index;
}

// A small stand-in for the Fashion-MNIST splits: 784-pixel images with
// distinct pixel patterns per sample.
Dataset fake_fashion(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Dataset d(kFashionPixels);
  std::vector<float> x(kFashionPixels);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : x) v = u(rng);
    d.push_back(x, static_cast<int>(i % kClasses), 0);
  }
  return d;
}

// Chi-square statistic of observed counts against a uniform expectation.
double chi_square_uniform(const std::vector<std::size_t>& counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  const double expected = total / static_cast<double>(counts.size());
  double chi = 0.0;
  for (auto c : counts) chi += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  return chi;
}

constexpr double kChiSquare9Dof999 = 27.877164871256568;  // chi2.ppf(0.999, 9)

}  // namespace

TEST(Idx, RoundTripGzipAndPlain) {
  const fs::path dir = temp_dir("idx");
  std::vector<std::uint8_t> pixels(2 * 3 * 4), labels = {7, 255 - 250};
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<std::uint8_t>(i * 11);
  pixels[5] = 255;
  for (const char* suffix : {"", ".gz"}) {
    write_idx_images(dir / (std::string("img") + suffix), 3, 4, pixels);
    write_idx_labels(dir / (std::string("lab") + suffix), labels);
    const Dataset d = load_idx(dir / (std::string("img") + suffix), dir / (std::string("lab") + suffix));
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(d.width(), 12u);
    EXPECT_EQ(d.features(0)[5], 1.0f);
    EXPECT_FLOAT_EQ(d.features(1)[0], static_cast<float>(pixels[12]) / 255.0f);
    EXPECT_EQ(d.label(0), 7);
    EXPECT_EQ(d.domain(1), 0);
  }
}

TEST(Idx, EmptyFileGivesEmptySet) {
  const fs::path dir = temp_dir("idx_empty");
  write_idx_images(dir / "img", 28, 28, {});
  write_idx_labels(dir / "lab", {});
  const Dataset d = load_idx(dir / "img", dir / "lab");
  EXPECT_TRUE(d.empty());
}

TEST(Idx, BadMagicAndTruncationAreReported) {
  const fs::path dir = temp_dir("idx_bad");
  std::ofstream(dir / "img", std::ios::binary) << "garbage-bytes";
  write_idx_labels(dir / "lab", std::vector<std::uint8_t>{1});
  EXPECT_THROW(load_idx(dir / "img", dir / "lab"), DatasetError);
  const std::vector<std::uint8_t> pixels(4, 0);
  write_idx_images(dir / "img2", 2, 2, pixels);
  write_idx_labels(dir / "lab2", std::vector<std::uint8_t>{1, 2});  // count mismatch
  EXPECT_THROW(load_idx(dir / "img2", dir / "lab2"), DatasetError);
  EXPECT_THROW(load_idx(dir / "missing", dir / "lab"), DatasetError);
}

TEST(Flip180, Involution) {
  std::vector<float> img(kFashionPixels);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : img) v = u(rng);
  EXPECT_EQ(flip180(flip180(img)), img);
  const auto f = flip180(img);
  EXPECT_EQ(std::accumulate(f.begin(), f.end(), 0.0), std::accumulate(img.begin(), img.end(), 0.0));
}

TEST(Flip180, CornerMapsToCorner) {
  std::vector<float> img(kFashionPixels, 0.0f);
  img[0] = 1.0f;
  const auto f = flip180(img);
  EXPECT_EQ(f[27 * 28 + 27], 1.0f);
  EXPECT_EQ(std::accumulate(f.begin(), f.end(), 0.0f), 1.0f);
  EXPECT_THROW(flip180(std::vector<float>(10)), DatasetError);
}

TEST(Cheating, ShiftWraps) {
  std::mt19937_64 rng(1);
  LabeledSample s{{0.5f}, 3, 0};
  EXPECT_EQ(cheat_index(attach_cheating(s, CheatMode::shift, rng).x, 1), 4);
  s.label = 9;
  EXPECT_EQ(cheat_index(attach_cheating(s, CheatMode::shift, rng).x, 1), 0);
  EXPECT_EQ(cheat_index(attach_cheating(s, CheatMode::correct, rng).x, 1), 9);
  EXPECT_EQ(attach_cheating(s, CheatMode::correct, rng).x.size(), 11u);
}

TEST(Cheating, RandomIsUniform) {
  std::mt19937_64 rng(77);
  std::vector<std::size_t> counts(kClasses, 0);
  const std::size_t n = 100000;
  LabeledSample s{{0.0f}, 2, 1};
  for (std::size_t i = 0; i < n; ++i) ++counts[cheat_index(attach_cheating(s, CheatMode::random, rng).x, 1)];
  const double sigma = std::sqrt(n * 0.1 * 0.9);
  for (auto c : counts) EXPECT_NEAR(static_cast<double>(c), n * 0.1, 3 * sigma);
  EXPECT_LT(chi_square_uniform(counts), kChiSquare9Dof999);
}

TEST(FashionPair, Scenarios) {
  const Dataset train = fake_fashion(200, 1), test = fake_fashion(50, 2);
  const DomainPair none = make_fashion_pair(train, test, CheatScenario::none, 4);
  EXPECT_EQ(none.source_train.width(), 784u);
  EXPECT_EQ(none.target_test.width(), 784u);
  EXPECT_EQ(none.source_train.size(), 200u);
  EXPECT_EQ(none.target_test.size(), 50u);
  EXPECT_EQ(none.target_train.domain(0), 1);
  EXPECT_EQ(none.source_train.domain(0), 0);
  // Target images are the rotated source images.
  const auto rotated = flip180(none.source_train.features(7));
  EXPECT_TRUE(std::equal(rotated.begin(), rotated.end(), none.target_train.features(7).begin()));
  validate_pair(none);

  const DomainPair shift = make_fashion_pair(train, test, CheatScenario::shift, 4);
  EXPECT_EQ(shift.source_train.width(), 794u);
  for (std::size_t i = 0; i < shift.source_train.size(); ++i) {
    const int l = *shift.source_train.label(i);
    EXPECT_EQ(cheat_index(shift.source_train.features(i), 784), l);
    EXPECT_EQ(cheat_index(shift.target_train.features(i), 784), (l + 1) % 10);
  }

  const DomainPair random = make_fashion_pair(train, test, CheatScenario::random, 4);
  std::vector<std::size_t> counts(kClasses, 0);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < random.source_train.size(); ++i) {
    EXPECT_EQ(cheat_index(random.source_train.features(i), 784), *random.source_train.label(i));
    const int bit = cheat_index(random.target_train.features(i), 784);
    ++counts[bit];
    agree += bit == *random.target_train.label(i);
  }
  EXPECT_LT(agree, 60u);  // about 20 expected by chance
}

TEST(FashionPair, RealDataWhenAvailable) {
  const fs::path dir = default_data_dir() / "fashion";
  if (!fs::exists(dir / "train-images-idx3-ubyte.gz")) GTEST_SKIP() << "no Fashion-MNIST under " << dir;
  const Dataset train = load_idx(dir / "train-images-idx3-ubyte.gz", dir / "train-labels-idx1-ubyte.gz");
  EXPECT_EQ(train.size(), 60000u);
  EXPECT_EQ(train.width(), 784u);
  std::vector<std::size_t> per_class(kClasses, 0);
  for (int l : train.labels()) ++per_class[l];
  for (auto c : per_class) EXPECT_EQ(c, 6000u);
}

TEST(Cifar, PlaneChoiceFollowsBias) {
  std::mt19937_64 rng(5);
  const std::size_t n = 100000;
  for (double p : {0.0, 0.5, 1.0}) {
    std::size_t odd_blue = 0, even_red = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const ColorPlane odd = choose_source_plane(3, p, rng);
      const ColorPlane even = choose_source_plane(4, p, rng);
      EXPECT_NE(odd, ColorPlane::green);
      odd_blue += odd == ColorPlane::blue;
      even_red += even == ColorPlane::red;
    }
    const double expected = p + (1.0 - p) / 2.0;
    const double sigma = std::sqrt(n * expected * (1.0 - expected));
    EXPECT_NEAR(static_cast<double>(odd_blue), n * expected, 3 * sigma + 1e-9) << "p = " << p;
    EXPECT_NEAR(static_cast<double>(even_red), n * expected, 3 * sigma + 1e-9) << "p = " << p;
  }
}

TEST(Cifar, BinaryRecordsAndBiasPair) {
  const fs::path dir = temp_dir("cifar");
  std::vector<std::uint8_t> bytes;
  for (int r = 0; r < 20; ++r) {
    bytes.push_back(static_cast<std::uint8_t>(r % 10));
    for (std::size_t i = 0; i < kCifarPixels; ++i) bytes.push_back(static_cast<std::uint8_t>(1 + (i + r) % 200));
  }
  std::ofstream(dir / "batch.bin", std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                                          static_cast<std::streamsize>(bytes.size()));
  const fs::path paths[] = {dir / "batch.bin"};
  const Dataset d = load_cifar_batches(paths);
  ASSERT_EQ(d.size(), 20u);
  EXPECT_EQ(d.label(13), 3);

  const DomainPair pair = make_cifar_bias_pair(d, d, 1.0, 9);
  for (std::size_t i = 0; i < pair.source_train.size(); ++i) {
    const auto x = pair.source_train.features(i);
    const bool odd = *pair.source_train.label(i) % 2 == 1;
    const std::size_t kept = odd ? 2 : 0;
    for (std::size_t plane = 0; plane < 3; ++plane) {
      const float sum = std::accumulate(x.begin() + plane * kCifarPlane, x.begin() + (plane + 1) * kCifarPlane, 0.0f);
      if (plane == kept) EXPECT_GT(sum, 0.0f);
      else EXPECT_EQ(sum, 0.0f);
    }
    const auto t = pair.target_train.features(i);
    EXPECT_EQ(std::accumulate(t.begin(), t.begin() + kCifarPlane, 0.0f), 0.0f);
    EXPECT_EQ(std::accumulate(t.begin() + 2 * kCifarPlane, t.end(), 0.0f), 0.0f);
    EXPECT_EQ(pair.target_train.domain(i), 1);
  }
  EXPECT_THROW(make_cifar_bias_pair(d, d, 1.5, 9), std::invalid_argument);
}

TEST(Blobs, ReproducibleAndSeparable) {
  const DomainPair a = synthetic_blobs(50, 4, CheatScenario::none, 3);
  const DomainPair b = synthetic_blobs(50, 4, CheatScenario::none, 3);
  EXPECT_EQ(a.source_train.feature_data(), b.source_train.feature_data());
  EXPECT_EQ(a.source_train.width(), 2u);
  EXPECT_EQ(a.source_train.size(), 200u);
  validate_pair(a);
  // Target clusters are the source clusters rotated about the origin.
  std::vector<std::array<double, 2>> source_mean(4), target_mean(4);
  for (std::size_t i = 0; i < 200; ++i) {
    const auto k = static_cast<std::size_t>(*a.source_train.label(i));
    for (std::size_t d = 0; d < 2; ++d) {
      source_mean[k][d] += a.source_train.features(i)[d] / 50.0;
      target_mean[static_cast<std::size_t>(*a.target_train.label(i))][d] += a.target_train.features(i)[d] / 50.0;
    }
  }
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(target_mean[k][0], -source_mean[k][0], 0.2);
    EXPECT_NEAR(target_mean[k][1], -source_mean[k][1], 0.2);
    EXPECT_GT(std::hypot(source_mean[k][0], source_mean[k][1]), 1.0);
  }
  const DomainPair c = synthetic_blobs(50, 4, CheatScenario::shift, 3);
  EXPECT_EQ(c.source_train.width(), 12u);
  for (std::size_t i = 0; i < c.source_train.size(); ++i) {
    EXPECT_EQ(cheat_index(c.source_train.features(i), 2), *c.source_train.label(i));
  }
}

TEST(BatchStream, EpochCoversEverySampleOnce) {
  BatchStream s(10, 4, 7);
  std::multiset<std::size_t> seen;
  for (int i = 0; i < 3; ++i) {
    for (auto idx : s.next()) seen.insert(idx);
  }
  // 12 draws: one full epoch plus two from the next.
  for (std::size_t i = 0; i < 10; ++i) EXPECT_GE(seen.count(i), 1u);
  BatchStream t(10, 4, 7), u(10, 4, 7);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(t.next(), u.next());
  BatchStream whole(6, 6, 1);
  auto first = whole.next();
  std::sort(first.begin(), first.end());
  EXPECT_EQ(first, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(whole.epoch(), 0u);
  whole.next();
  EXPECT_EQ(whole.epoch(), 1u);
}

TEST(DomainPairFile, RoundTrip) {
  const fs::path dir = temp_dir("pair");
  const DomainPair p = synthetic_blobs(20, 3, CheatScenario::random, 5);
  export_domain_pair(p, dir / "pair.bin");
  const DomainPair q = import_domain_pair(dir / "pair.bin");
  EXPECT_EQ(q.source_test.feature_data(), p.source_test.feature_data());
  EXPECT_EQ(q.target_train.labels(), p.target_train.labels());
  EXPECT_EQ(q.target_train.domains(), p.target_train.domains());
  EXPECT_EQ(q.descriptor.dataset, "blobs");
  EXPECT_EQ(q.descriptor.scenario, CheatScenario::random);
}

TEST(ValidatePair, RejectsWrongDomainBits) {
  DomainPair p = synthetic_blobs(5, 2, CheatScenario::none, 1);
  p.target_test.push_back(std::vector<float>{0.0f, 0.0f}, 1, 0);
  EXPECT_THROW(validate_pair(p), DatasetError);
}
