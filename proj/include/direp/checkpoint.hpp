#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "direp/tensor.hpp"

namespace direp {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Real>
struct NamedTensor {
  std::string name;
  Tensor<Real> tensor;
};

/// File layout: "DIREPCKP", u64 little-endian header length, a JSON header
/// {"dtype", "seed", "meta", "tensors": [{"name", "shape"}...]}, then every
/// tensor's values in header order. `meta` is free-form text.
template <typename Real>
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor<Real>>& tensors,
                     std::uint64_t seed, const std::string& meta);

template <typename Real>
struct Checkpoint {
  std::uint64_t seed = 0;
  std::string meta;
  std::vector<NamedTensor<Real>> tensors;

  /// Throws CheckpointError when `name` is absent.
  const Tensor<Real>& at(const std::string& name) const;
};

/// Values stored at the other precision are converted.
template <typename Real>
Checkpoint<Real> load_checkpoint(const std::filesystem::path& path);

}  // namespace direp
