#include "direp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace direp {

namespace {

constexpr char kMagic[8] = {'D', 'I', 'R', 'E', 'P', 'C', 'K', 'P'};

template <typename Real>
constexpr const char* dtype_name() {
  return sizeof(Real) == 4 ? "float32" : "float64";
}

template <typename Stored, typename Real>
std::vector<Real> read_values(std::ifstream& in, std::size_t count, const std::filesystem::path& path) {
  std::vector<Stored> raw(count);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count * sizeof(Stored)));
  if (!in) throw CheckpointError(path.string() + ": truncated tensor payload");
  return std::vector<Real>(raw.begin(), raw.end());
}

}  // namespace

template <typename Real>
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor<Real>>& tensors,
                     std::uint64_t seed, const std::string& meta) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  nlohmann::json header;
  header["format"] = "direp-checkpoint";
  header["version"] = 1;
  header["dtype"] = dtype_name<Real>();
  header["seed"] = seed;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  for (const auto& t : tensors) {
    header["tensors"].push_back({{"name", t.name}, {"shape", t.tensor.shape()}});
  }
  const std::string text = header.dump();
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    const std::uint64_t length = text.size();
    out.write(reinterpret_cast<const char*>(&length), sizeof length);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : tensors) {
      const auto& v = t.tensor.data();
      out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(Real)));
    }
    if (!out) throw CheckpointError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename Real>
const Tensor<Real>& Checkpoint<Real>::at(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw CheckpointError("checkpoint has no tensor named '" + name + "'");
}

template <typename Real>
Checkpoint<Real> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw CheckpointError(path.string() + ": not a checkpoint file");
  }
  std::uint64_t length = 0;
  in.read(reinterpret_cast<char*>(&length), sizeof length);
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw CheckpointError(path.string() + ": truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": malformed header: " + e.what());
  }
  const std::string dtype = header.at("dtype").get<std::string>();
  if (dtype != "float32" && dtype != "float64") {
    throw CheckpointError(path.string() + ": unsupported dtype " + dtype);
  }

  Checkpoint<Real> ckpt;
  ckpt.seed = header.at("seed").get<std::uint64_t>();
  ckpt.meta = header.at("meta").get<std::string>();
  for (const auto& entry : header.at("tensors")) {
    Shape shape = entry.at("shape").get<Shape>();
    const std::size_t count = element_count(shape);
    std::vector<Real> values = dtype == "float32" ? read_values<float, Real>(in, count, path)
                                                  : read_values<double, Real>(in, count, path);
    ckpt.tensors.push_back({entry.at("name").get<std::string>(),
                            Tensor<Real>::from(std::move(shape), std::move(values))});
  }
  return ckpt;
}

#define DIREP_INSTANTIATE_CHECKPOINT(Real)                                                        \
  template void save_checkpoint<Real>(const std::filesystem::path&,                               \
                                      const std::vector<NamedTensor<Real>>&, std::uint64_t,       \
                                      const std::string&);                                        \
  template struct Checkpoint<Real>;                                                               \
  template Checkpoint<Real> load_checkpoint<Real>(const std::filesystem::path&);

DIREP_INSTANTIATE_CHECKPOINT(float)
DIREP_INSTANTIATE_CHECKPOINT(double)

}  // namespace direp
