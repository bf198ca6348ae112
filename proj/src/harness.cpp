#include "direp/harness.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace direp {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- config

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string bad_value(std::string_view key, std::string_view value, const char* expected) {
  return "bad value '" + std::string(value) + "' for " + std::string(key) + " (expected " + expected + ")";
}

std::size_t to_size(std::string_view key, std::string_view value) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError(bad_value(key, value, "a non-negative integer"));
  }
  return out;
}

double to_double(std::string_view key, std::string_view value) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError(bad_value(key, value, "a number"));
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(bad_value(key, value, "true|false"));
}

Role parse_role(std::string_view text) {
  if (text == "G") return Role::generator;
  if (text == "E") return Role::encoder;
  if (text == "F") return Role::decoder;
  if (text == "C") return Role::classifier;
  if (text == "D") return Role::discriminator;
  if (text == "Ps") return Role::private_source;
  if (text == "Pt") return Role::private_target;
  throw ConfigError("unknown network '" + std::string(text) + "' (expected G|E|F|C|D|Ps|Pt)");
}

using Setter = void (*)(ExperimentConfig&, std::string_view, std::string_view);

struct KeyEntry {
  const char* key;
  Setter set;
};

#define DIREP_SIZE_KEY(name, field) \
  {name, [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.field = to_size(k, v); }}
#define DIREP_DOUBLE_KEY(name, field) \
  {name, [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.field = to_double(k, v); }}

const KeyEntry kKeys[] = {
    {"algo", [](ExperimentConfig& c, std::string_view, std::string_view v) {
       c.train.algorithm = parse_algorithm(v);
     }},
    {"ablation", [](ExperimentConfig& c, std::string_view, std::string_view v) {
       c.train.ablation = parse_ablation(v);
     }},
    {"cheating", [](ExperimentConfig& c, std::string_view k, std::string_view v) {
       try {
         c.cheating = parse_scenario(v);
       } catch (const std::invalid_argument&) {
         throw ConfigError(bad_value(k, v, "none|shift|random"));
       }
     }},
    {"dataset", [](ExperimentConfig& c, std::string_view k, std::string_view v) {
       if (v != "fm" && v != "cifar" && v != "blobs") throw ConfigError(bad_value(k, v, "fm|cifar|blobs"));
       c.dataset = std::string(v);
     }},
    DIREP_DOUBLE_KEY("bias", bias),
    DIREP_SIZE_KEY("semi", train.semi_labels_per_class),
    DIREP_SIZE_KEY("seeds", seeds),
    {"seed", [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.train.seed = to_size(k, v); }},
    DIREP_SIZE_KEY("iters", train.iterations),
    DIREP_SIZE_KEY("batch", train.batch_size),
    DIREP_SIZE_KEY("cadence", train.cadence),
    DIREP_SIZE_KEY("eval_samples", train.eval_samples),
    DIREP_SIZE_KEY("jobs", jobs),
    DIREP_SIZE_KEY("blobs_per_class", blobs_per_class),
    DIREP_SIZE_KEY("blobs_classes", blobs_classes),
    DIREP_DOUBLE_KEY("beta", train.weights.beta),
    DIREP_DOUBLE_KEY("gamma", train.weights.gamma),
    DIREP_DOUBLE_KEY("mu", train.weights.mu),
    DIREP_DOUBLE_KEY("lambda_tau", train.weights.lambda_tau),
    {"lr", [](ExperimentConfig& c, std::string_view k, std::string_view v) {
       const double lr = to_double(k, v);
       auto& w = c.train.weights;
       w.lr_generator = w.lr_classifier = w.lr_discriminator = w.lr_encoder = w.lr_decoder = lr;
     }},
    DIREP_DOUBLE_KEY("lr_generator", train.weights.lr_generator),
    DIREP_DOUBLE_KEY("lr_classifier", train.weights.lr_classifier),
    DIREP_DOUBLE_KEY("lr_discriminator", train.weights.lr_discriminator),
    DIREP_DOUBLE_KEY("lr_encoder", train.weights.lr_encoder),
    DIREP_DOUBLE_KEY("lr_decoder", train.weights.lr_decoder),
    DIREP_DOUBLE_KEY("dsn_reconstruction", train.weights.dsn_reconstruction),
    DIREP_DOUBLE_KEY("dsn_difference", train.weights.dsn_difference),
    DIREP_DOUBLE_KEY("reverse_kl", train.weights.reverse_kl),
    DIREP_DOUBLE_KEY("reverse_difference", train.weights.reverse_difference),
    {"explicit_with_encoder", [](ExperimentConfig& c, std::string_view k, std::string_view v) {
       c.train.explicit_with_encoder = to_bool(k, v);
     }},
    {"precision", [](ExperimentConfig& c, std::string_view k, std::string_view v) {
       if (v == "float32" || v == "float") c.train.precision = Precision::float32;
       else if (v == "float64" || v == "double") c.train.precision = Precision::float64;
       else throw ConfigError(bad_value(k, v, "float32|float64"));
     }},
    {"frozen", [](ExperimentConfig& c, std::string_view, std::string_view v) {
       c.train.frozen.clear();
       while (!v.empty()) {
         const auto comma = v.find(',');
         const auto item = trim(v.substr(0, comma));
         if (!item.empty()) c.train.frozen.push_back(parse_role(item));
         v = comma == std::string_view::npos ? std::string_view{} : v.substr(comma + 1);
       }
     }},
    DIREP_SIZE_KEY("generator_hidden_width", train.architecture.generator_hidden_width),
    DIREP_SIZE_KEY("generator_hidden_layers", train.architecture.generator_hidden_layers),
    DIREP_SIZE_KEY("direp_width", train.architecture.direp_width),
    DIREP_SIZE_KEY("wide_width", train.architecture.wide_width),
    DIREP_SIZE_KEY("classifier_hidden_layers", train.architecture.classifier_hidden_layers),
    DIREP_SIZE_KEY("discriminator_hidden_layers", train.architecture.discriminator_hidden_layers),
    DIREP_SIZE_KEY("decoder_hidden_layers", train.architecture.decoder_hidden_layers),
    DIREP_SIZE_KEY("encoder_hidden_layers", train.architecture.encoder_hidden_layers),
    DIREP_SIZE_KEY("ddrep_width", train.architecture.ddrep_width),
    {"save_models", [](ExperimentConfig& c, std::string_view k, std::string_view v) {
       c.save_models = to_bool(k, v);
     }},
    {"data_dir", [](ExperimentConfig& c, std::string_view, std::string_view v) { c.data_dir = std::string(v); }},
    {"out", [](ExperimentConfig& c, std::string_view, std::string_view v) { c.out_dir = std::string(v); }},
};

#undef DIREP_SIZE_KEY
#undef DIREP_DOUBLE_KEY

std::string role_code(Role role) { return std::string(role_name(role)); }

std::string number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void set_config_value(ExperimentConfig& config, std::string_view key, std::string_view value) {
  for (const auto& entry : kKeys) {
    if (key == entry.key) {
      entry.set(config, key, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& entry : kKeys) out.emplace_back(entry.key);
  return out;
}

ExperimentConfig parse_config(std::string_view text, ExperimentConfig base) {
  std::vector<std::string> errors;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      errors.push_back("line " + std::to_string(line_no) + ": expected 'key = value'");
      continue;
    }
    try {
      set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::exception& e) {
      errors.push_back("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!errors.empty()) {
    std::string message = "invalid configuration:";
    for (const auto& e : errors) message += "\n  - " + e;
    throw ConfigError(message);
  }
  return base;
}

ExperimentConfig read_config_file(const fs::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::vector<std::string> config_problems(const ExperimentConfig& config) {
  std::vector<std::string> out = config.train.problems();
  if (config.train.iterations == 0) out.push_back("iters must be positive");
  if (config.seeds == 0) out.push_back("seeds must be at least 1");
  if (config.jobs == 0) out.push_back("jobs must be at least 1");
  if (!(config.bias >= 0.0 && config.bias <= 1.0)) out.push_back("bias must lie in [0, 1]");
  if (config.dataset != "fm" && config.dataset != "cifar" && config.dataset != "blobs") {
    out.push_back("dataset must be fm, cifar or blobs");
  }
  if (config.dataset == "cifar" && config.cheating != CheatScenario::none) {
    out.push_back("cheating bits apply to fm and blobs only");
  }
  if (config.dataset == "blobs") {
    if (config.blobs_per_class == 0) out.push_back("blobs_per_class must be positive");
    if (config.blobs_classes < 2 || config.blobs_classes > kClasses) {
      out.push_back("blobs_classes must lie in [2, 10]");
    }
  }
  if (config.save_models && config.out_dir.empty()) out.push_back("save_models needs an output directory");
  return out;
}

void validate_config(const ExperimentConfig& config) {
  const auto list = config_problems(config);
  if (list.empty()) return;
  std::string message = "invalid configuration:";
  for (const auto& p : list) message += "\n  - " + p;
  throw ConfigError(message);
}

std::string format_config(const ExperimentConfig& c) {
  const auto& t = c.train;
  const auto& w = t.weights;
  const auto& a = t.architecture;
  std::ostringstream out;
  out << "algo = " << algorithm_name(t.algorithm) << "\n"
      << "ablation = " << ablation_name(t.ablation) << "\n"
      << "dataset = " << c.dataset << "\n"
      << "cheating = " << scenario_name(c.cheating) << "\n";
  if (c.dataset == "cifar") out << "bias = " << number(c.bias) << "\n";
  if (c.dataset == "blobs") {
    out << "blobs_per_class = " << c.blobs_per_class << "\n"
        << "blobs_classes = " << c.blobs_classes << "\n";
  }
  out << "semi = " << t.semi_labels_per_class << "\n"
      << "iters = " << t.iterations << "\n"
      << "batch = " << t.batch_size << "\n"
      << "cadence = " << t.cadence << "\n"
      << "eval_samples = " << t.eval_samples << "\n"
      << "precision = " << (t.precision == Precision::float32 ? "float32" : "float64") << "\n"
      << "explicit_with_encoder = " << (t.explicit_with_encoder ? "true" : "false") << "\n"
      << "beta = " << number(w.beta) << "\n"
      << "gamma = " << number(w.gamma) << "\n"
      << "mu = " << number(w.mu) << "\n"
      << "lambda_tau = " << number(w.lambda_tau) << "\n"
      << "lr_generator = " << number(w.lr_generator) << "\n"
      << "lr_classifier = " << number(w.lr_classifier) << "\n"
      << "lr_discriminator = " << number(w.lr_discriminator) << "\n"
      << "lr_encoder = " << number(w.lr_encoder) << "\n"
      << "lr_decoder = " << number(w.lr_decoder) << "\n"
      << "dsn_reconstruction = " << number(w.dsn_reconstruction) << "\n"
      << "dsn_difference = " << number(w.dsn_difference) << "\n"
      << "reverse_kl = " << number(w.reverse_kl) << "\n"
      << "reverse_difference = " << number(w.reverse_difference) << "\n"
      << "generator_hidden_width = " << a.generator_hidden_width << "\n"
      << "generator_hidden_layers = " << a.generator_hidden_layers << "\n"
      << "direp_width = " << a.direp_width << "\n"
      << "wide_width = " << a.wide_width << "\n"
      << "classifier_hidden_layers = " << a.classifier_hidden_layers << "\n"
      << "discriminator_hidden_layers = " << a.discriminator_hidden_layers << "\n"
      << "decoder_hidden_layers = " << a.decoder_hidden_layers << "\n"
      << "encoder_hidden_layers = " << a.encoder_hidden_layers << "\n"
      << "ddrep_width = " << a.ddrep_width << "\n";
  out << "frozen = ";
  for (std::size_t i = 0; i < t.frozen.size(); ++i) out << (i ? "," : "") << role_code(t.frozen[i]);
  out << "\n";
  return out.str();
}

std::string config_fingerprint(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : format_config(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string algorithm_label(const TrainConfig& config) {
  std::string label(algorithm_name(config.algorithm));
  if (config.ablation != Ablation::none) label += "+" + std::string(ablation_name(config.ablation));
  return label;
}

// ---------------------------------------------------------------- runs

namespace {

struct FashionSplits {
  Dataset train;
  Dataset test;
};

fs::path data_root(const ExperimentConfig& config) {
  return config.data_dir.empty() ? default_data_dir() : config.data_dir;
}

FashionSplits load_fashion(const fs::path& root) {
  const fs::path dir = root / "fashion";
  auto pick = [&](const char* name) {
    const fs::path gz = dir / (std::string(name) + ".gz");
    if (fs::exists(gz)) return gz;
    if (fs::exists(dir / name)) return dir / name;
    throw DatasetError("missing dataset file " + gz.string() +
                       " (set DIREP_DATA_DIR or run tools/fetch_fashion_mnist.py)");
  };
  return {load_idx(pick("train-images-idx3-ubyte"), pick("train-labels-idx1-ubyte")),
          load_idx(pick("t10k-images-idx3-ubyte"), pick("t10k-labels-idx1-ubyte"))};
}

DomainPair pair_for(const ExperimentConfig& config, std::uint64_t seed, const FashionSplits* fashion) {
  if (config.dataset == "fm") {
    if (fashion) return make_fashion_pair(fashion->train, fashion->test, config.cheating, seed);
    return build_fashion_pair(config.cheating, seed, data_root(config));
  }
  if (config.dataset == "cifar") return cifar_bias_pair(config.bias, seed, data_root(config));
  return synthetic_blobs(config.blobs_per_class, config.blobs_classes, config.cheating, seed);
}

template <typename Real>
RunResult run_at(const ExperimentConfig& config, const DomainPair& pair, std::uint64_t seed) {
  TrainConfig train_config = config.train;
  train_config.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  auto trained = train<Real>(train_config, pair);
  RunResult result;
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.fingerprint = config_fingerprint(config);
  result.algo = algorithm_label(config.train);
  result.cheating_mode = std::string(scenario_name(config.cheating));
  result.bias = config.dataset == "cifar" ? config.bias : 0.0;
  result.seed = seed;
  result.source_acc = trained.source_acc;
  result.target_acc = trained.target_acc;
  result.history = std::move(trained.history);
  if (trained.models.encoder && !pair.source_test.empty() && !pair.target_test.empty()) {
    const double ns = static_cast<double>(pair.source_test.size());
    const double nt = static_cast<double>(pair.target_test.size());
    result.ddrep_bits = (ddrep_information_bits(*trained.models.encoder, pair.source_test) * ns +
                         ddrep_information_bits(*trained.models.encoder, pair.target_test) * nt) /
                        (ns + nt);
  }
  if (config.save_models) {
    save_models(trained.models, config.out_dir / ("model_seed" + std::to_string(seed) + ".ckpt"), seed,
                format_config(config) + "seed = " + std::to_string(seed) + "\n");
  }
  return result;
}

void append_line(const fs::path& path, const std::string& text) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw std::runtime_error("cannot open " + path.string() + " for appending");
  std::size_t done = 0;
  while (done < text.size()) {
    const ssize_t n = ::write(fd, text.data() + done, text.size() - done);
    if (n < 0) {
      ::close(fd);
      throw std::runtime_error("write failed: " + path.string());
    }
    done += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
}

std::string run_log_line(const RunResult& r) {
  nlohmann::json j = {{"algo", r.algo},           {"cheating_mode", r.cheating_mode},
                      {"bias", r.bias},           {"seed", r.seed},
                      {"source_acc", r.source_acc}, {"target_acc", r.target_acc},
                      {"seconds", r.seconds},     {"fingerprint", r.fingerprint}};
  j["ddrep_bits"] = std::isnan(r.ddrep_bits) ? nlohmann::json(nullptr) : nlohmann::json(r.ddrep_bits);
  return j.dump() + "\n";
}

}  // namespace

DomainPair build_pair(const ExperimentConfig& config, std::uint64_t seed) {
  return pair_for(config, seed, nullptr);
}

RunResult run_single(const ExperimentConfig& config, const DomainPair& pair, std::uint64_t seed) {
  if (config.train.precision == Precision::float64) return run_at<double>(config, pair, seed);
  return run_at<float>(config, pair, seed);
}

std::vector<RunResult> run_experiment(const ExperimentConfig& config, const RunLogFn& log) {
  validate_config(config);
  const bool persist = !config.out_dir.empty();
  const fs::path csv = config.out_dir / "metrics.csv";
  const fs::path runs_log = config.out_dir / "runs.jsonl";
  std::set<std::uint64_t> done;
  if (persist) {
    fs::create_directories(config.out_dir);
    const fs::path config_path = config.out_dir / "config.txt";
    if (fs::exists(config_path)) {
      const auto stored = read_config_file(config_path);
      if (config_fingerprint(stored) != config_fingerprint(config)) {
        throw ConfigError(config.out_dir.string() +
                          " holds results of a different configuration; use a new --out directory");
      }
    } else {
      std::ofstream(config_path) << format_config(config);
    }
    for (const auto& r : read_metrics_csv(csv)) done.insert(r.seed);
  }

  std::vector<std::uint64_t> pending;
  for (std::size_t i = 0; i < config.seeds; ++i) {
    const std::uint64_t seed = config.train.seed + i;
    if (!done.count(seed)) pending.push_back(seed);
    else if (log) log("seed " + std::to_string(seed) + " already complete, skipping");
  }

  std::optional<FashionSplits> fashion;
  if (config.dataset == "fm" && !pending.empty()) fashion = load_fashion(data_root(config));

  std::vector<RunResult> fresh(pending.size());
  std::atomic<std::size_t> next{0};
  std::mutex io;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t k = next++; k < pending.size(); k = next++) {
      try {
        const std::uint64_t seed = pending[k];
        const DomainPair pair = pair_for(config, seed, fashion ? &*fashion : nullptr);
        RunResult r = run_single(config, pair, seed);
        std::lock_guard lock(io);
        if (persist) {
          append_metrics_csv(r, csv);
          append_line(runs_log, run_log_line(r));
        }
        if (log) {
          char buf[160];
          std::snprintf(buf, sizeof buf, "%s %s seed %llu: source %.4f target %.4f (%.0f s)", r.algo.c_str(),
                        r.cheating_mode.c_str(), static_cast<unsigned long long>(seed), r.source_acc,
                        r.target_acc, r.seconds);
          log(buf);
        }
        fresh[k] = std::move(r);
      } catch (...) {
        std::lock_guard lock(io);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(config.jobs, pending.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  if (!persist) return fresh;
  std::vector<RunResult> all;
  for (auto& r : read_results(config.out_dir)) {
    if (r.seed >= config.train.seed && r.seed < config.train.seed + config.seeds) all.push_back(std::move(r));
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.seed < b.seed; });
  return all;
}

// ---------------------------------------------------------------- CSV

namespace {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string csv_number(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void append_row(std::string& out, const RunResult& r, const std::string& iteration, const StepReport* s,
                double source_acc, double target_acc) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out += csv_field(r.algo) + "," + csv_field(r.cheating_mode) + "," + csv_number(r.bias) + "," +
         std::to_string(r.seed) + "," + iteration + "," + csv_number(s ? s->loss_c : nan) + "," +
         csv_number(s ? s->loss_d : nan) + "," + csv_number(s ? s->loss_g : nan) + "," +
         csv_number(s ? s->loss_r : nan) + "," + csv_number(s ? s->loss_kl : nan) + "," +
         csv_number(s ? s->lambda : nan) + "," + csv_number(source_acc) + "," + csv_number(target_acc) +
         "\r\n";
}

std::string run_rows(const RunResult& r) {
  std::string out;
  for (const auto& s : r.history) append_row(out, r, std::to_string(s.iteration), &s, s.source_acc, s.target_acc);
  append_row(out, r, "final", r.history.empty() ? nullptr : &r.history.back(), r.source_acc, r.target_acc);
  return out;
}

/// Splits one RFC-4180 record; returns false for a malformed line.
bool parse_record(std::string_view line, std::vector<std::string>& fields) {
  fields.clear();
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (quoted) return false;
  fields.push_back(std::move(cur));
  return true;
}

double parse_number(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw std::runtime_error("bad number '" + s + "'");
  return v;
}

}  // namespace

void write_metrics_csv(const std::vector<RunResult>& results, const fs::path& path) {
  std::string text = std::string(kMetricsHeader) + "\r\n";
  for (const auto& r : results) text += run_rows(r);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void append_metrics_csv(const RunResult& result, const fs::path& path) {
  std::string text;
  if (!fs::exists(path) || fs::file_size(path) == 0) text = std::string(kMetricsHeader) + "\r\n";
  text += run_rows(result);
  append_line(path, text);
}

std::vector<RunResult> read_metrics_csv(const fs::path& path) {
  std::vector<RunResult> out;
  if (!fs::exists(path)) return out;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  // A crash mid-append can leave a partial last line; drop it.
  if (const auto last_nl = content.rfind('\n'); last_nl == std::string::npos) {
    return out;
  } else {
    content.resize(last_nl + 1);
  }

  std::map<std::uint64_t, RunResult> pending;
  std::vector<std::string> fields;
  std::istringstream lines(content);
  std::string line;
  bool header = true;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (header) {
      if (line != kMetricsHeader) throw std::runtime_error(path.string() + ": unexpected header");
      header = false;
      continue;
    }
    if (line.empty()) continue;
    if (!parse_record(line, fields) || fields.size() != 13) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed row");
    }
    try {
      const std::uint64_t seed = std::stoull(fields[3]);
      auto& r = pending[seed];
      StepReport s;
      s.loss_c = parse_number(fields[5]);
      s.loss_d = parse_number(fields[6]);
      s.loss_g = parse_number(fields[7]);
      s.loss_r = parse_number(fields[8]);
      s.loss_kl = parse_number(fields[9]);
      s.lambda = parse_number(fields[10]);
      s.source_acc = parse_number(fields[11]);
      s.target_acc = parse_number(fields[12]);
      if (fields[4] == "final") {
        r.algo = fields[0];
        r.cheating_mode = fields[1];
        r.bias = parse_number(fields[2]);
        r.seed = seed;
        r.source_acc = s.source_acc;
        r.target_acc = s.target_acc;
        auto existing = std::find_if(out.begin(), out.end(), [&](const RunResult& o) {
          return o.seed == seed && o.algo == r.algo && o.cheating_mode == r.cheating_mode;
        });
        if (existing != out.end()) *existing = std::move(r);
        else out.push_back(std::move(r));
        pending.erase(seed);
      } else {
        s.iteration = std::stoull(fields[4]);
        // An iteration that does not advance starts a new block (a re-run
        // after an interrupted one).
        if (!r.history.empty() && s.iteration <= r.history.back().iteration) r.history.clear();
        r.history.push_back(s);
      }
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<RunResult> read_results(const fs::path& dir) {
  auto results = read_metrics_csv(dir / "metrics.csv");
  std::ifstream in(dir / "runs.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      continue;  // partial last line after a crash
    }
    const auto seed = j.at("seed").get<std::uint64_t>();
    for (auto& r : results) {
      if (r.seed != seed) continue;
      r.seconds = j.at("seconds").get<double>();
      r.fingerprint = j.value("fingerprint", "");
      if (!j.at("ddrep_bits").is_null()) r.ddrep_bits = j.at("ddrep_bits").get<double>();
    }
  }
  return results;
}

// ---------------------------------------------------------------- z-score

double z_score(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("z_score needs at least two runs per side");
  auto mean = [](std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  auto variance = [](std::span<const double> v, double m) {
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return ss / static_cast<double>(v.size() - 1);
  };
  const double ma = mean(a), mb = mean(b);
  const double se2 = variance(a, ma) / static_cast<double>(a.size()) +
                     variance(b, mb) / static_cast<double>(b.size());
  if (se2 == 0.0) {
    if (ma == mb) return 0.0;
    return ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  }
  return (ma - mb) / std::sqrt(se2);
}

ComparisonReport compare(std::string condition_a, std::span<const double> accs_a, std::string condition_b,
                         std::span<const double> accs_b) {
  ComparisonReport r;
  r.condition_a = std::move(condition_a);
  r.condition_b = std::move(condition_b);
  r.accs_a.assign(accs_a.begin(), accs_a.end());
  r.accs_b.assign(accs_b.begin(), accs_b.end());
  r.mean_a = std::accumulate(accs_a.begin(), accs_a.end(), 0.0) / static_cast<double>(accs_a.size());
  r.mean_b = std::accumulate(accs_b.begin(), accs_b.end(), 0.0) / static_cast<double>(accs_b.size());
  r.z = z_score(accs_a, accs_b);
  r.exact = std::isinf(r.z);
  r.a_better = r.z >= kZThreshold;
  return r;
}

ComparisonReport compare_dirs(const fs::path& a, const fs::path& b) {
  auto finals = [](const fs::path& dir) {
    std::vector<double> accs;
    for (const auto& r : read_metrics_csv(dir / "metrics.csv")) accs.push_back(r.target_acc);
    return accs;
  };
  const auto accs_a = finals(a);
  const auto accs_b = finals(b);
  return compare(a.string(), accs_a, b.string(), accs_b);
}

std::string format_report(const ComparisonReport& r) {
  std::ostringstream out;
  auto list = [&](const std::vector<double>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << std::fixed << std::setprecision(4) << v[i];
  };
  out << "A: " << r.condition_a << "\n   accs ";
  list(r.accs_a);
  out << "\n   mean " << std::setprecision(4) << r.mean_a << "\n";
  out << "B: " << r.condition_b << "\n   accs ";
  list(r.accs_b);
  out << "\n   mean " << std::setprecision(4) << r.mean_b << "\n";
  if (r.exact) out << "z = " << (r.z > 0 ? "+inf" : "-inf") << " (exact)\n";
  else out << "z = " << std::setprecision(3) << r.z << "\n";
  out << "verdict: " << (r.a_better ? "A better at z >= 2.33" : "no significant advantage for A") << "\n";
  return out.str();
}

// ---------------------------------------------------------------- images

void write_pgm(const fs::path& path, std::size_t rows, std::size_t cols, std::span<const float> pixels) {
  if (pixels.size() != rows * cols) {
    throw std::invalid_argument("write_pgm: " + std::to_string(pixels.size()) + " values for a " +
                                std::to_string(rows) + "x" + std::to_string(cols) + " image");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5 " << cols << " " << rows << " 255\n";
  std::vector<unsigned char> bytes(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround(255.0 * std::clamp(static_cast<double>(pixels[i]), 0.0, 1.0)));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

namespace {

template <typename Real>
ReconstructionSummary reconstruct(const ModelSet<Real>& models, const Dataset& samples,
                                  const PairDescriptor& descriptor, const fs::path* out_dir, std::size_t count) {
  const std::size_t rows = descriptor.image_rows, cols = descriptor.image_cols;
  const std::size_t pixels = rows * cols;
  if (pixels == 0 || samples.width() < pixels) {
    throw std::invalid_argument("dump_reconstructions needs image-shaped samples");
  }
  const std::size_t n = std::min(count, samples.size());
  ReconstructionSummary summary;
  summary.samples = n;
  if (n == 0) return summary;
  const std::size_t w = samples.width();
  std::vector<Real> values;
  std::vector<int> domains;
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = samples.features(i);
    values.insert(values.end(), x.begin(), x.end());
    domains.push_back(samples.domain(i));
  }
  const auto x = Tensor<Real>::from({n, w}, std::move(values));
  const auto recon = flip_bit_reconstruct(models, x, domains, false);
  const auto flipped = flip_bit_reconstruct(models, x, domains, true);
  std::size_t differs = 0, closer = 0;
  if (out_dir) fs::create_directories(*out_dir);
  for (std::size_t i = 0; i < n; ++i) {
    const auto orig = samples.features(i).subspan(0, pixels);
    std::vector<float> r(pixels), f(pixels);
    for (std::size_t p = 0; p < pixels; ++p) {
      r[p] = static_cast<float>(recon.data()[i * w + p]);
      f[p] = static_cast<float>(flipped.data()[i * w + p]);
    }
    const auto row_r = std::span<const Real>(recon.data()).subspan(i * w, w);
    const auto row_f = std::span<const Real>(flipped.data()).subspan(i * w, w);
    if (!std::equal(row_r.begin(), row_r.end(), row_f.begin())) ++differs;
    const auto rotated = flip180(orig, rows, cols);
    double to_rotated = 0.0, to_original = 0.0;
    for (std::size_t p = 0; p < pixels; ++p) {
      to_rotated += (f[p] - rotated[p]) * (f[p] - rotated[p]);
      to_original += (f[p] - orig[p]) * (f[p] - orig[p]);
    }
    if (to_rotated < to_original) ++closer;
    if (out_dir) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "%04zu", i);
      write_pgm(*out_dir / (std::string(stem) + "_original.pgm"), rows, cols, orig);
      write_pgm(*out_dir / (std::string(stem) + "_recon.pgm"), rows, cols, r);
      write_pgm(*out_dir / (std::string(stem) + "_flipped.pgm"), rows, cols, f);
    }
  }
  summary.flipped_differs = static_cast<double>(differs) / static_cast<double>(n);
  summary.closer_to_rotated = static_cast<double>(closer) / static_cast<double>(n);
  return summary;
}

}  // namespace

template <typename Real>
ReconstructionSummary dump_reconstructions(const ModelSet<Real>& models, const Dataset& samples,
                                           const PairDescriptor& descriptor, const fs::path& out_dir,
                                           std::size_t count) {
  return reconstruct(models, samples, descriptor, &out_dir, count);
}

template <typename Real>
ReconstructionSummary reconstruction_summary(const ModelSet<Real>& models, const Dataset& samples,
                                             const PairDescriptor& descriptor, std::size_t count) {
  return reconstruct<Real>(models, samples, descriptor, nullptr, count);
}

template ReconstructionSummary dump_reconstructions(const ModelSet<float>&, const Dataset&,
                                                    const PairDescriptor&, const fs::path&, std::size_t);
template ReconstructionSummary dump_reconstructions(const ModelSet<double>&, const Dataset&,
                                                    const PairDescriptor&, const fs::path&, std::size_t);
template ReconstructionSummary reconstruction_summary(const ModelSet<float>&, const Dataset&,
                                                      const PairDescriptor&, std::size_t);
template ReconstructionSummary reconstruction_summary(const ModelSet<double>&, const Dataset&,
                                                      const PairDescriptor&, std::size_t);

}  // namespace direp
