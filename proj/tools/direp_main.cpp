// direp: command-line front end for training runs, comparisons,
// reconstruction dumps and the geometry check.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <numbers>
#include <random>

#include "CLI11.hpp"
#include "direp/checkpoint.hpp"
#include "direp/geometry.hpp"
#include "direp/harness.hpp"

namespace {

using namespace direp;

constexpr int kConfigErrorExit = 2;
constexpr int kNumericErrorExit = 3;

struct RunOptions {
  std::string config_file;
  std::vector<std::pair<std::string, std::string>> flags;  // applied in order after the file
  std::vector<std::string> sets;
};

int do_run(const RunOptions& opts) {
  ExperimentConfig config;
  if (!opts.config_file.empty()) config = read_config_file(opts.config_file);
  std::vector<std::string> errors;
  auto apply = [&](const std::string& key, const std::string& value) {
    try {
      set_config_value(config, key, value);
    } catch (const ConfigError& e) {
      errors.push_back(e.what());
    }
  };
  for (const auto& [key, value] : opts.flags) apply(key, value);
  for (const auto& s : opts.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      errors.push_back("--set expects key=value, got '" + s + "'");
      continue;
    }
    apply(s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& p : config_problems(config)) errors.push_back(p);
  if (!errors.empty()) {
    std::string message = "invalid configuration:";
    for (const auto& e : errors) message += "\n  - " + e;
    throw ConfigError(message);
  }

  const auto results = run_experiment(config, [](const std::string& line) { std::cerr << line << std::endl; });
  std::vector<double> targets;
  for (const auto& r : results) targets.push_back(r.target_acc);
  double mean = 0.0;
  for (double t : targets) mean += t;
  if (!targets.empty()) mean /= static_cast<double>(targets.size());
  std::printf("%s %s: %zu runs, mean target accuracy %.4f\n", algorithm_label(config.train).c_str(),
              std::string(scenario_name(config.cheating)).c_str(), results.size(), mean);
  return 0;
}

int do_compare(const std::string& a, const std::string& b) {
  const auto report = compare_dirs(a, b);
  std::cout << format_report(report);
  return 0;
}

template <typename Real>
int dump_with(const ExperimentConfig& config, const std::string& model_path, std::uint64_t seed,
              const std::string& out_dir, std::size_t count, const std::string& split) {
  const DomainPair pair = build_pair(config, seed);
  TrainConfig train_config = config.train;
  train_config.seed = seed;
  auto models = make_models<Real>(train_config, pair.source_train.width());
  load_models(models, model_path);
  const Dataset* samples = nullptr;
  if (split == "source_test") samples = &pair.source_test;
  else if (split == "target_test") samples = &pair.target_test;
  else throw ConfigError("--split must be source_test or target_test");
  const auto summary = dump_reconstructions(models, *samples, pair.descriptor, out_dir, count);
  std::printf("wrote %zu samples to %s\n", summary.samples, out_dir.c_str());
  std::printf("flipped-bit output differs: %.1f%%\n", 100.0 * summary.flipped_differs);
  std::printf("flipped output closer to the rotated input: %.1f%%\n", 100.0 * summary.closer_to_rotated);
  return 0;
}

int do_dump(const std::string& model_path, const std::string& out_dir, std::size_t count,
            const std::string& split, const std::string& data_dir) {
  const auto header = load_checkpoint<float>(model_path);
  ExperimentConfig config = parse_config(header.meta);
  if (!data_dir.empty()) config.data_dir = data_dir;
  if (config.train.algorithm != Algorithm::explicit_ddrep) {
    throw ConfigError("dump-recon needs a model trained with --algo explicit");
  }
  if (config.train.precision == Precision::float64) {
    return dump_with<double>(config, model_path, header.seed, out_dir, count, split);
  }
  return dump_with<float>(config, model_path, header.seed, out_dir, count, split);
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const Vec3 v{normal(rng), normal(rng), normal(rng)};
  return (1.0 / norm(v)) * v;
}

int do_geometry(std::size_t instances, std::size_t n_theta, std::uint64_t seed, const std::string& csv) {
  const GeometryInstance canonical{{1, 0, 0}, {0, 1, 0}};
  const auto first = verify_claims(canonical, n_theta);
  if (!csv.empty()) write_sweep_csv(first, csv);
  std::size_t passed = first.passed ? 1 : 0;
  double worst_residual = first.max_residual, worst_sine = first.max_sine_error;
  auto show = [](const GeometryReport& r) {
    for (const auto& d : r.diagnostics) std::printf("  %s\n", d.c_str());
  };
  if (!first.passed) show(first);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (std::size_t i = 0; i < instances; ++i) {
    const double r = scale(rng);
    GeometryInstance inst{r * random_unit(rng), r * random_unit(rng)};
    const auto report = verify_claims(inst, n_theta);
    worst_residual = std::max(worst_residual, report.max_residual);
    worst_sine = std::max(worst_sine, report.max_sine_error);
    if (report.passed) ++passed;
    else show(report);
  }
  const std::size_t total = instances + 1;
  std::printf("geometry: %zu/%zu instances pass (%zu theta each)\n", passed, total, n_theta);
  std::printf("max orthogonality residual %.3g, max | |OD|/|V| - sin(theta) | %.3g\n", worst_residual, worst_sine);
  return passed == total ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain adaptation experiments with domain-independent representations"};
  app.require_subcommand(1);

  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "train one configuration over several seeds");
  run->add_option("--config", run_opts.config_file, "key = value config file");
  auto flag = [&](const char* name, const char* key, const char* help) {
    run->add_option_function<std::string>(
        name, [&run_opts, key](const std::string& v) { run_opts.flags.emplace_back(key, v); }, help);
  };
  flag("--algo", "algo", "vaegan|explicit|gan|dann|dsn|source|target");
  flag("--cheating", "cheating", "none|shift|random");
  flag("--dataset", "dataset", "fm|cifar|blobs");
  flag("--bias", "bias", "CIFAR colour bias p in [0, 1]");
  flag("--semi", "semi", "revealed target labels per class");
  flag("--ablation", "ablation", "none|dsn_reverse_kl|dsn_star|vaegan_reverse_difference");
  flag("--seeds", "seeds", "number of seeds");
  flag("--seed", "seed", "first seed");
  flag("--iters", "iters", "training iterations");
  flag("--out", "out", "result directory");
  flag("--jobs", "jobs", "parallel runs");
  flag("--data-dir", "data_dir", "dataset root (default $DIREP_DATA_DIR)");
  run->add_flag_callback("--save-models", [&run_opts] { run_opts.flags.emplace_back("save_models", "true"); },
                         "write a checkpoint per seed");
  run->add_option("--set", run_opts.sets, "extra key=value settings")->take_all();

  std::string cmp_a, cmp_b;
  auto* cmp = app.add_subcommand("compare", "z-test of final target accuracies");
  cmp->add_option("--a", cmp_a, "result directory A")->required();
  cmp->add_option("--b", cmp_b, "result directory B")->required();

  std::string model_path, dump_out, split = "target_test", dump_data;
  std::size_t dump_count = 16;
  auto* dump = app.add_subcommand("dump-recon", "write original, reconstructed and bit-flipped images");
  dump->add_option("--model", model_path, "checkpoint of an explicit-DDRep run")->required();
  dump->add_option("--out", dump_out, "output directory")->required();
  dump->add_option("--count", dump_count, "samples to dump");
  dump->add_option("--split", split, "source_test|target_test");
  dump->add_option("--data-dir", dump_data, "dataset root");

  std::size_t geo_instances = 100, geo_theta = 1000;
  std::uint64_t geo_seed = 7;
  std::string geo_csv;
  auto* geo = app.add_subcommand("verify-geometry", "check the circle-family claims numerically");
  geo->add_option("--instances", geo_instances, "random equal-norm instances");
  geo->add_option("--theta", geo_theta, "theta samples per instance");
  geo->add_option("--seed", geo_seed, "instance seed");
  geo->add_option("--csv", geo_csv, "write the canonical sweep here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigErrorExit;
  }

  try {
    if (run->parsed()) return do_run(run_opts);
    if (cmp->parsed()) return do_compare(cmp_a, cmp_b);
    if (dump->parsed()) return do_dump(model_path, dump_out, dump_count, split, dump_data);
    if (geo->parsed()) return do_geometry(geo_instances, geo_theta, geo_seed, geo_csv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigErrorExit;
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kNumericErrorExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
