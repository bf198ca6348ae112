#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "direp/datasets.hpp"
#include "direp/trainers.hpp"

namespace direp {

/// Everything needed to launch a batch of seeded runs.
struct ExperimentConfig {
  TrainConfig train;
  std::string dataset = "fm";  // fm | cifar | blobs
  CheatScenario cheating = CheatScenario::none;
  double bias = 0.5;           // cifar only
  std::size_t seeds = 5;       // runs use seeds train.seed .. train.seed + seeds - 1
  std::size_t jobs = 1;
  std::size_t blobs_per_class = 300;
  std::size_t blobs_classes = 4;
  bool save_models = false;
  std::filesystem::path data_dir;  // empty: default_data_dir()
  std::filesystem::path out_dir;   // empty: results are not persisted
};

/// Parses `key = value` lines; `#` starts a comment. Unknown keys and bad
/// values are collected and reported together as one ConfigError. Keys not
/// present keep the values already in `base`.
ExperimentConfig parse_config(std::string_view text, ExperimentConfig base = {});
ExperimentConfig read_config_file(const std::filesystem::path& path, ExperimentConfig base = {});
/// Applies one `key = value` assignment; throws ConfigError.
void set_config_value(ExperimentConfig& config, std::string_view key, std::string_view value);
/// Every key set_config_value understands.
std::vector<std::string> config_keys();

/// All problems with `config`, including those of its TrainConfig.
std::vector<std::string> config_problems(const ExperimentConfig& config);
void validate_config(const ExperimentConfig& config);

/// Canonical text of the settings that determine results (no seeds, jobs,
/// paths), parseable by parse_config.
std::string format_config(const ExperimentConfig& config);
/// Short stable hash of format_config.
std::string config_fingerprint(const ExperimentConfig& config);
/// "explicit", "dsn+dsn_star", ...
std::string algorithm_label(const TrainConfig& config);

struct RunResult {
  std::string fingerprint;
  std::string algo;
  std::string cheating_mode;
  double bias = 0.0;
  std::uint64_t seed = 0;
  double source_acc = 0.0;
  double target_acc = 0.0;
  std::vector<StepReport> history;
  double seconds = 0.0;
  // Mean DDRep information over both test sets; NaN without an encoder.
  double ddrep_bits = std::numeric_limits<double>::quiet_NaN();
};

/// Builds the domain pair of one run.
DomainPair build_pair(const ExperimentConfig& config, std::uint64_t seed);

/// Trains one seed at the configured precision.
RunResult run_single(const ExperimentConfig& config, const DomainPair& pair, std::uint64_t seed);

using RunLogFn = std::function<void(const std::string&)>;

/// Runs every seed not already recorded in `out_dir/metrics.csv`, up to
/// `jobs` at a time, appending each finished run to the file. Returns the
/// results of all seeds, read back from the file when it exists.
std::vector<RunResult> run_experiment(const ExperimentConfig& config, const RunLogFn& log = {});

inline constexpr std::string_view kMetricsHeader =
    "algo,cheating_mode,bias,seed,iteration,loss_c,loss_d,loss_g,loss_r,loss_kl,lambda,source_acc,target_acc";

/// Header plus one row per StepReport and one "final" row per run.
void write_metrics_csv(const std::vector<RunResult>& results, const std::filesystem::path& path);
/// Appends one run's rows in a single write; creates the file with its
/// header when missing.
void append_metrics_csv(const RunResult& result, const std::filesystem::path& path);
/// Complete runs (those with a final row) in file order. A later block for
/// the same seed replaces an earlier one.
std::vector<RunResult> read_metrics_csv(const std::filesystem::path& path);

/// read_metrics_csv of `dir/metrics.csv` with wall-clock seconds and DDRep
/// bits merged in from `dir/runs.jsonl`.
std::vector<RunResult> read_results(const std::filesystem::path& dir);

/// Two-sample z of the means with sample variances. Equal means with zero
/// spread give 0; unequal means with zero spread give +/-infinity ("exact").
double z_score(std::span<const double> a, std::span<const double> b);

inline constexpr double kZThreshold = 2.33;

struct ComparisonReport {
  std::string condition_a;
  std::string condition_b;
  std::vector<double> accs_a;
  std::vector<double> accs_b;
  double mean_a = 0.0;
  double mean_b = 0.0;
  double z = 0.0;
  bool exact = false;    // zero variance on both sides, unequal means
  bool a_better = false; // z >= kZThreshold
};

ComparisonReport compare(std::string condition_a, std::span<const double> accs_a,
                         std::string condition_b, std::span<const double> accs_b);
/// Compares final target accuracies of two result directories.
ComparisonReport compare_dirs(const std::filesystem::path& a, const std::filesystem::path& b);
std::string format_report(const ComparisonReport& report);

/// Binary PGM (P5); pixel = round(255 * clamp(v, 0, 1)).
void write_pgm(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
               std::span<const float> pixels);

struct ReconstructionSummary {
  std::size_t samples = 0;
  double flipped_differs = 0.0;     // fraction whose flipped output differs anywhere
  double closer_to_rotated = 0.0;   // fraction with |x~ - flip180(x)| < |x~ - x| on pixels
};

/// For the first `count` samples of `samples`, writes NNNN_original.pgm,
/// NNNN_recon.pgm and NNNN_flipped.pgm into `out_dir`.
template <typename Real>
ReconstructionSummary dump_reconstructions(const ModelSet<Real>& models, const Dataset& samples,
                                           const PairDescriptor& descriptor,
                                           const std::filesystem::path& out_dir, std::size_t count);

/// Measures the same statistics as dump_reconstructions without writing files.
template <typename Real>
ReconstructionSummary reconstruction_summary(const ModelSet<Real>& models, const Dataset& samples,
                                             const PairDescriptor& descriptor, std::size_t count);

}  // namespace direp
