#pragma once

// Experiment orchestration behind the command-line tool: dataset
// preparation, multi-seed training, sweeps, ablations, label-noise curves,
// significance comparison and representation export. Every artifact written
// here carries the digest of the ExperimentSpec that produced it.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fsdnet/featurestore.hpp"
#include "fsdnet/metrics.hpp"
#include "fsdnet/netcore.hpp"
#include "fsdnet/objective.hpp"
#include "fsdnet/trainer.hpp"

namespace fsdnet::experiment {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- prepare

struct PrepareOptions {
  fs::path input;
  fs::path schema;
  std::uint64_t min_count = 2;
  featurestore::SplitRatio ratio;
  std::uint64_t seed = 2024;
  fs::path out_dir;
  bool vocab_from_all = false;  // default: training split only
  featurestore::LogBase log_base;
  char delimiter = '\0';

  json to_json() const;
};

struct PrepareSummary {
  std::size_t fields = 0;
  std::size_t features = 0;  // sum of vocabulary sizes
  std::size_t instances = 0;
  std::array<std::size_t, 3> split_sizes{};
  std::uint64_t min_count = 0;

  json to_json() const;
};

PrepareSummary prepare_dataset(const PrepareOptions& options);

// Writes a CSV and schema with planted first- and second-order effects.
struct SyntheticOptions {
  std::size_t rows = 2000;
  std::size_t fields = 4;
  std::uint32_t cardinality = 20;
  std::uint64_t seed = 1;
  double noise = 0.0;  // probability of flipping a generated label
  bool numeric_field = false;  // adds one numeric column
};

void write_synthetic(const fs::path& csv_path, const fs::path& schema_path,
                     const SyntheticOptions& options);

// ---------------------------------------------------------------- spec

enum class Baseline { none, dcnv2, dcn };
std::string_view to_string(Baseline b);
Baseline parse_baseline(std::string_view text);

struct ExperimentSpec {
  fs::path data_dir;
  net::ModelConfig model;  // vocab_sizes are filled from the dataset
  fsd::ObjectiveConfig objective;
  train::TrainConfig train;
  std::vector<std::uint64_t> seeds{1};
  Baseline baseline = Baseline::none;
  double noise_fraction = 0.0;
  std::uint64_t noise_seed = 17;
  fs::path out_dir;

  // Applies baseline presets and ablation-implied model settings, then
  // validates. Idempotent.
  ExperimentSpec resolved() const;
  void validate() const;

  json to_json() const;
  static ExperimentSpec from_json(const json& doc);
  // Digest over everything except out_dir.
  std::string digest() const;
};

ExperimentSpec default_spec();

// ---------------------------------------------------------------- runs

struct SeedRun {
  std::uint64_t seed = 0;
  train::RunRecord record;
};

struct TrainOutcome {
  std::string spec_digest;
  std::vector<SeedRun> runs;
  std::vector<double> test_auc;
  std::vector<double> test_logloss;

  double mean_auc() const { return metrics::mean(test_auc); }
  double mean_logloss() const { return metrics::mean(test_logloss); }
  json aggregate_json() const;
};

// Trains one model per seed on the prepared data. When spec.out_dir is set,
// writes seed_<s>/{train_log.jsonl,best.ckpt,last.ckpt,run_record.json},
// resolved_config.json and aggregate.json.
TrainOutcome run_training(const ExperimentSpec& spec, const featurestore::PreparedDataset& data,
                          const std::function<void(std::uint64_t, const train::EpochMetrics&)>&
                              on_epoch = {});

// Runs fn(0..count-1) on at most `jobs` threads; results stay index-ordered.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

struct GridRow {
  std::string label;
  double value = 0.0;
  std::string spec_digest;
  TrainOutcome outcome;
};

enum class SweepAxis { mu, tau, gamma };
SweepAxis parse_axis(std::string_view text);
std::string_view to_string(SweepAxis a);

std::vector<GridRow> run_sweep(const ExperimentSpec& base, const featurestore::PreparedDataset& data,
                               SweepAxis axis, const std::vector<double>& values, int jobs = 1);
std::vector<GridRow> run_ablation(const ExperimentSpec& base,
                                  const featurestore::PreparedDataset& data, int jobs = 1);
std::vector<GridRow> run_combinations(const ExperimentSpec& base,
                                      const featurestore::PreparedDataset& data, int jobs = 1);

struct NoiseRow {
  double fraction = 0.0;
  std::string model;
  std::uint64_t noise_seed = 0;
  std::string spec_digest;
  TrainOutcome outcome;
};

std::vector<NoiseRow> run_noise(const ExperimentSpec& base, const featurestore::PreparedDataset& data,
                                const std::vector<double>& fractions, int jobs = 1);

void write_grid_csv(const fs::path& path, std::string_view key_column,
                    const std::vector<GridRow>& rows);
void write_noise_csv(const fs::path& path, const std::vector<NoiseRow>& rows);

// ---------------------------------------------------------------- evaluation

struct CompareReport {
  metrics::SignificanceReport auc;
  metrics::SignificanceReport logloss;
  json to_json() const;
};

// Inputs are aggregate.json documents written by run_training.
CompareReport compare_aggregates(const json& a, const json& b);

// Seeded sample (without replacement) of `count` rows of the layer-`layer`
// fusion vectors, one CSV line per row plus the model's averaged prediction.
// Returns the number of rows written. Throws ConfigError when layer is out of
// range.
std::size_t export_representations(const net::ParamSet<float>& params,
                                   const featurestore::EncodedDataset& data, int layer,
                                   std::size_t count, std::uint64_t seed, const fs::path& out_csv,
                                   std::string_view spec_digest = {});

// Comma-separated list of doubles / integers; throws ConfigError.
std::vector<double> parse_double_list(std::string_view text);
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

}  // namespace fsdnet::experiment
