#pragma once

// Mini-batch training loop: Adam, reduce-on-plateau learning rate, early
// stopping on a validation monitor and best-checkpoint restore.

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

namespace fsdnet::train {

using nlohmann::json;
using featurestore::EncodedDataset;

enum class Monitor { val_auc, val_logloss };

std::string_view to_string(Monitor m);
Monitor parse_monitor(std::string_view text);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 10000;
  int max_epochs = 100;
  int early_stop_patience = 2;
  double lr_reduce_factor = 0.1;
  int lr_patience = 1;
  double min_lr = 1e-6;
  std::uint64_t seed = 1;
  Monitor monitor = Monitor::val_auc;
  double min_delta = 1e-6;  // strict improvement threshold
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
  json to_json() const;
  static TrainConfig from_json(const json& doc);
};

template <typename T>
struct AdamState {
  net::GradientBundle<T> m;
  net::GradientBundle<T> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState fresh(const net::ParamSet<T>& params, double beta1 = 0.9,
                         double beta2 = 0.999, double epsilon = 1e-8) {
    return {net::GradientBundle<T>::zeros_like(params), net::GradientBundle<T>::zeros_like(params),
            0, beta1, beta2, epsilon};
  }
};

// Bias-corrected Adam update. Throws NumericalError on non-finite gradients.
template <typename T>
void adam_step(net::ParamSet<T>& params, const net::GradientBundle<T>& grads,
               AdamState<T>& state, double lr);

// Reduce-on-plateau schedule plus early-stopping counter over one monitor.
class PlateauController {
 public:
  PlateauController(const TrainConfig& config, double initial_lr);

  struct Step {
    bool improved = false;
    bool lr_reduced = false;
    bool stop = false;
  };

  Step observe(double monitor_value);

  double lr() const { return lr_; }
  std::optional<double> best() const { return best_; }
  int best_epoch() const { return best_epoch_; }
  int epochs_seen() const { return epochs_; }

 private:
  bool higher_is_better_;
  double min_delta_;
  int lr_patience_;
  int stop_patience_;
  double factor_;
  double min_lr_;
  double lr_;
  std::optional<double> best_;
  int best_epoch_ = 0;
  int epochs_ = 0;
  int lr_wait_ = 0;
  int stop_wait_ = 0;
};

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  fsd::LossBreakdown train_loss;  // sample-weighted mean over batches
  std::size_t batches = 0;
  std::optional<metrics::EvalResult> validation;
  double seconds = 0.0;

  json to_json() const;
};

enum class StopReason { early_stop, max_epochs };
std::string_view to_string(StopReason r);

struct RunRecord {
  std::string config_digest;
  std::uint64_t seed = 0;
  std::vector<EpochMetrics> epochs;
  int best_epoch = 0;
  double best_monitor = 0.0;
  std::string best_checkpoint;
  StopReason stop_reason = StopReason::max_epochs;
  double wall_seconds = 0.0;
  std::optional<metrics::EvalResult> test;

  json to_json() const;
};

// Averaged (all-head) predictions for every row of data.
std::vector<double> predict(const net::ParamSet<float>& params, const EncodedDataset& data,
                            std::size_t batch_size = 10000);

metrics::EvalResult evaluate_model(const net::ParamSet<float>& params, const EncodedDataset& data,
                                   std::size_t batch_size = 10000);

// Objective averaged over data (no parameter update).
fsd::LossBreakdown dataset_objective(const net::ParamSet<float>& params,
                                     const EncodedDataset& data,
                                     const fsd::ObjectiveConfig& objective,
                                     std::size_t batch_size = 10000);

// Contiguous batch [begin, end) of rows listed in order.
net::Batch make_batch(const EncodedDataset& data, std::span<const std::size_t> order,
                      std::size_t begin, std::size_t end, std::vector<std::uint32_t>& index_buf,
                      std::vector<std::uint8_t>& label_buf);

// One pass over train: seeded shuffle (seed mixed with the epoch number),
// sequential mini-batches with the last partial batch kept, and
// forward -> objective -> backward -> Adam per batch. Validation metrics are
// filled in when a non-empty validation set is supplied.
EpochMetrics run_epoch(net::ModelParams<float>& params, AdamState<float>& adam,
                       const EncodedDataset& train, const EncodedDataset* validation,
                       const fsd::ObjectiveConfig& objective, const TrainConfig& config,
                       double lr, int epoch);

struct FitOptions {
  std::filesystem::path out_dir;  // empty: no files written
  json run_metadata = json::object();
  std::function<void(const EpochMetrics&)> on_epoch;
};

// Trains until early stopping or max_epochs. On return params hold the
// best-validation model; the record's test metrics come from that model.
RunRecord fit(net::ModelParams<float>& params, const EncodedDataset& train,
              const EncodedDataset& validation, const EncodedDataset& test,
              const fsd::ObjectiveConfig& objective, const TrainConfig& config,
              const FitOptions& options = {});

}  // namespace fsdnet::train
