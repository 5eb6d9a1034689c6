#include "fsdnet/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "fsdnet/checkpoint.hpp"
#include "fsdnet/rng.hpp"

namespace fsdnet::train {

std::string_view to_string(Monitor m) { return m == Monitor::val_logloss ? "val_logloss" : "val_auc"; }

Monitor parse_monitor(std::string_view text) {
  if (text == "val_auc" || text == "auc") return Monitor::val_auc;
  if (text == "val_logloss" || text == "logloss") return Monitor::val_logloss;
  throw ConfigError("unknown monitor '" + std::string(text) + "'");
}

std::string_view to_string(StopReason r) {
  return r == StopReason::early_stop ? "early_stop" : "max_epochs";
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (early_stop_patience < 1 || lr_patience < 1) throw ConfigError("patience must be >= 1");
  if (!(lr_reduce_factor > 0.0 && lr_reduce_factor < 1.0)) {
    throw ConfigError("lr_reduce_factor must lie in (0, 1)");
  }
  if (!(min_lr >= 0.0)) throw ConfigError("min_lr must be >= 0");
}

json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"early_stop_patience", early_stop_patience},
          {"lr_reduce_factor", lr_reduce_factor},
          {"lr_patience", lr_patience},
          {"min_lr", min_lr},
          {"seed", seed},
          {"monitor", std::string(to_string(monitor))},
          {"min_delta", min_delta},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_epsilon", adam_epsilon}};
}

TrainConfig TrainConfig::from_json(const json& doc) {
  TrainConfig c;
  c.learning_rate = doc.value("learning_rate", c.learning_rate);
  c.batch_size = doc.value("batch_size", c.batch_size);
  c.max_epochs = doc.value("max_epochs", c.max_epochs);
  c.early_stop_patience = doc.value("early_stop_patience", c.early_stop_patience);
  c.lr_reduce_factor = doc.value("lr_reduce_factor", c.lr_reduce_factor);
  c.lr_patience = doc.value("lr_patience", c.lr_patience);
  c.min_lr = doc.value("min_lr", c.min_lr);
  c.seed = doc.value("seed", c.seed);
  if (doc.contains("monitor")) c.monitor = parse_monitor(doc.at("monitor").get<std::string>());
  c.min_delta = doc.value("min_delta", c.min_delta);
  c.adam_beta1 = doc.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = doc.value("adam_beta2", c.adam_beta2);
  c.adam_epsilon = doc.value("adam_epsilon", c.adam_epsilon);
  return c;
}

template <typename T>
void adam_step(net::ParamSet<T>& params, const net::GradientBundle<T>& grads, AdamState<T>& state,
               double lr) {
  grads.check_finite("adam_step gradients");
  auto& p = params.tensors();
  const auto& g = grads.tensors();
  auto& m = state.m.tensors();
  auto& v = state.v.tensors();
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
    throw ShapeError("adam_step: parameter, gradient and state layouts differ");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  const T step = static_cast<T>(lr / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(state.epsilon);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (g[i].value.rows() != p[i].value.rows() || g[i].value.cols() != p[i].value.cols()) {
      throw ShapeError("adam_step: gradient shape mismatch for '" + p[i].name + "'");
    }
    auto ga = g[i].value.array();
    auto ma = m[i].value.array();
    auto va = v[i].value.array();
    ma = b1 * ma + (T(1) - b1) * ga;
    va = b2 * va + (T(1) - b2) * ga.square();
    p[i].value.array() -= step * ma / ((va * inv_bc2).sqrt() + eps);
  }
}

template void adam_step<float>(net::ParamSet<float>&, const net::GradientBundle<float>&,
                               AdamState<float>&, double);
template void adam_step<double>(net::ParamSet<double>&, const net::GradientBundle<double>&,
                                AdamState<double>&, double);

PlateauController::PlateauController(const TrainConfig& config, double initial_lr)
    : higher_is_better_(config.monitor == Monitor::val_auc),
      min_delta_(config.min_delta),
      lr_patience_(config.lr_patience),
      stop_patience_(config.early_stop_patience),
      factor_(config.lr_reduce_factor),
      min_lr_(config.min_lr),
      lr_(initial_lr) {}

PlateauController::Step PlateauController::observe(double value) {
  ++epochs_;
  Step step;
  const bool improved =
      !best_ || (higher_is_better_ ? value > *best_ + min_delta_ : value < *best_ - min_delta_);
  if (improved) {
    best_ = value;
    best_epoch_ = epochs_;
    lr_wait_ = 0;
    stop_wait_ = 0;
    step.improved = true;
    return step;
  }
  if (++lr_wait_ >= lr_patience_) {
    const double reduced = std::max(lr_ * factor_, min_lr_);
    step.lr_reduced = reduced < lr_;
    lr_ = reduced;
    lr_wait_ = 0;
  }
  if (++stop_wait_ >= stop_patience_) step.stop = true;
  return step;
}

json EpochMetrics::to_json() const {
  json doc = {{"epoch", epoch}, {"lr", lr}, {"batches", batches}, {"seconds", seconds},
              {"split", "train"}};
  const json loss = train_loss.to_json();
  for (auto it = loss.begin(); it != loss.end(); ++it) doc[it.key()] = it.value();
  if (validation) {
    doc["val_auc"] = validation->auc;
    doc["val_logloss"] = validation->logloss;
  }
  return doc;
}

json RunRecord::to_json() const {
  json doc = {{"config_digest", config_digest},
              {"seed", seed},
              {"best_epoch", best_epoch},
              {"best_monitor", best_monitor},
              {"best_checkpoint", best_checkpoint},
              {"stop_reason", std::string(to_string(stop_reason))},
              {"wall_seconds", wall_seconds},
              {"epochs", json::array()}};
  for (const auto& e : epochs) doc["epochs"].push_back(e.to_json());
  if (test) doc["test"] = test->to_json();
  return doc;
}

net::Batch make_batch(const EncodedDataset& data, std::span<const std::size_t> order,
                      std::size_t begin, std::size_t end, std::vector<std::uint32_t>& index_buf,
                      std::vector<std::uint8_t>& label_buf) {
  const std::size_t f = data.field_count();
  index_buf.resize((end - begin) * f);
  label_buf.resize(end - begin);
  for (std::size_t r = begin; r < end; ++r) {
    const std::size_t row = order.empty() ? r : order[r];
    const auto idx = data.indices(row);
    std::copy(idx.begin(), idx.end(), index_buf.begin() + static_cast<std::ptrdiff_t>((r - begin) * f));
    label_buf[r - begin] = data.label(row);
  }
  return {index_buf, label_buf, static_cast<int>(f)};
}

std::vector<double> predict(const net::ParamSet<float>& params, const EncodedDataset& data,
                            std::size_t batch_size) {
  std::vector<double> out;
  out.reserve(data.size());
  std::vector<std::uint32_t> ibuf;
  std::vector<std::uint8_t> lbuf;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, data.size());
    const auto batch = make_batch(data, {}, begin, end, ibuf, lbuf);
    const auto trace = net::network_forward(batch, params);
    const RowVector<float> p = trace.prediction();
    for (Index j = 0; j < p.cols(); ++j) out.push_back(static_cast<double>(p(j)));
  }
  return out;
}

metrics::EvalResult evaluate_model(const net::ParamSet<float>& params, const EncodedDataset& data,
                                   std::size_t batch_size) {
  const auto preds = predict(params, data, batch_size);
  return metrics::evaluate(preds, data.labels());
}

namespace {

void accumulate(fsd::LossBreakdown& acc, const fsd::LossBreakdown& batch, double weight) {
  auto add_vec = [weight](std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < b.size()) a.resize(b.size(), 0.0);
    for (std::size_t i = 0; i < b.size(); ++i) a[i] += weight * b[i];
  };
  acc.total += weight * batch.total;
  acc.ce += weight * batch.ce;
  acc.kl += weight * batch.kl;
  acc.mse += weight * batch.mse;
  add_vec(acc.ce_per_layer, batch.ce_per_layer);
  add_vec(acc.kl_per_student, batch.kl_per_student);
  add_vec(acc.mse_per_student, batch.mse_per_student);
}

}  // namespace

fsd::LossBreakdown dataset_objective(const net::ParamSet<float>& params, const EncodedDataset& data,
                                     const fsd::ObjectiveConfig& objective,
                                     std::size_t batch_size) {
  fsd::LossBreakdown acc;
  std::vector<std::uint32_t> ibuf;
  std::vector<std::uint8_t> lbuf;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, data.size());
    const auto batch = make_batch(data, {}, begin, end, ibuf, lbuf);
    const auto trace = net::network_forward(batch, params);
    const auto result = fsd::total_objective(trace, batch.labels, objective, params.config());
    accumulate(acc, result.loss,
               static_cast<double>(end - begin) / static_cast<double>(data.size()));
  }
  return acc;
}

EpochMetrics run_epoch(net::ModelParams<float>& params, AdamState<float>& adam,
                       const EncodedDataset& train, const EncodedDataset* validation,
                       const fsd::ObjectiveConfig& objective, const TrainConfig& config, double lr,
                       int epoch) {
  if (train.empty()) throw ConfigError("training split is empty");
  const auto start = std::chrono::steady_clock::now();
  EpochMetrics metrics;
  metrics.epoch = epoch;
  metrics.lr = lr;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order);

  std::vector<std::uint32_t> ibuf;
  std::vector<std::uint8_t> lbuf;
  for (std::size_t begin = 0; begin < train.size(); begin += config.batch_size) {
    const std::size_t end = std::min(begin + config.batch_size, train.size());
    const auto batch = make_batch(train, order, begin, end, ibuf, lbuf);
    try {
      const auto trace = net::network_forward(batch, params);
      const auto result = fsd::total_objective(trace, batch.labels, objective, params.config());
      if (!std::isfinite(result.loss.total)) throw NumericalError("objective is not finite");
      const auto grads = net::network_backward(trace, result.upstream, params);
      adam_step(params, grads, adam, lr);
      accumulate(metrics.train_loss, result.loss,
                 static_cast<double>(end - begin) / static_cast<double>(train.size()));
    } catch (const NumericalError& e) {
      throw NumericalError("epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(metrics.batches) + ": " + e.what());
    }
    ++metrics.batches;
  }
  if (validation != nullptr && !validation->empty()) {
    metrics.validation = evaluate_model(params, *validation, config.batch_size);
  }
  metrics.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return metrics;
}

RunRecord fit(net::ModelParams<float>& params, const EncodedDataset& train,
              const EncodedDataset& validation, const EncodedDataset& test,
              const fsd::ObjectiveConfig& objective, const TrainConfig& config,
              const FitOptions& options) {
  config.validate();
  objective.validate();
  if (validation.empty()) throw ConfigError("fit needs a non-empty validation split");
  const auto start = std::chrono::steady_clock::now();

  RunRecord record;
  record.seed = config.seed;
  record.config_digest = options.run_metadata.value("spec_digest", params.config().digest());

  std::ofstream log;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    log.open(options.out_dir / "train_log.jsonl", std::ios::trunc);
  }

  auto adam = AdamState<float>::fresh(params, config.adam_beta1, config.adam_beta2,
                                      config.adam_epsilon);
  PlateauController controller(config, config.learning_rate);
  net::ModelParams<float> best = params;
  record.stop_reason = StopReason::max_epochs;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const double lr = controller.lr();
    auto metrics = run_epoch(params, adam, train, &validation, objective, config, lr, epoch);
    const double monitor = config.monitor == Monitor::val_auc ? metrics.validation->auc
                                                              : metrics.validation->logloss;
    const auto step = controller.observe(monitor);
    if (step.improved) best = params;
    if (log.is_open()) {
      json line = metrics.to_json();
      line["spec_digest"] = record.config_digest;
      line["improved"] = step.improved;
      log << line.dump() << '\n';
      log.flush();
    }
    if (options.on_epoch) options.on_epoch(metrics);
    record.epochs.push_back(std::move(metrics));
    if (step.stop) {
      record.stop_reason = StopReason::early_stop;
      break;
    }
  }

  record.best_epoch = controller.best_epoch();
  record.best_monitor = controller.best().value_or(0.0);
  if (!options.out_dir.empty()) {
    json meta = options.run_metadata;
    meta["seed"] = config.seed;
    meta["epoch"] = record.epochs.size();
    net::save_checkpoint(options.out_dir / "last.ckpt", params, meta);
    meta["epoch"] = record.best_epoch;
    net::save_checkpoint(options.out_dir / "best.ckpt", best, meta);
    record.best_checkpoint = (options.out_dir / "best.ckpt").string();
  }
  params = std::move(best);
  if (!test.empty()) record.test = evaluate_model(params, test, config.batch_size);
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return record;
}

}  // namespace fsdnet::train
