#include "fsdnet/gradcheck.hpp"

#include <chrono>
#include <cmath>

#include "fsdnet/rng.hpp"

namespace fsdnet::gradcheck {

nlohmann::json Report::to_json() const {
  nlohmann::json doc = {{"max_rel_error", max_rel_error}, {"seconds", seconds},
                        {"tensors", nlohmann::json::array()}};
  for (const auto& t : tensors) {
    doc["tensors"].push_back({{"name", t.name},
                              {"elements", t.elements},
                              {"analytic_norm", t.analytic_norm},
                              {"numeric_norm", t.numeric_norm},
                              {"rel_error", t.rel_error}});
  }
  return doc;
}

double objective_value(const net::ParamSet<double>& params, const net::Batch& batch,
                       const fsd::ObjectiveConfig& objective) {
  const auto trace = net::network_forward(batch, params);
  return fsd::total_objective(trace, batch.labels, objective, params.config()).loss.total;
}

Report check(const net::ParamSet<double>& params, const net::Batch& batch,
             const fsd::ObjectiveConfig& objective, double step) {
  const auto start = std::chrono::steady_clock::now();
  const auto trace = net::network_forward(batch, params);
  const auto result = fsd::total_objective(trace, batch.labels, objective, params.config());
  const auto analytic = net::network_backward(trace, result.upstream, params);

  net::ParamSet<double> probe = params;
  Report report;
  for (std::size_t t = 0; t < probe.tensors().size(); ++t) {
    auto& value = probe.tensors()[t].value;
    Matrix<double> numeric(value.rows(), value.cols());
    for (Index j = 0; j < value.cols(); ++j) {
      for (Index i = 0; i < value.rows(); ++i) {
        const double saved = value(i, j);
        value(i, j) = saved + step;
        const double up = objective_value(probe, batch, objective);
        value(i, j) = saved - step;
        const double down = objective_value(probe, batch, objective);
        value(i, j) = saved;
        numeric(i, j) = (up - down) / (2.0 * step);
      }
    }
    const auto& a = analytic.tensors()[t].value;
    TensorCheck tc;
    tc.name = probe.tensors()[t].name;
    tc.elements = static_cast<std::size_t>(value.size());
    tc.analytic_norm = a.norm();
    tc.numeric_norm = numeric.norm();
    tc.rel_error = (a - numeric).norm() / std::max(tc.analytic_norm + tc.numeric_norm, 1e-8);
    report.max_rel_error = std::max(report.max_rel_error, tc.rel_error);
    report.tensors.push_back(std::move(tc));
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

ToyProblem make_toy_problem(const ToyOptions& options) {
  net::ModelConfig config;
  config.vocab_sizes = options.vocab_sizes;
  config.embed_dim = options.embed_dim;
  config.hidden_units.assign(static_cast<std::size_t>(options.layers), options.hidden);
  config.cross_variant = options.cross_variant;
  config.combination = options.combination;
  config.head_mode = options.head_mode;
  config.fusion_input = options.fusion_input;
  config.attention_dim = options.attention_dim;

  ToyProblem toy{net::ModelParams<double>::initialize(config, options.seed), {}, {}};
  Rng rng(mix_seed(options.seed, 99));
  for (auto& t : toy.params.tensors()) {
    if (t.name.starts_with("emb.")) {
      t.value *= options.embedding_scale;
    } else if (t.name.ends_with(".bias")) {
      // Non-zero biases so every bias gradient path is exercised.
      for (Index i = 0; i < t.value.size(); ++i) t.value(i) = rng.uniform(-0.1, 0.1);
    } else {
      t.value *= options.weight_scale;
    }
  }
  const auto f = options.vocab_sizes.size();
  for (std::size_t j = 0; j < options.batch; ++j) {
    for (std::size_t i = 0; i < f; ++i) {
      toy.indices.push_back(static_cast<std::uint32_t>(rng.below(options.vocab_sizes[i])));
    }
    toy.labels.push_back(static_cast<std::uint8_t>(rng.below(2)));
  }
  return toy;
}

}  // namespace fsdnet::gradcheck
