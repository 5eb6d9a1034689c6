#pragma once

// Central finite-difference oracle for the analytic backward pass. The
// numerical side only ever calls network_forward + total_objective.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fsdnet/netcore.hpp"
#include "fsdnet/objective.hpp"

namespace fsdnet::gradcheck {

struct TensorCheck {
  std::string name;
  std::size_t elements = 0;
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
  // ||analytic - numeric|| / max(||analytic|| + ||numeric||, 1e-8)
  double rel_error = 0.0;
};

struct Report {
  std::vector<TensorCheck> tensors;
  double max_rel_error = 0.0;
  double seconds = 0.0;

  nlohmann::json to_json() const;
};

// Loss value only, the quantity differentiated numerically.
double objective_value(const net::ParamSet<double>& params, const net::Batch& batch,
                       const fsd::ObjectiveConfig& objective);

Report check(const net::ParamSet<double>& params, const net::Batch& batch,
             const fsd::ObjectiveConfig& objective, double step = 1e-5);

// Small random configuration with its own batch.
struct ToyProblem {
  net::ModelParams<double> params;
  std::vector<std::uint32_t> indices;
  std::vector<std::uint8_t> labels;

  net::Batch batch() const {
    return {indices, labels, params.config().num_fields()};
  }
};

struct ToyOptions {
  std::vector<std::uint32_t> vocab_sizes{6, 5};
  int embed_dim = 4;
  int hidden = 8;
  int layers = 2;
  std::size_t batch = 8;
  net::CrossVariant cross_variant = net::CrossVariant::v2;
  net::Combination combination = net::Combination::SC;
  net::HeadMode head_mode = net::HeadMode::all_layers;
  net::FusionInput fusion_input = net::FusionInput::fused;
  int attention_dim = 4;
  std::uint64_t seed = 7;
  // Scales glorot init so the toy net produces logits well away from zero.
  double weight_scale = 1.0;
  double embedding_scale = 50.0;
};

ToyProblem make_toy_problem(const ToyOptions& options = {});

}  // namespace fsdnet::gradcheck
