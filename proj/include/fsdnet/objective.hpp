#pragma once

// Fusion self-distillation objective:
//   L = mu * L_CE + (1 - mu) * L_KL + gamma * L_MSE
// with per-layer BCE, soft-label KL from the deepest head (teacher) to every
// shallower head (student), and a hint MSE between fusion vectors. Gradients
// flow into the teacher as well as the students.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fsdnet/common.hpp"
#include "fsdnet/netcore.hpp"

namespace fsdnet::fsd {

using nlohmann::json;

enum class Ablation { full, no_soft_label, no_hint, no_fusion };

std::string_view to_string(Ablation a);
Ablation parse_ablation(std::string_view text);

struct ObjectiveConfig {
  double mu = 0.5;
  double tau = 1.0;
  double gamma = 0.01;
  Ablation ablation = Ablation::full;

  void validate() const;
  bool soft_label_enabled() const { return ablation != Ablation::no_soft_label; }
  bool hint_enabled() const { return ablation != Ablation::no_hint; }
  // Whether any distillation term carries non-zero weight.
  bool distillation_active() const {
    return (soft_label_enabled() && mu < 1.0) || (hint_enabled() && gamma > 0.0);
  }

  json to_json() const;
  static ObjectiveConfig from_json(const json& doc);
};

struct LossBreakdown {
  double total = 0.0;
  double ce = 0.0;
  double kl = 0.0;
  double mse = 0.0;
  std::vector<double> ce_per_layer;
  std::vector<double> kl_per_student;
  std::vector<double> mse_per_student;

  json to_json() const;
};

// Mean-reduced BCE computed from logits; dz receives dL/dz = (sigmoid(z) - y) / N.
template <typename T>
double ce_loss(const RowVector<T>& logits, std::span<const std::uint8_t> labels,
               RowVector<T>* dz = nullptr);

// KL(sigmoid(z_T/tau) || sigmoid(z_S/tau)) averaged over the batch. The
// optional outputs receive dL/dz_T and dL/dz_S.
template <typename T>
double soft_label_loss(const RowVector<T>& z_teacher, const RowVector<T>& z_student, double tau,
                       RowVector<T>* dz_teacher = nullptr, RowVector<T>* dz_student = nullptr);

// (1/N) sum ||f_T - f_S||^2 with gradients for both sides.
template <typename T>
double hint_loss(const Matrix<T>& f_teacher, const Matrix<T>& f_student,
                 Matrix<T>* df_teacher = nullptr, Matrix<T>* df_student = nullptr);

template <typename T>
struct ObjectiveResult {
  LossBreakdown loss;
  net::Upstream<T> upstream;
};

// Evaluates the full objective on a forward trace. Throws ConfigError when
// distillation is active but the model has no student heads, or when the
// model's fusion input disagrees with the no_fusion ablation.
template <typename T>
ObjectiveResult<T> total_objective(const net::ForwardTrace<T>& trace,
                                   std::span<const std::uint8_t> labels,
                                   const ObjectiveConfig& config,
                                   const net::ModelConfig& model);

}  // namespace fsdnet::fsd
