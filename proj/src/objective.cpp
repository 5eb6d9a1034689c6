#include "fsdnet/objective.hpp"

#include <cmath>

#include "fsdnet/fusion.hpp"

namespace fsdnet::fsd {

std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_soft_label: return "no_soft_label";
    case Ablation::no_hint: return "no_hint";
    case Ablation::no_fusion: return "no_fusion";
  }
  return "?";
}

Ablation parse_ablation(std::string_view text) {
  if (text == "full") return Ablation::full;
  if (text == "no_soft_label" || text == "wo_sl" || text == "w/o SL") return Ablation::no_soft_label;
  if (text == "no_hint" || text == "wo_hl" || text == "w/o HL") return Ablation::no_hint;
  if (text == "no_fusion" || text == "wo_if" || text == "w/o IF") return Ablation::no_fusion;
  throw ConfigError("unknown ablation '" + std::string(text) + "'");
}

void ObjectiveConfig::validate() const {
  if (!(mu >= 0.0 && mu <= 1.0)) throw ConfigError("mu must lie in [0, 1]");
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
}

json ObjectiveConfig::to_json() const {
  return {{"mu", mu}, {"tau", tau}, {"gamma", gamma}, {"ablation", std::string(to_string(ablation))}};
}

ObjectiveConfig ObjectiveConfig::from_json(const json& doc) {
  ObjectiveConfig c;
  c.mu = doc.value("mu", c.mu);
  c.tau = doc.value("tau", c.tau);
  c.gamma = doc.value("gamma", c.gamma);
  if (doc.contains("ablation")) c.ablation = parse_ablation(doc.at("ablation").get<std::string>());
  return c;
}

json LossBreakdown::to_json() const {
  return {{"L", total},
          {"L_CE", ce},
          {"L_KL", kl},
          {"L_MSE", mse},
          {"per_layer", {{"ce", ce_per_layer}, {"kl", kl_per_student}, {"mse", mse_per_student}}}};
}

template <typename T>
double ce_loss(const RowVector<T>& logits, std::span<const std::uint8_t> labels, RowVector<T>* dz) {
  const Index N = logits.cols();
  if (static_cast<Index>(labels.size()) != N) throw ShapeError("ce_loss: label count mismatch");
  if (N == 0) return 0.0;
  if (dz) dz->resize(N);
  double sum = 0.0;
  for (Index j = 0; j < N; ++j) {
    const double z = static_cast<double>(logits(j));
    const double y = labels[static_cast<std::size_t>(j)];
    sum -= y > 0.5 ? log_sigmoid(z) : log_sigmoid(-z);
    if (dz) (*dz)(j) = static_cast<T>((sigmoid(z) - y) / static_cast<double>(N));
  }
  return sum / static_cast<double>(N);
}

template <typename T>
double soft_label_loss(const RowVector<T>& z_teacher, const RowVector<T>& z_student, double tau,
                       RowVector<T>* dz_teacher, RowVector<T>* dz_student) {
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  const Index N = z_teacher.cols();
  if (z_student.cols() != N) throw ShapeError("soft_label_loss: batch size mismatch");
  if (N == 0) return 0.0;
  if (dz_teacher) dz_teacher->resize(N);
  if (dz_student) dz_student->resize(N);
  double sum = 0.0;
  for (Index j = 0; j < N; ++j) {
    const double a = static_cast<double>(z_teacher(j)) / tau;
    const double b = static_cast<double>(z_student(j)) / tau;
    const double y_t = sigmoid(a);
    sum += y_t * (log_sigmoid(a) - log_sigmoid(b)) +
           (1.0 - y_t) * (log_sigmoid(-a) - log_sigmoid(-b));
    if (dz_student) (*dz_student)(j) = static_cast<T>((sigmoid(b) - y_t) / (tau * N));
    if (dz_teacher) (*dz_teacher)(j) = static_cast<T>(y_t * (1.0 - y_t) * (a - b) / (tau * N));
  }
  return sum / static_cast<double>(N);
}

template <typename T>
double hint_loss(const Matrix<T>& f_teacher, const Matrix<T>& f_student, Matrix<T>* df_teacher,
                 Matrix<T>* df_student) {
  if (f_teacher.rows() != f_student.rows() || f_teacher.cols() != f_student.cols()) {
    throw ShapeError("hint_loss: teacher and student fusion vectors differ in shape");
  }
  const Index N = f_teacher.cols();
  if (N == 0) return 0.0;
  const Matrix<T> diff = f_teacher - f_student;
  const double value = diff.template cast<double>().squaredNorm() / static_cast<double>(N);
  const T scale = static_cast<T>(2.0 / static_cast<double>(N));
  if (df_teacher) *df_teacher = scale * diff;
  if (df_student) *df_student = -scale * diff;
  return value;
}

template <typename T>
ObjectiveResult<T> total_objective(const net::ForwardTrace<T>& trace,
                                   std::span<const std::uint8_t> labels,
                                   const ObjectiveConfig& config, const net::ModelConfig& model) {
  config.validate();
  const bool deep_only = model.fusion_input == net::FusionInput::deep_only;
  if (deep_only != (config.ablation == Ablation::no_fusion)) {
    throw ConfigError("the no_fusion ablation requires deep-only fusion inputs (and only it)");
  }
  const auto heads = model.head_layers();
  const int n = model.num_layers();
  if (trace.depth() != n || trace.logits.size() != heads.size()) {
    throw ShapeError("trace does not match the model configuration");
  }
  const std::size_t teacher = heads.size() - 1;
  std::vector<std::size_t> students;
  for (std::size_t k = 0; k < teacher; ++k) students.push_back(k);
  if (config.distillation_active() && students.empty()) {
    throw ConfigError("distillation terms are active but the model has no student layers");
  }

  const Index B = trace.batch;
  ObjectiveResult<T> result;
  auto& loss = result.loss;
  auto& up = result.upstream;
  up.d_logits.assign(heads.size(), RowVector<T>::Zero(B));
  up.d_fusion.assign(static_cast<std::size_t>(n), Matrix<T>());

  const T mu = static_cast<T>(config.mu);
  for (std::size_t k = 0; k < heads.size(); ++k) {
    RowVector<T> dz;
    const double value = ce_loss(trace.logits[k], labels, &dz);
    loss.ce_per_layer.push_back(value);
    loss.ce += value;
    up.d_logits[k] += mu * dz;
  }

  if (config.soft_label_enabled()) {
    const T weight = static_cast<T>(1.0 - config.mu);
    for (std::size_t s : students) {
      RowVector<T> dz_t, dz_s;
      const double value = soft_label_loss(trace.logits[teacher], trace.logits[s], config.tau,
                                            &dz_t, &dz_s);
      loss.kl_per_student.push_back(value);
      loss.kl += value;
      if (weight != T(0)) {
        up.d_logits[teacher] += weight * dz_t;
        up.d_logits[s] += weight * dz_s;
      }
    }
  }

  if (config.hint_enabled()) {
    const T weight = static_cast<T>(config.gamma);
    const auto t_layer = static_cast<std::size_t>(heads[teacher] - 1);
    const Matrix<T>& f_t = trace.fusion[t_layer];
    for (std::size_t s : students) {
      const auto s_layer = static_cast<std::size_t>(heads[s] - 1);
      Matrix<T> df_t, df_s;
      const double value = hint_loss(f_t, trace.fusion[s_layer], &df_t, &df_s);
      loss.mse_per_student.push_back(value);
      loss.mse += value;
      if (weight != T(0)) {
        for (auto [layer, grad] : {std::pair{t_layer, &df_t}, std::pair{s_layer, &df_s}}) {
          auto& slot = up.d_fusion[layer];
          if (slot.size() == 0) slot = Matrix<T>::Zero(grad->rows(), grad->cols());
          slot += weight * *grad;
        }
      }
    }
  }

  loss.total = config.mu * loss.ce + (1.0 - config.mu) * loss.kl + config.gamma * loss.mse;
  return result;
}

#define FSDNET_INSTANTIATE(T)                                                                     \
  template double ce_loss<T>(const RowVector<T>&, std::span<const std::uint8_t>, RowVector<T>*);  \
  template double soft_label_loss<T>(const RowVector<T>&, const RowVector<T>&, double,            \
                                     RowVector<T>*, RowVector<T>*);                               \
  template double hint_loss<T>(const Matrix<T>&, const Matrix<T>&, Matrix<T>*, Matrix<T>*);       \
  template ObjectiveResult<T> total_objective<T>(const net::ForwardTrace<T>&,                     \
                                                 std::span<const std::uint8_t>,                   \
                                                 const ObjectiveConfig&, const net::ModelConfig&);

FSDNET_INSTANTIATE(float)
FSDNET_INSTANTIATE(double)

#undef FSDNET_INSTANTIATE

}  // namespace fsdnet::fsd
