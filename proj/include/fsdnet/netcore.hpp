#pragma once

// The differentiable network: embedding lookup, cross layers (v2/v1), deep
// ReLU layers, per-layer fusion of the two branches and the linear-sigmoid
// heads. Activations are stored column-wise: a batch of B samples is a
// (width x B) matrix.

#include <cstdint>
#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fsdnet/common.hpp"

namespace fsdnet::net {

using nlohmann::json;

enum class CrossVariant { v2, v1 };
enum class Combination { SC, HP, PA, AD };
enum class HeadMode { all_layers, final_only };
// What each fusion layer reads: both branches, or the deep branch alone.
enum class FusionInput { fused, deep_only };

std::string_view to_string(CrossVariant v);
std::string_view to_string(Combination c);
std::string_view to_string(HeadMode m);
std::string_view to_string(FusionInput f);
CrossVariant parse_cross_variant(std::string_view text);
Combination parse_combination(std::string_view text);
HeadMode parse_head_mode(std::string_view text);
FusionInput parse_fusion_input(std::string_view text);

struct ModelConfig {
  std::vector<std::uint32_t> vocab_sizes;  // v_i per field, OOV included
  int embed_dim = 16;
  // One deep layer per entry; the cross network has the same depth. All
  // widths must be equal so that every fusion vector has the same length.
  std::vector<int> hidden_units{400, 400, 400};
  CrossVariant cross_variant = CrossVariant::v2;
  Combination combination = Combination::SC;
  HeadMode head_mode = HeadMode::all_layers;
  FusionInput fusion_input = FusionInput::fused;
  int attention_dim = 32;  // AD only

  int num_fields() const { return static_cast<int>(vocab_sizes.size()); }
  int num_layers() const { return static_cast<int>(hidden_units.size()); }
  int input_dim() const { return num_fields() * embed_dim; }  // D
  int hidden_dim() const { return hidden_units.empty() ? 0 : hidden_units.front(); }  // H
  int fusion_dim() const;
  // Layers 1..n that carry a prediction head.
  std::vector<int> head_layers() const;
  int num_heads() const { return static_cast<int>(head_layers().size()); }

  // Throws ConfigError.
  void validate() const;

  json to_json() const;
  static ModelConfig from_json(const json& doc);
  std::string digest() const;
};

template <typename T>
struct Tensor {
  std::string name;
  Matrix<T> value;
};

// Every learnable tensor in a fixed declaration order. Vectors are stored as
// (n x 1) matrices and head weights as (1 x |f|) rows. Embedding tables are
// (v_i x d).
template <typename T>
class ParamSet {
 public:
  ParamSet() = default;
  explicit ParamSet(ModelConfig config);  // zero-filled

  const ModelConfig& config() const { return config_; }
  std::vector<Tensor<T>>& tensors() { return tensors_; }
  const std::vector<Tensor<T>>& tensors() const { return tensors_; }
  std::size_t parameter_count() const;

  Matrix<T>& embedding(int field) { return at(embedding_offset_ + field); }
  const Matrix<T>& embedding(int field) const { return at(embedding_offset_ + field); }
  // layer in 0..n-1 produces c_{layer+1}. v2: D x D; v1: D x 1.
  Matrix<T>& cross_weight(int layer) { return at(cross_offset_ + 2 * layer); }
  const Matrix<T>& cross_weight(int layer) const { return at(cross_offset_ + 2 * layer); }
  Matrix<T>& cross_bias(int layer) { return at(cross_offset_ + 2 * layer + 1); }
  const Matrix<T>& cross_bias(int layer) const { return at(cross_offset_ + 2 * layer + 1); }
  Matrix<T>& deep_weight(int layer) { return at(deep_offset_ + 2 * layer); }
  const Matrix<T>& deep_weight(int layer) const { return at(deep_offset_ + 2 * layer); }
  Matrix<T>& deep_bias(int layer) { return at(deep_offset_ + 2 * layer + 1); }
  const Matrix<T>& deep_bias(int layer) const { return at(deep_offset_ + 2 * layer + 1); }
  // HP/PA projection of d_l to length D, fusion layer index 0..n-1.
  Matrix<T>& proj_weight(int layer) { return at(combine_offset_ + 2 * layer); }
  const Matrix<T>& proj_weight(int layer) const { return at(combine_offset_ + 2 * layer); }
  Matrix<T>& proj_bias(int layer) { return at(combine_offset_ + 2 * layer + 1); }
  const Matrix<T>& proj_bias(int layer) const { return at(combine_offset_ + 2 * layer + 1); }
  // AD scoring networks; branch 0 scores c_l, branch 1 scores d_l.
  Matrix<T>& att_weight(int layer, int branch) { return at(att_index(layer, branch) + 0); }
  const Matrix<T>& att_weight(int layer, int branch) const { return at(att_index(layer, branch) + 0); }
  Matrix<T>& att_bias(int layer, int branch) { return at(att_index(layer, branch) + 1); }
  const Matrix<T>& att_bias(int layer, int branch) const { return at(att_index(layer, branch) + 1); }
  Matrix<T>& att_score(int layer, int branch) { return at(att_index(layer, branch) + 2); }
  const Matrix<T>& att_score(int layer, int branch) const { return at(att_index(layer, branch) + 2); }
  // head index 0..num_heads-1 (see ModelConfig::head_layers).
  Matrix<T>& head_weight(int head) { return at(head_offset_ + 2 * head); }
  const Matrix<T>& head_weight(int head) const { return at(head_offset_ + 2 * head); }
  Matrix<T>& head_bias(int head) { return at(head_offset_ + 2 * head + 1); }
  const Matrix<T>& head_bias(int head) const { return at(head_offset_ + 2 * head + 1); }

  void set_zero();
  // this += scale * other
  void axpy(T scale, const ParamSet& other);
  // Throws NumericalError naming the first tensor holding NaN/Inf.
  void check_finite(std::string_view what) const;

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out(config_);
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      out.tensors()[i].value = tensors_[i].value.template cast<U>();
    }
    return out;
  }

 private:
  Matrix<T>& at(int i) { return tensors_[static_cast<std::size_t>(i)].value; }
  const Matrix<T>& at(int i) const { return tensors_[static_cast<std::size_t>(i)].value; }
  int att_index(int layer, int branch) const { return combine_offset_ + 6 * layer + 3 * branch; }

  ModelConfig config_;
  std::vector<Tensor<T>> tensors_;
  int embedding_offset_ = 0;
  int cross_offset_ = 0;
  int deep_offset_ = 0;
  int combine_offset_ = 0;
  int head_offset_ = 0;
};

template <typename T>
class ModelParams : public ParamSet<T> {
 public:
  using ParamSet<T>::ParamSet;
  ModelParams(ParamSet<T> base) : ParamSet<T>(std::move(base)) {}  // NOLINT

  // Glorot-uniform weights, zero biases, N(0, 0.01) embeddings.
  static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);
};

template <typename T>
class GradientBundle : public ParamSet<T> {
 public:
  using ParamSet<T>::ParamSet;
  GradientBundle(ParamSet<T> base) : ParamSet<T>(std::move(base)) {}  // NOLINT

  static GradientBundle zeros_like(const ParamSet<T>& params) {
    return GradientBundle(params.config());
  }
};

// Borrowed view over B encoded samples.
struct Batch {
  std::span<const std::uint32_t> indices;  // row-major, size() * field_count
  std::span<const std::uint8_t> labels;
  int field_count = 0;

  Index size() const { return static_cast<Index>(labels.size()); }
};

// AD per-branch intermediates.
template <typename T>
struct AttentionCache {
  std::array<Matrix<T>, 2> hidden_pre;  // W x + b, A x B
  std::array<RowVector<T>, 2> scores;   // p . ReLU(hidden_pre)
  std::array<RowVector<T>, 2> weights;  // softmax over the branch pair (alpha, beta)
};

template <typename T>
struct ForwardTrace {
  std::vector<std::uint32_t> indices;  // copy of the batch indices, row-major
  int field_count = 0;
  Index batch = 0;

  Matrix<T> h;                          // D x B; c_0 = d_0 = h
  std::vector<Matrix<T>> cross;         // c_1..c_n
  std::vector<Matrix<T>> cross_pre;     // v2: W c + b (D x B); v1: w . c (1 x B)
  std::vector<Matrix<T>> deep;          // d_1..d_n
  std::vector<Matrix<T>> deep_pre;      // W d + b before ReLU
  std::vector<Matrix<T>> projected;     // HP/PA: d_t (D x B)
  std::vector<AttentionCache<T>> attention;
  std::vector<Matrix<T>> fusion;        // f_1..f_n
  std::vector<RowVector<T>> logits;     // per head
  std::vector<RowVector<T>> probs;      // per head

  int depth() const { return static_cast<int>(cross.size()); }
  const Matrix<T>& cross_at(int l) const { return l == 0 ? h : cross[static_cast<std::size_t>(l - 1)]; }
  const Matrix<T>& deep_at(int l) const { return l == 0 ? h : deep[static_cast<std::size_t>(l - 1)]; }
  // Arithmetic mean of every head probability, per sample.
  RowVector<T> prediction() const;
};

// Gradients of the objective with respect to the head logits and, optionally,
// the fusion vectors (hint loss). Empty matrices mean zero.
template <typename T>
struct Upstream {
  std::vector<RowVector<T>> d_logits;  // per head
  std::vector<Matrix<T>> d_fusion;     // per layer 1..n
};

// Stateless building blocks. Vectors are single-column matrices.
template <typename T>
Matrix<T> embed(const Batch& batch, const ParamSet<T>& params);

template <typename T>
Matrix<T> cross_forward(const Matrix<T>& c0, const Matrix<T>& cl, const Matrix<T>& weight,
                        const Matrix<T>& bias, CrossVariant variant);

template <typename T>
Matrix<T> deep_forward(const Matrix<T>& input, const Matrix<T>& weight, const Matrix<T>& bias);

template <typename T>
ForwardTrace<T> network_forward(const Batch& batch, const ParamSet<T>& params);

// Accumulates analytic gradients for every parameter; throws NumericalError
// when any gradient is non-finite.
template <typename T>
GradientBundle<T> network_backward(const ForwardTrace<T>& trace, const Upstream<T>& upstream,
                                   const ParamSet<T>& params);

}  // namespace fsdnet::net
