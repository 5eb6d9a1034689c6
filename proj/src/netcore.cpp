#include "fsdnet/netcore.hpp"

#include <cmath>

#include "fsdnet/fusion.hpp"
#include "fsdnet/rng.hpp"

namespace fsdnet::net {

std::string_view to_string(CrossVariant v) { return v == CrossVariant::v1 ? "v1" : "v2"; }

std::string_view to_string(Combination c) {
  switch (c) {
    case Combination::SC: return "SC";
    case Combination::HP: return "HP";
    case Combination::PA: return "PA";
    case Combination::AD: return "AD";
  }
  return "?";
}

std::string_view to_string(HeadMode m) {
  return m == HeadMode::final_only ? "final_only" : "all_layers";
}

std::string_view to_string(FusionInput f) {
  return f == FusionInput::deep_only ? "deep_only" : "fused";
}

CrossVariant parse_cross_variant(std::string_view text) {
  if (text == "v2") return CrossVariant::v2;
  if (text == "v1") return CrossVariant::v1;
  throw ConfigError("unknown cross variant '" + std::string(text) + "' (expected v1 or v2)");
}

Combination parse_combination(std::string_view text) {
  if (text == "SC" || text == "sc") return Combination::SC;
  if (text == "HP" || text == "hp") return Combination::HP;
  if (text == "PA" || text == "pa") return Combination::PA;
  if (text == "AD" || text == "ad") return Combination::AD;
  throw ConfigError("unknown combination '" + std::string(text) + "' (expected SC, HP, PA or AD)");
}

HeadMode parse_head_mode(std::string_view text) {
  if (text == "all_layers" || text == "all") return HeadMode::all_layers;
  if (text == "final_only" || text == "final") return HeadMode::final_only;
  throw ConfigError("unknown head mode '" + std::string(text) + "'");
}

FusionInput parse_fusion_input(std::string_view text) {
  if (text == "fused") return FusionInput::fused;
  if (text == "deep_only") return FusionInput::deep_only;
  throw ConfigError("unknown fusion input '" + std::string(text) + "'");
}

int ModelConfig::fusion_dim() const {
  if (fusion_input == FusionInput::deep_only) return hidden_dim();
  switch (combination) {
    case Combination::HP:
    case Combination::PA:
      return 3 * input_dim();
    case Combination::SC:
    case Combination::AD:
      break;
  }
  return input_dim() + hidden_dim();
}

std::vector<int> ModelConfig::head_layers() const {
  std::vector<int> layers;
  if (head_mode == HeadMode::final_only) {
    layers.push_back(num_layers());
  } else {
    for (int l = 1; l <= num_layers(); ++l) layers.push_back(l);
  }
  return layers;
}

void ModelConfig::validate() const {
  if (vocab_sizes.empty()) throw ConfigError("model needs at least one field");
  for (auto v : vocab_sizes) {
    if (v < 1) throw ConfigError("every vocabulary needs at least the OOV row");
  }
  if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
  if (hidden_units.empty()) throw ConfigError("layer count must be >= 1");
  for (int h : hidden_units) {
    if (h < 1) throw ConfigError("hidden widths must be >= 1");
    if (h != hidden_units.front()) {
      throw ConfigError("all deep layers must share one width (fusion vectors must match)");
    }
  }
  if (combination == Combination::AD && attention_dim < 1) {
    throw ConfigError("attention_dim must be >= 1");
  }
}

json ModelConfig::to_json() const {
  return {{"vocab_sizes", vocab_sizes},
          {"embed_dim", embed_dim},
          {"hidden_units", hidden_units},
          {"cross_variant", std::string(to_string(cross_variant))},
          {"combination", std::string(to_string(combination))},
          {"head_mode", std::string(to_string(head_mode))},
          {"fusion_input", std::string(to_string(fusion_input))},
          {"attention_dim", attention_dim}};
}

ModelConfig ModelConfig::from_json(const json& doc) {
  ModelConfig c;
  if (doc.contains("vocab_sizes")) c.vocab_sizes = doc.at("vocab_sizes").get<std::vector<std::uint32_t>>();
  c.embed_dim = doc.value("embed_dim", c.embed_dim);
  if (doc.contains("hidden_units")) c.hidden_units = doc.at("hidden_units").get<std::vector<int>>();
  if (doc.contains("cross_variant")) c.cross_variant = parse_cross_variant(doc.at("cross_variant").get<std::string>());
  if (doc.contains("combination")) c.combination = parse_combination(doc.at("combination").get<std::string>());
  if (doc.contains("head_mode")) c.head_mode = parse_head_mode(doc.at("head_mode").get<std::string>());
  if (doc.contains("fusion_input")) c.fusion_input = parse_fusion_input(doc.at("fusion_input").get<std::string>());
  c.attention_dim = doc.value("attention_dim", c.attention_dim);
  return c;
}

std::string ModelConfig::digest() const { return hex_digest(fnv1a64(to_json().dump())); }

template <typename T>
ParamSet<T>::ParamSet(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const int f = config_.num_fields();
  const int d = config_.embed_dim;
  const int n = config_.num_layers();
  const Index D = config_.input_dim();
  const Index H = config_.hidden_dim();
  auto add = [&](std::string name, Index rows, Index cols) {
    tensors_.push_back({std::move(name), Matrix<T>::Zero(rows, cols)});
  };

  embedding_offset_ = 0;
  for (int i = 0; i < f; ++i) add("emb." + std::to_string(i), config_.vocab_sizes[i], d);

  cross_offset_ = static_cast<int>(tensors_.size());
  for (int l = 0; l < n; ++l) {
    const std::string p = "cross." + std::to_string(l) + ".";
    add(p + "weight", D, config_.cross_variant == CrossVariant::v2 ? D : 1);
    add(p + "bias", D, 1);
  }

  deep_offset_ = static_cast<int>(tensors_.size());
  for (int l = 0; l < n; ++l) {
    const std::string p = "deep." + std::to_string(l) + ".";
    add(p + "weight", H, l == 0 ? D : H);
    add(p + "bias", H, 1);
  }

  combine_offset_ = static_cast<int>(tensors_.size());
  if (config_.fusion_input == FusionInput::fused) {
    if (config_.combination == Combination::HP || config_.combination == Combination::PA) {
      for (int l = 0; l < n; ++l) {
        const std::string p = "proj." + std::to_string(l + 1) + ".";
        add(p + "weight", D, H);
        add(p + "bias", D, 1);
      }
    } else if (config_.combination == Combination::AD) {
      const Index A = config_.attention_dim;
      for (int l = 0; l < n; ++l) {
        for (int branch = 0; branch < 2; ++branch) {
          const std::string p =
              "att." + std::to_string(l + 1) + (branch == 0 ? ".cross." : ".deep.");
          add(p + "weight", A, branch == 0 ? D : H);
          add(p + "bias", A, 1);
          add(p + "score", A, 1);
        }
      }
    }
  }

  head_offset_ = static_cast<int>(tensors_.size());
  for (int layer : config_.head_layers()) {
    const std::string p = "head." + std::to_string(layer) + ".";
    add(p + "weight", 1, config_.fusion_dim());
    add(p + "bias", 1, 1);
  }
}

template <typename T>
std::size_t ParamSet<T>::parameter_count() const {
  std::size_t count = 0;
  for (const auto& t : tensors_) count += static_cast<std::size_t>(t.value.size());
  return count;
}

template <typename T>
void ParamSet<T>::set_zero() {
  for (auto& t : tensors_) t.value.setZero();
}

template <typename T>
void ParamSet<T>::axpy(T scale, const ParamSet& other) {
  if (other.tensors_.size() != tensors_.size()) throw ShapeError("axpy: parameter layout mismatch");
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    tensors_[i].value += scale * other.tensors_[i].value;
  }
}

template <typename T>
void ParamSet<T>::check_finite(std::string_view what) const {
  for (const auto& t : tensors_) {
    if (!t.value.allFinite()) {
      throw NumericalError(std::string(what) + ": non-finite value in tensor '" + t.name + "'");
    }
  }
}

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

template <typename T>
ModelParams<T> ModelParams<T>::initialize(const ModelConfig& config, std::uint64_t seed) {
  ModelParams<T> params(config);
  Rng rng(seed);
  for (auto& t : params.tensors()) {
    auto& m = t.value;
    if (ends_with(t.name, ".bias")) continue;
    if (t.name.starts_with("emb.")) {
      for (Index j = 0; j < m.cols(); ++j)
        for (Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<T>(rng.normal(0.0, 0.01));
      continue;
    }
    // Column vectors (v1 cross weight, attention score) map length -> scalar.
    const double fan_in = m.cols() == 1 ? static_cast<double>(m.rows()) : static_cast<double>(m.cols());
    const double fan_out = m.cols() == 1 ? 1.0 : static_cast<double>(m.rows());
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<T>(rng.uniform(-a, a));
  }
  return params;
}

template <typename T>
RowVector<T> ForwardTrace<T>::prediction() const {
  return fsd::average_prediction<T>(std::span<const RowVector<T>>(probs));
}

template <typename T>
Matrix<T> embed(const Batch& batch, const ParamSet<T>& params) {
  const auto& config = params.config();
  const int f = config.num_fields();
  const int d = config.embed_dim;
  if (batch.field_count != f) {
    throw ShapeError("batch has " + std::to_string(batch.field_count) + " fields, model expects " +
                     std::to_string(f));
  }
  const Index B = batch.size();
  if (static_cast<Index>(batch.indices.size()) != B * f) {
    throw ShapeError("batch index array does not match batch size x field count");
  }
  Matrix<T> h(static_cast<Index>(f) * d, B);
  for (Index j = 0; j < B; ++j) {
    for (int i = 0; i < f; ++i) {
      const std::uint32_t idx = batch.indices[static_cast<std::size_t>(j * f + i)];
      const auto& table = params.embedding(i);
      if (idx >= static_cast<std::uint32_t>(table.rows())) {
        throw LookupError("index " + std::to_string(idx) + " out of range for field " +
                          std::to_string(i) + " (vocabulary size " + std::to_string(table.rows()) +
                          ")");
      }
      h.block(static_cast<Index>(i) * d, j, d, 1) = table.row(idx).transpose();
    }
  }
  return h;
}

template <typename T>
Matrix<T> cross_forward(const Matrix<T>& c0, const Matrix<T>& cl, const Matrix<T>& weight,
                        const Matrix<T>& bias, CrossVariant variant) {
  const Index D = c0.rows();
  if (cl.rows() != D || cl.cols() != c0.cols() || bias.rows() != D || weight.rows() != D) {
    throw ShapeError("cross layer: dimension mismatch");
  }
  if (variant == CrossVariant::v2) {
    if (weight.cols() != D) throw ShapeError("cross layer v2: weight must be D x D");
    Matrix<T> u = weight * cl;
    u.colwise() += bias.col(0);
    return c0.cwiseProduct(u) + cl;
  }
  if (weight.cols() != 1) throw ShapeError("cross layer v1: weight must be a length-D vector");
  const RowVector<T> s = weight.col(0).transpose() * cl;
  Matrix<T> out = c0 * s.asDiagonal();
  out.colwise() += bias.col(0);
  return out + cl;
}

template <typename T>
Matrix<T> deep_forward(const Matrix<T>& input, const Matrix<T>& weight, const Matrix<T>& bias) {
  if (weight.cols() != input.rows() || bias.rows() != weight.rows()) {
    throw ShapeError("deep layer: weight is " + std::to_string(weight.rows()) + "x" +
                     std::to_string(weight.cols()) + " but input width is " +
                     std::to_string(input.rows()));
  }
  Matrix<T> a = weight * input;
  a.colwise() += bias.col(0);
  return a.cwiseMax(T(0));
}

template <typename T>
ForwardTrace<T> network_forward(const Batch& batch, const ParamSet<T>& params) {
  const auto& config = params.config();
  const int n = config.num_layers();
  ForwardTrace<T> trace;
  trace.indices.assign(batch.indices.begin(), batch.indices.end());
  trace.field_count = batch.field_count;
  trace.batch = batch.size();
  trace.h = embed(batch, params);

  trace.cross.reserve(n);
  trace.cross_pre.reserve(n);
  trace.deep.reserve(n);
  trace.deep_pre.reserve(n);
  for (int l = 0; l < n; ++l) {
    const Matrix<T>& c_prev = trace.cross_at(l);
    const Matrix<T>& w = params.cross_weight(l);
    const Matrix<T>& b = params.cross_bias(l);
    if (config.cross_variant == CrossVariant::v2) {
      Matrix<T> u = w * c_prev;
      u.colwise() += b.col(0);
      trace.cross.push_back(trace.h.cwiseProduct(u) + c_prev);
      trace.cross_pre.push_back(std::move(u));
    } else {
      Matrix<T> s = w.col(0).transpose() * c_prev;
      Matrix<T> c = trace.h * s.row(0).asDiagonal();
      c.colwise() += b.col(0);
      c += c_prev;
      trace.cross.push_back(std::move(c));
      trace.cross_pre.push_back(std::move(s));
    }

    const Matrix<T>& d_prev = trace.deep_at(l);
    Matrix<T> a = params.deep_weight(l) * d_prev;
    a.colwise() += params.deep_bias(l).col(0);
    trace.deep.push_back(a.cwiseMax(T(0)));
    trace.deep_pre.push_back(std::move(a));
  }

  const bool fused = config.fusion_input == FusionInput::fused;
  for (int l = 1; l <= n; ++l) {
    const Matrix<T>& c = trace.cross_at(l);
    const Matrix<T>& d = trace.deep_at(l);
    if (!fused) {
      trace.fusion.push_back(d);
      continue;
    }
    switch (config.combination) {
      case Combination::SC:
        trace.fusion.push_back(fsd::combine_sc(c, d));
        break;
      case Combination::HP:
      case Combination::PA: {
        Matrix<T> dt = fsd::project(d, params.proj_weight(l - 1), params.proj_bias(l - 1));
        trace.fusion.push_back(config.combination == Combination::HP ? fsd::combine_hp(c, dt)
                                                                     : fsd::combine_pa(c, dt));
        trace.projected.push_back(std::move(dt));
        break;
      }
      case Combination::AD: {
        AttentionCache<T> cache;
        for (int branch = 0; branch < 2; ++branch) {
          cache.scores[branch] = fsd::attention_score(
              branch == 0 ? c : d, params.att_weight(l - 1, branch), params.att_bias(l - 1, branch),
              params.att_score(l - 1, branch), cache.hidden_pre[branch]);
        }
        auto [alpha, beta] = fsd::pair_softmax(cache.scores[0], cache.scores[1]);
        cache.weights[0] = std::move(alpha);
        cache.weights[1] = std::move(beta);
        trace.fusion.push_back(fsd::combine_ad(c, d, cache.weights[0], cache.weights[1]));
        trace.attention.push_back(std::move(cache));
        break;
      }
    }
  }

  const auto heads = config.head_layers();
  for (std::size_t k = 0; k < heads.size(); ++k) {
    const int head = static_cast<int>(k);
    auto out = fsd::head_predict(trace.fusion[static_cast<std::size_t>(heads[k] - 1)],
                                 params.head_weight(head), params.head_bias(head));
    trace.logits.push_back(std::move(out.logits));
    trace.probs.push_back(std::move(out.probs));
  }
  return trace;
}

namespace {

// Adds the gradient flowing out of f_l into c_l and d_l, and accumulates the
// combination parameters' gradients.
template <typename T>
void combine_backward(int l, const Matrix<T>& g_f, const ForwardTrace<T>& trace,
                      const ParamSet<T>& params, GradientBundle<T>& grads, Matrix<T>& g_c,
                      Matrix<T>& g_d) {
  const auto& config = params.config();
  const Index D = config.input_dim();
  const Index H = config.hidden_dim();
  if (config.fusion_input == FusionInput::deep_only) {
    g_d += g_f;
    return;
  }
  const Matrix<T>& c = trace.cross_at(l);
  const Matrix<T>& d = trace.deep_at(l);
  switch (config.combination) {
    case Combination::SC:
      g_c += g_f.topRows(D);
      g_d += g_f.bottomRows(H);
      return;
    case Combination::HP:
    case Combination::PA: {
      const Matrix<T>& dt = trace.projected[static_cast<std::size_t>(l - 1)];
      const auto g1 = g_f.topRows(D);
      const auto g2 = g_f.middleRows(D, D);
      const auto g3 = g_f.bottomRows(D);
      Matrix<T> g_dt;
      if (config.combination == Combination::HP) {
        g_c += g1.cwiseProduct(dt) + g2;
        g_dt = g1.cwiseProduct(c) + g3;
      } else {
        g_c += g1 + g2;
        g_dt = g1 + g3;
      }
      grads.proj_weight(l - 1).noalias() += g_dt * d.transpose();
      grads.proj_bias(l - 1) += g_dt.rowwise().sum();
      g_d.noalias() += params.proj_weight(l - 1).transpose() * g_dt;
      return;
    }
    case Combination::AD: {
      const auto& cache = trace.attention[static_cast<std::size_t>(l - 1)];
      const RowVector<T>& alpha = cache.weights[0];
      const RowVector<T>& beta = cache.weights[1];
      const auto g1 = g_f.topRows(D);
      const auto g2 = g_f.bottomRows(H);
      g_c += g1 * (alpha.array() + T(1)).matrix().asDiagonal();
      g_d += g2 * (beta.array() + T(1)).matrix().asDiagonal();
      const RowVector<T> d_alpha = g1.cwiseProduct(c).colwise().sum();
      const RowVector<T> d_beta = g2.cwiseProduct(d).colwise().sum();
      const RowVector<T> dot = alpha.cwiseProduct(d_alpha) + beta.cwiseProduct(d_beta);
      const std::array<RowVector<T>, 2> d_score = {alpha.cwiseProduct(d_alpha - dot),
                                                    beta.cwiseProduct(d_beta - dot)};
      for (int branch = 0; branch < 2; ++branch) {
        const Matrix<T>& q = cache.hidden_pre[branch];
        const Matrix<T> r = q.cwiseMax(T(0));
        const Matrix<T>& p = params.att_score(l - 1, branch);
        grads.att_score(l - 1, branch).noalias() += r * d_score[branch].transpose();
        const Matrix<T> g_q =
            (p * d_score[branch]).cwiseProduct((q.array() > T(0)).template cast<T>().matrix());
        const Matrix<T>& x = branch == 0 ? c : d;
        grads.att_weight(l - 1, branch).noalias() += g_q * x.transpose();
        grads.att_bias(l - 1, branch) += g_q.rowwise().sum();
        (branch == 0 ? g_c : g_d).noalias() += params.att_weight(l - 1, branch).transpose() * g_q;
      }
      return;
    }
  }
}

}  // namespace

template <typename T>
GradientBundle<T> network_backward(const ForwardTrace<T>& trace, const Upstream<T>& upstream,
                                   const ParamSet<T>& params) {
  const auto& config = params.config();
  const int n = config.num_layers();
  const Index B = trace.batch;
  const Index D = config.input_dim();
  const Index H = config.hidden_dim();
  if (trace.depth() != n) throw ShapeError("trace depth does not match the model");
  const auto heads = config.head_layers();
  if (!upstream.d_logits.empty() && upstream.d_logits.size() != heads.size()) {
    throw ShapeError("upstream logit gradients do not match the head count");
  }

  GradientBundle<T> grads = GradientBundle<T>::zeros_like(params);
  std::vector<Matrix<T>> g_f(static_cast<std::size_t>(n));
  for (auto& g : g_f) g = Matrix<T>::Zero(config.fusion_dim(), B);

  for (std::size_t k = 0; k < upstream.d_logits.size(); ++k) {
    const RowVector<T>& dz = upstream.d_logits[k];
    if (dz.size() == 0) continue;
    if (dz.cols() != B) throw ShapeError("upstream logit gradient has wrong batch size");
    const int head = static_cast<int>(k);
    const auto layer = static_cast<std::size_t>(heads[k] - 1);
    grads.head_weight(head).noalias() += dz * trace.fusion[layer].transpose();
    grads.head_bias(head)(0, 0) += dz.sum();
    g_f[layer].noalias() += params.head_weight(head).transpose() * dz;
  }
  for (std::size_t l = 0; l < upstream.d_fusion.size() && l < g_f.size(); ++l) {
    if (upstream.d_fusion[l].size() == 0) continue;
    if (upstream.d_fusion[l].rows() != g_f[l].rows() || upstream.d_fusion[l].cols() != B) {
      throw ShapeError("upstream fusion gradient has wrong shape");
    }
    g_f[l] += upstream.d_fusion[l];
  }

  // Gradients w.r.t. c_l and d_l for l = 0..n.
  std::vector<Matrix<T>> g_c(static_cast<std::size_t>(n + 1), Matrix<T>::Zero(D, B));
  std::vector<Matrix<T>> g_d(static_cast<std::size_t>(n + 1), Matrix<T>::Zero(H, B));
  g_d[0] = Matrix<T>::Zero(D, B);
  for (int l = 1; l <= n; ++l) {
    combine_backward(l, g_f[static_cast<std::size_t>(l - 1)], trace, params, grads,
                     g_c[static_cast<std::size_t>(l)], g_d[static_cast<std::size_t>(l)]);
  }

  for (int l = n; l >= 1; --l) {
    const auto li = static_cast<std::size_t>(l);
    const Matrix<T>& pre = trace.deep_pre[li - 1];
    const Matrix<T> g_a = g_d[li].cwiseProduct((pre.array() > T(0)).template cast<T>().matrix());
    grads.deep_weight(l - 1).noalias() += g_a * trace.deep_at(l - 1).transpose();
    grads.deep_bias(l - 1) += g_a.rowwise().sum();
    g_d[li - 1].noalias() += params.deep_weight(l - 1).transpose() * g_a;
  }

  Matrix<T> g_h = Matrix<T>::Zero(D, B);
  for (int l = n; l >= 1; --l) {
    const auto li = static_cast<std::size_t>(l);
    const Matrix<T>& g = g_c[li];
    const Matrix<T>& c_prev = trace.cross_at(l - 1);
    const Matrix<T>& pre = trace.cross_pre[li - 1];
    if (config.cross_variant == CrossVariant::v2) {
      const Matrix<T> g_u = g.cwiseProduct(trace.h);
      grads.cross_weight(l - 1).noalias() += g_u * c_prev.transpose();
      grads.cross_bias(l - 1) += g_u.rowwise().sum();
      g_c[li - 1].noalias() += params.cross_weight(l - 1).transpose() * g_u;
      g_h += g.cwiseProduct(pre);
    } else {
      const RowVector<T> g_s = g.cwiseProduct(trace.h).colwise().sum();
      grads.cross_weight(l - 1).noalias() += c_prev * g_s.transpose();
      grads.cross_bias(l - 1) += g.rowwise().sum();
      g_c[li - 1].noalias() += params.cross_weight(l - 1) * g_s;
      g_h += g * pre.row(0).asDiagonal();
    }
    g_c[li - 1] += g;
  }
  g_h += g_c[0] + g_d[0];

  const int f = config.num_fields();
  const int d = config.embed_dim;
  for (Index j = 0; j < B; ++j) {
    for (int i = 0; i < f; ++i) {
      const std::uint32_t idx = trace.indices[static_cast<std::size_t>(j * f + i)];
      grads.embedding(i).row(idx) += g_h.block(static_cast<Index>(i) * d, j, d, 1).transpose();
    }
  }

  grads.check_finite("backward pass");
  return grads;
}

#define FSDNET_INSTANTIATE(T)                                                                   \
  template class ParamSet<T>;                                                                   \
  template class ModelParams<T>;                                                                \
  template struct ForwardTrace<T>;                                                              \
  template Matrix<T> embed<T>(const Batch&, const ParamSet<T>&);                                \
  template Matrix<T> cross_forward<T>(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&,     \
                                      const Matrix<T>&, CrossVariant);                          \
  template Matrix<T> deep_forward<T>(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&);     \
  template ForwardTrace<T> network_forward<T>(const Batch&, const ParamSet<T>&);                \
  template GradientBundle<T> network_backward<T>(const ForwardTrace<T>&, const Upstream<T>&,    \
                                                 const ParamSet<T>&);

FSDNET_INSTANTIATE(float)
FSDNET_INSTANTIATE(double)

#undef FSDNET_INSTANTIATE

}  // namespace fsdnet::net
