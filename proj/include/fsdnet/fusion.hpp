#pragma once

// Layer-combination functions f_l = f(c_l, d_l) and the linear-sigmoid head.
// All functions take column-batched matrices; a single vector is a 1-column
// matrix.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>

#include "fsdnet/common.hpp"
#include "fsdnet/netcore.hpp"

namespace fsdnet::fsd {

using net::Combination;

template <typename T>
T sigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

// log(sigmoid(z)) without overflow: -softplus(-z).
template <typename T>
T log_sigmoid(T z) {
  if (z >= T(0)) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

template <typename T>
RowVector<T> sigmoid(const RowVector<T>& z) {
  return z.unaryExpr([](T v) { return sigmoid(v); });
}

// SC: [c; d].
template <typename T>
Matrix<T> combine_sc(const Matrix<T>& c, const Matrix<T>& d) {
  if (c.cols() != d.cols()) throw ShapeError("combine: batch size mismatch");
  Matrix<T> f(c.rows() + d.rows(), c.cols());
  f << c, d;
  return f;
}

// HP: [c * d_t; c; d_t] with d_t already projected to the length of c.
template <typename T>
Matrix<T> combine_hp(const Matrix<T>& c, const Matrix<T>& dt) {
  if (c.rows() != dt.rows() || c.cols() != dt.cols()) {
    throw ShapeError("combine HP: projected deep output must match the cross output");
  }
  Matrix<T> f(3 * c.rows(), c.cols());
  f << c.cwiseProduct(dt), c, dt;
  return f;
}

// PA: [c + d_t; c; d_t].
template <typename T>
Matrix<T> combine_pa(const Matrix<T>& c, const Matrix<T>& dt) {
  if (c.rows() != dt.rows() || c.cols() != dt.cols()) {
    throw ShapeError("combine PA: projected deep output must match the cross output");
  }
  Matrix<T> f(3 * c.rows(), c.cols());
  f << c + dt, c, dt;
  return f;
}

// AD: [alpha * c + c; beta * d + d] with per-sample weights alpha, beta.
template <typename T>
Matrix<T> combine_ad(const Matrix<T>& c, const Matrix<T>& d, const RowVector<T>& alpha,
                     const RowVector<T>& beta) {
  if (c.cols() != d.cols() || alpha.cols() != c.cols() || beta.cols() != c.cols()) {
    throw ShapeError("combine AD: batch size mismatch");
  }
  Matrix<T> f(c.rows() + d.rows(), c.cols());
  f.topRows(c.rows()) = c * (alpha.array() + T(1)).matrix().asDiagonal();
  f.bottomRows(d.rows()) = d * (beta.array() + T(1)).matrix().asDiagonal();
  return f;
}

// Linear map d_t = W d + b used by HP and PA.
template <typename T>
Matrix<T> project(const Matrix<T>& d, const Matrix<T>& weight, const Matrix<T>& bias) {
  if (weight.cols() != d.rows() || bias.rows() != weight.rows()) {
    throw ShapeError("projection: dimension mismatch");
  }
  Matrix<T> out = weight * d;
  out.colwise() += bias.col(0);
  return out;
}

// Scalar branch score p . ReLU(W x + b); hidden_pre receives W x + b.
template <typename T>
RowVector<T> attention_score(const Matrix<T>& x, const Matrix<T>& weight, const Matrix<T>& bias,
                             const Matrix<T>& score, Matrix<T>& hidden_pre) {
  if (weight.cols() != x.rows()) throw ShapeError("attention: dimension mismatch");
  hidden_pre = weight * x;
  hidden_pre.colwise() += bias.col(0);
  return score.col(0).transpose() * hidden_pre.cwiseMax(T(0));
}

// Joint softmax over the (cross, deep) score pair, per sample.
template <typename T>
std::pair<RowVector<T>, RowVector<T>> pair_softmax(const RowVector<T>& s_c,
                                                   const RowVector<T>& s_d) {
  RowVector<T> alpha(s_c.cols()), beta(s_c.cols());
  for (Index j = 0; j < s_c.cols(); ++j) {
    const T m = std::max(s_c(j), s_d(j));
    const T ec = std::exp(s_c(j) - m);
    const T ed = std::exp(s_d(j) - m);
    alpha(j) = ec / (ec + ed);
    beta(j) = ed / (ec + ed);
  }
  return {alpha, beta};
}

// Optional projection parameters for HP/PA.
template <typename T>
struct Projection {
  const Matrix<T>* weight = nullptr;
  const Matrix<T>* bias = nullptr;
};

// Method dispatch for SC/HP/PA. AD needs learned scores; use combine_ad.
template <typename T>
Matrix<T> combine(Combination method, const Matrix<T>& c, const Matrix<T>& d,
                  Projection<T> projection = {}) {
  switch (method) {
    case Combination::SC:
      return combine_sc(c, d);
    case Combination::HP:
    case Combination::PA: {
      if (projection.weight == nullptr || projection.bias == nullptr) {
        throw ConfigError("HP/PA combination requires a projection of the deep output");
      }
      const Matrix<T> dt = project(d, *projection.weight, *projection.bias);
      return method == Combination::HP ? combine_hp(c, dt) : combine_pa(c, dt);
    }
    case Combination::AD:
      throw ConfigError("AD combination requires attention parameters; call combine_ad");
  }
  throw ConfigError("unknown combination method");
}

template <typename T>
struct HeadOutput {
  RowVector<T> logits;
  RowVector<T> probs;
};

// z = w . f + b, y = sigmoid(z); weight is (1 x |f|), bias (1 x 1).
template <typename T>
HeadOutput<T> head_predict(const Matrix<T>& f, const Matrix<T>& weight, const Matrix<T>& bias) {
  if (weight.rows() != 1 || weight.cols() != f.rows()) {
    throw ShapeError("head: weight length " + std::to_string(weight.cols()) +
                     " does not match fusion width " + std::to_string(f.rows()));
  }
  HeadOutput<T> out;
  out.logits = weight * f;
  out.logits.array() += bias(0, 0);
  out.probs = sigmoid<T>(out.logits);
  return out;
}

// Arithmetic mean of the per-layer predictions.
template <typename T>
RowVector<T> average_prediction(std::span<const RowVector<T>> layer_probs) {
  if (layer_probs.empty()) throw ConfigError("average_prediction needs at least one layer");
  RowVector<T> mean = layer_probs.front();
  for (std::size_t i = 1; i < layer_probs.size(); ++i) mean += layer_probs[i];
  return mean / static_cast<T>(layer_probs.size());
}

}  // namespace fsdnet::fsd
