#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "fsdnet/common.hpp"

namespace fsdnet::metrics {

using nlohmann::json;

inline constexpr double kProbabilityClamp = 1e-7;

struct EvalResult {
  double auc = 0.5;
  double logloss = 0.0;
  std::size_t n = 0;
  std::size_t positives = 0;

  json to_json() const;
};

// Mann-Whitney rank AUC; tied predictions share their average rank. Throws
// MetricError when labels contain a single class.
double auc(std::span<const double> predictions, std::span<const std::uint8_t> labels);

// Mean BCE with predictions clamped to [1e-7, 1 - 1e-7].
double logloss(std::span<const double> predictions, std::span<const std::uint8_t> labels);

EvalResult evaluate(std::span<const double> predictions, std::span<const std::uint8_t> labels);

struct SignificanceReport {
  std::vector<double> group_a;
  std::vector<double> group_b;
  double mean_a = 0.0;
  double mean_b = 0.0;
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;  // two-tailed

  json to_json() const;
};

// Welch's unequal-variance two-sample t-test, two-tailed.
SignificanceReport t_test(std::span<const double> group_a, std::span<const double> group_b);

double mean(std::span<const double> values);
double sample_stddev(std::span<const double> values);

}  // namespace fsdnet::metrics
