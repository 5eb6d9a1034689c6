#include "fsdnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/special_functions/beta.hpp>

namespace fsdnet::metrics {

json EvalResult::to_json() const {
  return {{"auc", auc}, {"logloss", logloss}, {"n", n}, {"positives", positives}};
}

double auc(std::span<const double> predictions, std::span<const std::uint8_t> labels) {
  if (predictions.size() != labels.size()) throw MetricError("auc: prediction/label length mismatch");
  const std::size_t n = predictions.size();
  std::size_t positives = 0;
  for (auto y : labels) positives += y ? 1 : 0;
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw MetricError("auc is undefined when only one class is present");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return predictions[a] < predictions[b]; });

  // Sum of 1-based ranks of the positives, ties averaged.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && predictions[order[j + 1]] == predictions[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]]) rank_sum += avg_rank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(positives);
  const double nn = static_cast<double>(negatives);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double logloss(std::span<const double> predictions, std::span<const std::uint8_t> labels) {
  if (predictions.size() != labels.size()) {
    throw MetricError("logloss: prediction/label length mismatch");
  }
  if (predictions.empty()) throw MetricError("logloss of an empty set");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double p = std::clamp(predictions[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    sum -= labels[i] ? std::log(p) : std::log1p(-p);
  }
  return sum / static_cast<double>(predictions.size());
}

EvalResult evaluate(std::span<const double> predictions, std::span<const std::uint8_t> labels) {
  EvalResult r;
  r.n = labels.size();
  r.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  r.auc = auc(predictions, labels);
  r.logloss = logloss(predictions, labels);
  return r;
}

json SignificanceReport::to_json() const {
  return {{"group_a", group_a}, {"group_b", group_b}, {"mean_a", mean_a}, {"mean_b", mean_b},
          {"t", t},             {"df", df},           {"p_value", p_value}, {"test", "welch_two_tailed"}};
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_stddev(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

SignificanceReport t_test(std::span<const double> group_a, std::span<const double> group_b) {
  if (group_a.size() != group_b.size() || group_a.size() < 2) {
    throw MetricError("t_test needs two groups of equal length >= 2");
  }
  SignificanceReport r;
  r.group_a.assign(group_a.begin(), group_a.end());
  r.group_b.assign(group_b.begin(), group_b.end());
  r.mean_a = mean(group_a);
  r.mean_b = mean(group_b);
  const double na = static_cast<double>(group_a.size());
  const double nb = static_cast<double>(group_b.size());
  const double sa = sample_stddev(group_a);
  const double sb = sample_stddev(group_b);
  const double va = sa * sa / na;
  const double vb = sb * sb / nb;
  const double se2 = va + vb;
  const double diff = r.mean_a - r.mean_b;

  if (se2 == 0.0) {
    r.df = na + nb - 2.0;
    if (diff == 0.0) {
      r.t = 0.0;
      r.p_value = 1.0;
    } else {
      r.t = diff > 0 ? std::numeric_limits<double>::infinity()
                     : -std::numeric_limits<double>::infinity();
      r.p_value = 0.0;
    }
    return r;
  }

  r.t = diff / std::sqrt(se2);
  r.df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  // Two-tailed tail probability of Student's t: I_{df/(df+t^2)}(df/2, 1/2).
  const double x = r.df / (r.df + r.t * r.t);
  r.p_value = std::clamp(boost::math::ibeta(r.df / 2.0, 0.5, x), 0.0, 1.0);
  return r;
}

}  // namespace fsdnet::metrics
