// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when any
// criterion fails. Dataset-backed criteria read prepared dataset directories
// (output of `fsdnet prepare`) from FSDNET_FRAPPE_DIR and FSDNET_ML1M_DIR.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "fsdnet/experiment.hpp"
#include "fsdnet/fusion.hpp"
#include "fsdnet/gradcheck.hpp"
#include "fsdnet/metrics.hpp"
#include "fsdnet/rng.hpp"

using namespace fsdnet;
namespace ex = fsdnet::experiment;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kGradTol = 1e-5;
constexpr double kGradSeconds = 60.0;
constexpr double kLossIdentityTol = 1e-12;
constexpr double kAucOracleTol = 1e-12;
constexpr double kTTestPTol = 1e-3;
constexpr double kTTestExpectedP = 0.0080;  // Welch, df = 4, t = 4.898979
constexpr double kFrappeAuc = 0.980, kFrappeLogloss = 0.165;
constexpr double kMl1mAuc = 0.810, kMl1mLogloss = 0.520;
const std::vector<std::uint64_t> kSeeds{1, 2, 3};

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] %d. %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream out;
  out.precision(precision);
  out << v;
  return out.str();
}

// ------------------------------------------------------------------ 1-3, 9, 10

void criterion_gradients() {
  gradcheck::ToyOptions toy;  // 2 fields, d=4, H=8, n=2, batch 8, SC
  const auto problem = gradcheck::make_toy_problem(toy);
  const fsd::ObjectiveConfig obj{0.5, 1.5, 0.01};
  const auto report_ = gradcheck::check(problem.params, problem.batch(), obj, 1e-5);
  const bool pass = report_.max_rel_error <= kGradTol && report_.seconds < kGradSeconds;
  report(1, "gradient oracle", pass,
         "max rel error " + fmt(report_.max_rel_error, 3) + " over " +
             std::to_string(report_.tensors.size()) + " tensors (<= " + fmt(kGradTol) + "), " +
             fmt(report_.seconds, 3) + " s (< 60 s)");
}

// Plain BCE from a logit, written independently of the library.
double bce_oracle(double z, int y) {
  const double p = 1.0 / (1.0 + std::exp(-z));
  return -(y * std::log(p) + (1 - y) * std::log(1 - p));
}

void criterion_loss_identities() {
  gradcheck::ToyOptions toy;
  toy.layers = 3;
  toy.embedding_scale = 5.0;
  auto problem = gradcheck::make_toy_problem(toy);
  const auto batch = problem.batch();
  const auto& config = problem.params.config();
  auto loss = [&](const net::ParamSet<double>& p, const fsd::ObjectiveConfig& c) {
    const auto trace = net::network_forward(batch, p);
    return fsd::total_objective(trace, problem.labels, c, config).loss;
  };

  // (a) mu=1, gamma=0: L equals the per-layer BCE sum.
  const auto trace = net::network_forward(batch, problem.params);
  double bce_sum = 0.0;
  for (const auto& z : trace.logits) {
    double layer = 0.0;
    for (Index j = 0; j < z.cols(); ++j) layer += bce_oracle(z(j), problem.labels[static_cast<std::size_t>(j)]);
    bce_sum += layer / static_cast<double>(z.cols());
  }
  const double err_a = std::abs(loss(problem.params, {1.0, 1.0, 0.0}).total - bce_sum);

  // (b) identical head logits: KL = 0.
  auto same_heads = problem.params;
  for (int k = 0; k < config.num_heads(); ++k) {
    same_heads.head_weight(k).setZero();
    same_heads.head_bias(k).setConstant(-0.4);
  }
  const double kl = loss(same_heads, {0.5, 1.0, 0.01}).kl;

  // (c) identical fusion vectors: MSE = 0 (zero cross layers, identity deep layers).
  auto same_fusion = problem.params;
  for (int l = 0; l < config.num_layers(); ++l) {
    same_fusion.cross_weight(l).setZero();
    same_fusion.cross_bias(l).setZero();
    if (l > 0) {
      same_fusion.deep_weight(l).setIdentity();
      same_fusion.deep_bias(l).setZero();
    }
  }
  const double mse = loss(same_fusion, {0.5, 1.0, 0.01}).mse;

  // (d) affine in mu and in gamma: three points on a line.
  auto affine_err = [&](auto make) {
    const double x[3] = {0.1, 0.35, 0.9};
    double y[3];
    for (int i = 0; i < 3; ++i) y[i] = loss(problem.params, make(x[i])).total;
    const double slope = (y[1] - y[0]) / (x[1] - x[0]);
    return std::abs(y[2] - (y[0] + slope * (x[2] - x[0])));
  };
  const double err_mu = affine_err([](double m) { return fsd::ObjectiveConfig{m, 1.0, 0.01}; });
  const double err_gamma = affine_err([](double g) { return fsd::ObjectiveConfig{0.5, 1.0, g}; });

  const bool pass = err_a <= kLossIdentityTol && kl == 0.0 && mse == 0.0 &&
                    err_mu <= kLossIdentityTol && err_gamma <= kLossIdentityTol;
  report(2, "loss identities", pass,
         "|L - sum BCE| = " + fmt(err_a, 3) + ", KL(equal logits) = " + fmt(kl, 3) +
             ", MSE(equal fusion) = " + fmt(mse, 3) + ", affine residual mu " + fmt(err_mu, 3) +
             " gamma " + fmt(err_gamma, 3) + " (tol 1e-12)");
}

void criterion_teacher_flow() {
  const auto problem = gradcheck::make_toy_problem({});
  const auto trace = net::network_forward(problem.batch(), problem.params);
  const double gap = (trace.logits.back() - trace.logits.front()).norm();
  // mu=0, gamma=0 isolates L_KL.
  const auto res = fsd::total_objective(trace, problem.labels, {0.0, 1.0, 0.0},
                                        problem.params.config());
  const auto grads = net::network_backward(trace, res.upstream, problem.params);
  const int teacher = problem.params.config().num_heads() - 1;
  const double norm = grads.head_weight(teacher).norm() + std::abs(grads.head_bias(teacher)(0, 0));
  report(3, "teacher-flow check", gap > 0.0 && norm > 0.0,
         "||dL_KL/d(teacher head)|| = " + fmt(norm, 4) + " with logit gap " + fmt(gap, 4));
}

void criterion_metrics() {
  Rng rng(2024);
  std::vector<double> p(200);
  std::vector<std::uint8_t> y(200);
  for (std::size_t i = 0; i < 200; ++i) {
    p[i] = std::round(rng.uniform() * 50.0) / 50.0;  // ties on purpose
    y[i] = static_cast<std::uint8_t>(rng.uniform() < 0.3 + 0.4 * p[i]);
  }
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < 200; ++i) {
    for (std::size_t j = 0; j < 200; ++j) {
      if (!y[i] || y[j]) continue;
      pairs += 1.0;
      wins += p[i] > p[j] ? 1.0 : (p[i] == p[j] ? 0.5 : 0.0);
    }
  }
  const double auc_err = std::abs(metrics::auc(p, y) - wins / pairs);
  const std::vector<double> a{0.5, 0.6, 0.7}, b{0.1, 0.2, 0.3};
  const auto t = metrics::t_test(a, b);
  const bool pass = auc_err <= kAucOracleTol && std::abs(t.p_value - kTTestExpectedP) <= kTTestPTol;
  report(9, "metrics oracles", pass,
         "|AUC - pairwise AUC| = " + fmt(auc_err, 3) + " (tol 1e-12); Welch t = " + fmt(t.t, 7) +
             ", df = " + fmt(t.df, 4) + ", p = " + fmt(t.p_value, 6) + " (expect 0.0080 +/- 1e-3)");
}

void criterion_scope_note() {
  const bool disc = featurestore::discretize_numeric(2.0) == 1 &&
                    featurestore::discretize_numeric(100.0) == 21 &&
                    featurestore::discretize_numeric(std::exp(2.0)) == 4;
  featurestore::Schema schema;
  schema.fields.push_back({"f", featurestore::FieldKind::categorical, 0});
  std::vector<featurestore::TokenRow> rows;
  for (const char* tok : {"a", "a", "a", "b"}) rows.push_back({rows.size() + 1, {tok}, 0});
  const auto vocab = featurestore::build_vocabulary(rows, schema, 2).at(0);
  const bool thresh = vocab.size() == 2 && vocab.encode("b") == vocab.oov_index();
  report(10, "Criteo/ML-tag full scale (not a target)", disc && thresh,
         "not an acceptance target; Criteo preprocessing path checked: discretize_numeric " +
             std::string(disc ? "ok" : "wrong") + ", vocabulary thresholding " +
             (thresh ? "ok" : "wrong"));
}

// ------------------------------------------------------------------ 4-8

struct Dataset {
  std::string name;
  std::optional<featurestore::PreparedDataset> data;
  std::string why;
};

Dataset open_dataset(const std::string& name, const char* env) {
  Dataset d{name, std::nullopt, ""};
  const char* dir = std::getenv(env);
  if (!dir || !*dir) {
    d.why = std::string("dataset unavailable: set ") + env + " to a prepared " + name + " directory";
    return d;
  }
  try {
    d.data = featurestore::load_prepared(dir);
  } catch (const std::exception& e) {
    d.why = std::string("cannot load ") + dir + ": " + e.what();
  }
  return d;
}

fs::path out_root() {
  const char* root = std::getenv("FSDNET_OUT_ROOT");
  return fs::path(root && *root ? root : fs::temp_directory_path().string()) / "acceptance";
}

// Trained outcomes keyed by a label; each configuration is trained once.
std::map<std::string, ex::TrainOutcome> cache;

const ex::TrainOutcome& train(const Dataset& d, const std::string& label, ex::ExperimentSpec spec) {
  const std::string key = d.name + "/" + label;
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  spec.seeds = kSeeds;
  spec.out_dir = out_root() / d.name / label;
  const auto start = std::chrono::steady_clock::now();
  auto outcome = ex::run_training(spec, *d.data);
  const double minutes =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
  std::printf("  trained %s: mean AUC %.5f, Logloss %.5f (%.1f min)\n", key.c_str(),
              outcome.mean_auc(), outcome.mean_logloss(), minutes);
  return cache.emplace(key, std::move(outcome)).first->second;
}

ex::ExperimentSpec paper_spec() { return ex::default_spec(); }

void criterion_reproduction(int id, const Dataset& d, double min_auc, double max_logloss) {
  const std::string name = d.name + " reproduction";
  if (!d.data) return report(id, name, false, d.why);
  const auto& o = train(d, "fsdnet", paper_spec());
  const bool pass = o.mean_auc() >= min_auc && o.mean_logloss() <= max_logloss;
  report(id, name, pass,
         "mean test AUC " + fmt(o.mean_auc()) + " (>= " + fmt(min_auc) + "), Logloss " +
             fmt(o.mean_logloss()) + " (<= " + fmt(max_logloss) + ") over 3 seeds");
}

void criterion_direction(const Dataset& frappe, const Dataset& ml1m) {
  const std::string name = "directional improvement over dcnv2";
  std::string missing;
  for (const auto* d : {&frappe, &ml1m}) {
    if (!d->data) missing += (missing.empty() ? "" : "; ") + d->why;
  }
  if (!missing.empty()) return report(6, name, false, missing);
  bool pass = true;
  std::string detail;
  for (const auto* d : {&frappe, &ml1m}) {
    const auto& fsdn = train(*d, "fsdnet", paper_spec());
    auto base = paper_spec();
    base.baseline = ex::Baseline::dcnv2;
    const auto& dcn = train(*d, "dcnv2", base);
    const auto t = metrics::t_test(fsdn.test_auc, dcn.test_auc);
    pass = pass && fsdn.mean_auc() > dcn.mean_auc();
    detail += d->name + ": FSDNet " + fmt(fsdn.mean_auc()) + " vs DCNv2 " + fmt(dcn.mean_auc()) +
              " (Welch p = " + fmt(t.p_value, 3) + ")  ";
  }
  report(6, name, pass, detail);
}

void criterion_noise(const Dataset& ml1m) {
  const std::string name = "noise robustness on ML-1M at 20%";
  if (!ml1m.data) return report(7, name, false, ml1m.why);
  auto clean_f = paper_spec();
  auto noisy_f = paper_spec();
  noisy_f.noise_fraction = 0.2;
  auto clean_b = paper_spec();
  clean_b.baseline = ex::Baseline::dcnv2;
  auto noisy_b = clean_b;
  noisy_b.noise_fraction = 0.2;
  const double drop_f =
      train(ml1m, "fsdnet", clean_f).mean_auc() - train(ml1m, "fsdnet_noise20", noisy_f).mean_auc();
  const double drop_b =
      train(ml1m, "dcnv2", clean_b).mean_auc() - train(ml1m, "dcnv2_noise20", noisy_b).mean_auc();
  report(7, name, drop_f < drop_b,
         "AUC decline FSDNet " + fmt(drop_f) + " vs DCNv2 " + fmt(drop_b));
}

void criterion_combinations(const Dataset& frappe) {
  const std::string name = "combination ordering on Frappe";
  if (!frappe.data) return report(8, name, false, frappe.why);
  std::map<std::string, double> mean;
  for (auto c : {net::Combination::SC, net::Combination::HP, net::Combination::PA,
                 net::Combination::AD}) {
    auto spec = paper_spec();
    spec.model.combination = c;
    const std::string label = c == net::Combination::SC ? "fsdnet" : "comb_" + std::string(net::to_string(c));
    mean[std::string(net::to_string(c))] = train(frappe, label, spec).mean_auc();
  }
  const bool pass = mean["SC"] >= mean["HP"] && mean["SC"] >= mean["PA"] && mean["SC"] >= mean["AD"];
  report(8, name, pass,
         "mean AUC SC " + fmt(mean["SC"]) + ", HP " + fmt(mean["HP"]) + ", PA " + fmt(mean["PA"]) +
             ", AD " + fmt(mean["AD"]));
}

}  // namespace

int main() {
  criterion_gradients();
  criterion_loss_identities();
  criterion_teacher_flow();

  const Dataset frappe = open_dataset("Frappe", "FSDNET_FRAPPE_DIR");
  const Dataset ml1m = open_dataset("ML-1M", "FSDNET_ML1M_DIR");
  auto guarded = [](int id, const std::string& name, auto fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, name, false, std::string("error: ") + e.what());
    }
  };
  guarded(4, "Frappe reproduction", [&] { criterion_reproduction(4, frappe, kFrappeAuc, kFrappeLogloss); });
  guarded(5, "ML-1M reproduction", [&] { criterion_reproduction(5, ml1m, kMl1mAuc, kMl1mLogloss); });
  guarded(6, "directional improvement over dcnv2", [&] { criterion_direction(frappe, ml1m); });
  guarded(7, "noise robustness on ML-1M at 20%", [&] { criterion_noise(ml1m); });
  guarded(8, "combination ordering on Frappe", [&] { criterion_combinations(frappe); });

  criterion_metrics();
  criterion_scope_note();

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
