#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fsdnet/checkpoint.hpp"
#include "fsdnet/rng.hpp"
#include "fsdnet/trainer.hpp"

using namespace fsdnet;
using namespace fsdnet::train;
using featurestore::EncodedDataset;

namespace {

// Two fields with 10 categories each; the label is a threshold on field 0,
// so the set is linearly separable in the embedding of that field.
EncodedDataset separable(std::size_t n, std::uint64_t seed) {
  EncodedDataset d(2);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = static_cast<std::uint32_t>(rng.below(10));
    const auto b = static_cast<std::uint32_t>(rng.below(10));
    const std::uint32_t idx[2] = {a, b};
    d.push_back(idx, static_cast<std::uint8_t>(a < 5));
  }
  return d;
}

net::ModelConfig toy_model() {
  net::ModelConfig c;
  c.vocab_sizes = {10, 10};
  c.embed_dim = 4;
  c.hidden_units = {16, 16};
  return c;
}

json strip_timing(json doc) {
  doc.erase("seconds");
  doc.erase("wall_seconds");
  doc.erase("best_checkpoint");
  doc.erase("config_digest");
  if (doc.contains("epochs")) {
    for (auto& e : doc["epochs"]) e.erase("seconds");
  }
  return doc;
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.learning_rate = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.early_stop_patience = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.lr_reduce_factor = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  CHECK(TrainConfig::from_json(c.to_json()).to_json() == c.to_json());
  CHECK(c.learning_rate == 1e-3);
  CHECK(c.early_stop_patience == 2);
  CHECK(c.lr_reduce_factor == 0.1);
  CHECK(c.monitor == Monitor::val_auc);
}

TEST_CASE("adam") {
  net::ModelConfig c;
  c.vocab_sizes = {2};
  c.embed_dim = 1;
  c.hidden_units = {1};
  net::ParamSet<double> p(c);
  for (auto& t : p.tensors()) t.value.setConstant(0.5);
  const auto before = p;

  SUBCASE("zero gradient leaves parameters unchanged") {
    auto state = AdamState<double>::fresh(p);
    adam_step(p, net::GradientBundle<double>::zeros_like(p), state, 1e-3);
    for (std::size_t i = 0; i < p.tensors().size(); ++i) {
      CHECK(p.tensors()[i].value == before.tensors()[i].value);
    }
    CHECK(state.step == 1);
  }
  SUBCASE("first step moves each parameter by about lr against the gradient") {
    auto state = AdamState<double>::fresh(p);
    auto g = net::GradientBundle<double>::zeros_like(p);
    double gv = 0.3;
    for (auto& t : g.tensors()) {
      t.value.setConstant(gv);
      gv = -gv * 1.7;
    }
    const double lr = 1e-3;
    adam_step(p, g, state, lr);
    for (std::size_t i = 0; i < p.tensors().size(); ++i) {
      const double grad = g.tensors()[i].value(0, 0);
      const double delta = p.tensors()[i].value(0, 0) - before.tensors()[i].value(0, 0);
      CHECK(delta * grad < 0);
      CHECK(std::abs(delta) == doctest::Approx(lr * std::abs(grad) / (std::abs(grad) + 1e-8)).epsilon(1e-12));
      CHECK(std::abs(delta) == doctest::Approx(lr).epsilon(1e-6));
    }
    for (const auto& t : state.v.tensors()) CHECK((t.value.array() >= 0).all());
  }
  SUBCASE("non-finite gradients abort") {
    auto state = AdamState<double>::fresh(p);
    auto g = net::GradientBundle<double>::zeros_like(p);
    g.tensors()[0].value(0, 0) = INFINITY;
    CHECK_THROWS_AS(adam_step(p, g, state, 1e-3), NumericalError);
  }
}

TEST_CASE("plateau controller") {
  TrainConfig c;
  SUBCASE("early stop trace") {
    PlateauController pc(c, 1e-3);
    const double seq[] = {0.80, 0.81, 0.81, 0.81};
    int stopped_at = 0;
    std::vector<double> lrs;
    for (int e = 0; e < 4; ++e) {
      const auto s = pc.observe(seq[e]);
      lrs.push_back(pc.lr());
      if (s.stop) {
        stopped_at = e + 1;
        break;
      }
    }
    CHECK(stopped_at == 4);
    CHECK(pc.best_epoch() == 2);
    CHECK(*pc.best() == 0.81);
    CHECK(lrs[2] == doctest::Approx(1e-4));  // one plateau event, factor ten
  }
  SUBCASE("strict improvement never stops and never reduces") {
    PlateauController pc(c, 1e-3);
    for (int e = 0; e < 50; ++e) {
      const auto s = pc.observe(0.5 + 0.001 * e);
      CHECK(s.improved);
      CHECK_FALSE(s.stop);
    }
    CHECK(pc.lr() == 1e-3);
  }
  SUBCASE("improvements below the threshold do not count") {
    PlateauController pc(c, 1e-3);
    pc.observe(0.7);
    CHECK_FALSE(pc.observe(0.7 + 5e-7).improved);
  }
  SUBCASE("lr is non-increasing and floored at min_lr") {
    c.early_stop_patience = 100;
    PlateauController pc(c, 1e-3);
    double prev = pc.lr();
    pc.observe(0.5);
    for (int e = 0; e < 10; ++e) {
      pc.observe(0.4);
      CHECK(pc.lr() <= prev);
      CHECK(pc.lr() >= c.min_lr);
      prev = pc.lr();
    }
    CHECK(pc.lr() == c.min_lr);
  }
  SUBCASE("logloss monitor prefers lower values") {
    c.monitor = Monitor::val_logloss;
    PlateauController pc(c, 1e-3);
    pc.observe(0.5);
    CHECK(pc.observe(0.4).improved);
    CHECK_FALSE(pc.observe(0.45).improved);
  }
}

TEST_CASE("batching keeps the last partial batch") {
  const auto data = separable(25, 1);
  std::vector<std::size_t> order(25);
  for (std::size_t i = 0; i < 25; ++i) order[i] = i;
  std::vector<std::uint32_t> ib;
  std::vector<std::uint8_t> lb;
  std::vector<Index> sizes;
  for (std::size_t b = 0; b < 25; b += 10) {
    sizes.push_back(make_batch(data, order, b, std::min<std::size_t>(b + 10, 25), ib, lb).size());
  }
  CHECK(sizes == std::vector<Index>{10, 10, 5});

  auto params = net::ModelParams<float>::initialize(toy_model(), 1);
  auto adam = AdamState<float>::fresh(params);
  TrainConfig tc;
  tc.batch_size = 10;
  const auto m = run_epoch(params, adam, data, nullptr, {}, tc, 1e-3, 1);
  CHECK(m.batches == 3);
  CHECK(adam.step == 3);
  CHECK_FALSE(m.validation.has_value());
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const auto data = separable(40, 2);
  auto params = net::ModelParams<float>::initialize(toy_model(), 1);
  const auto before = params;
  auto adam = AdamState<float>::fresh(params);
  TrainConfig tc;
  tc.batch_size = 16;
  run_epoch(params, adam, data, &data, {}, tc, 0.0, 1);
  for (std::size_t i = 0; i < params.tensors().size(); ++i) {
    CHECK(params.tensors()[i].value == before.tensors()[i].value);
  }
}

TEST_CASE("loss decreases on a learnable toy problem") {
  const auto data = separable(100, 3);
  auto params = net::ModelParams<float>::initialize(toy_model(), 5);
  const fsd::ObjectiveConfig obj;
  const double initial = dataset_objective(params, data, obj).total;
  auto adam = AdamState<float>::fresh(params);
  TrainConfig tc;
  tc.batch_size = 10;
  for (int e = 1; e <= 50; ++e) run_epoch(params, adam, data, nullptr, obj, tc, 1e-2, e);
  const double final_loss = dataset_objective(params, data, obj).total;
  CAPTURE(initial);
  CAPTURE(final_loss);
  CHECK(final_loss < 0.25 * initial);
  CHECK(evaluate_model(params, data).auc > 0.99);
}

TEST_CASE("fit: determinism, best-checkpoint restore and artifacts") {
  const auto train_set = separable(300, 7);
  const auto val = separable(100, 8);
  const auto test = separable(100, 9);
  TrainConfig tc;
  tc.batch_size = 32;
  tc.max_epochs = 12;
  tc.seed = 4;
  const fsd::ObjectiveConfig obj;
  const auto dir = std::filesystem::temp_directory_path() / "fsdnet_fit_test";
  std::filesystem::remove_all(dir);

  auto p1 = net::ModelParams<float>::initialize(toy_model(), 4);
  FitOptions opts;
  opts.out_dir = dir;
  opts.run_metadata = {{"spec_digest", "feedface"}};
  const auto r1 = fit(p1, train_set, val, test, obj, tc, opts);

  auto p2 = net::ModelParams<float>::initialize(toy_model(), 4);
  const auto r2 = fit(p2, train_set, val, test, obj, tc);
  CHECK(strip_timing(r1.to_json()) == strip_timing(r2.to_json()));
  for (std::size_t i = 0; i < p1.tensors().size(); ++i) {
    CHECK(p1.tensors()[i].value == p2.tensors()[i].value);
  }

  CHECK(r1.config_digest == "feedface");
  CHECK(r1.best_epoch >= 1);
  CHECK(r1.best_epoch <= static_cast<int>(r1.epochs.size()));
  REQUIRE(r1.test.has_value());

  // Test metrics come from the restored best model, which is also best.ckpt.
  const auto again = evaluate_model(p1, test);
  CHECK(again.auc == r1.test->auc);
  CHECK(again.logloss == r1.test->logloss);
  const auto best = net::load_checkpoint(dir / "best.ckpt");
  for (std::size_t i = 0; i < p1.tensors().size(); ++i) {
    CHECK(best.params.tensors()[i].value == p1.tensors()[i].value);
  }
  CHECK(std::filesystem::exists(dir / "last.ckpt"));
  CHECK(best.metadata.at("spec_digest") == "feedface");

  // The best epoch holds the best monitor value seen.
  double best_seen = -1.0;
  for (const auto& e : r1.epochs) best_seen = std::max(best_seen, e.validation->auc);
  CHECK(r1.best_monitor == best_seen);

  // lr is non-increasing over the run.
  for (std::size_t i = 1; i < r1.epochs.size(); ++i) CHECK(r1.epochs[i].lr <= r1.epochs[i - 1].lr);

  // One JSON line per epoch with the loss components.
  std::ifstream log(dir / "train_log.jsonl");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(log, line)) {
    const auto doc = json::parse(line);
    for (const char* k : {"epoch", "lr", "L", "L_CE", "L_KL", "L_MSE", "val_auc", "val_logloss", "seconds"}) {
      CHECK(doc.contains(k));
    }
    ++lines;
  }
  CHECK(lines == r1.epochs.size());
  if (r1.stop_reason == StopReason::max_epochs) CHECK(r1.epochs.size() == 12);
}
