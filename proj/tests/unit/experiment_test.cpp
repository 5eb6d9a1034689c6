#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "fsdnet/experiment.hpp"

using namespace fsdnet;
using namespace fsdnet::experiment;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("fsdnet_exp_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Synthetic CSV prepared once for the whole file.
const fs::path& prepared_dir() {
  static const fs::path dir = [] {
    const auto root = fresh_dir("data");
    SyntheticOptions s;
    s.rows = 1200;
    s.fields = 3;
    s.cardinality = 8;
    s.numeric_field = true;
    write_synthetic(root / "data.csv", root / "schema.json", s);
    PrepareOptions p;
    p.input = root / "data.csv";
    p.schema = root / "schema.json";
    p.out_dir = root / "prepared";
    p.seed = 3;
    prepare_dataset(p);
    return root / "prepared";
  }();
  return dir;
}

ExperimentSpec small_spec() {
  ExperimentSpec s;
  s.data_dir = prepared_dir();
  s.model.embed_dim = 4;
  s.model.hidden_units = {8, 8};
  s.train.batch_size = 128;
  s.train.max_epochs = 3;
  s.seeds = {1, 2};
  return s;
}

}  // namespace

TEST_CASE("prepare is deterministic and records its settings") {
  const auto root = fresh_dir("prep");
  SyntheticOptions s;
  s.rows = 300;
  s.numeric_field = true;
  write_synthetic(root / "data.csv", root / "schema.json", s);
  PrepareOptions p;
  p.input = root / "data.csv";
  p.schema = root / "schema.json";
  p.min_count = 10;
  p.ratio = featurestore::SplitRatio::parse("7:2:1");
  p.seed = 11;
  p.out_dir = root / "a";
  const auto sum_a = prepare_dataset(p);
  p.out_dir = root / "b";
  prepare_dataset(p);

  for (const char* f : {"schema.json", "vocab.json", "train.bin", "train.json", "validation.bin",
                        "validation.json", "test.bin", "test.json", "summary.json"}) {
    CAPTURE(f);
    CHECK(slurp(root / "a" / f) == slurp(root / "b" / f));
  }
  CHECK(sum_a.fields == 5);
  CHECK(sum_a.instances == 300);
  CHECK(sum_a.split_sizes == std::array<std::size_t, 3>{210, 60, 30});
  const auto vocab = json::parse(slurp(root / "a" / "vocab.json"));
  CHECK(vocab.dump().find("\"min_count\":10") != std::string::npos);

  const auto data = featurestore::load_prepared(root / "a");
  CHECK(data.train.size() == 210);
  CHECK(data.vocab_sizes().size() == 5);
  CHECK_THROWS_AS(data.split("nope"), ConfigError);

  SUBCASE("vocabulary from all rows is a superset") {
    p.out_dir = root / "all";
    p.vocab_from_all = true;
    const auto sum_all = prepare_dataset(p);
    CHECK(sum_all.features >= sum_a.features);
  }
  SUBCASE("schema/CSV mismatch") {
    std::ofstream(root / "bad.csv") << "label,f0\n1,x\n";
    p.input = root / "bad.csv";
    p.out_dir = root / "bad";
    CHECK_THROWS_AS(prepare_dataset(p), IngestionError);
  }
}

TEST_CASE("experiment spec") {
  auto s = small_spec();
  const auto doc = s.to_json();
  const auto back = ExperimentSpec::from_json(doc);
  CHECK(back.to_json() == doc);
  CHECK(back.digest() == s.digest());
  auto moved = s;
  moved.out_dir = "/elsewhere";
  CHECK(moved.digest() == s.digest());
  moved.objective.mu = 0.6;
  CHECK(moved.digest() != s.digest());

  SUBCASE("defaults follow the paper settings") {
    const auto d = default_spec();
    CHECK(d.model.embed_dim == 16);
    CHECK(d.model.hidden_units == std::vector<int>{400, 400, 400});
    CHECK(d.train.batch_size == 10000);
    CHECK(d.train.learning_rate == 1e-3);
    CHECK(d.objective.mu == 0.5);
    CHECK(d.objective.tau == 1.0);
    CHECK(d.objective.gamma == 0.01);
  }
  SUBCASE("baseline presets") {
    s.baseline = Baseline::dcnv2;
    auto r = s.resolved();
    CHECK(r.objective.mu == 1.0);
    CHECK(r.objective.gamma == 0.0);
    CHECK(r.model.head_mode == net::HeadMode::final_only);
    CHECK(r.model.combination == net::Combination::SC);
    CHECK(r.model.cross_variant == net::CrossVariant::v2);
    s.baseline = Baseline::dcn;
    CHECK(s.resolved().model.cross_variant == net::CrossVariant::v1);
    CHECK(s.resolved().digest() == s.resolved().resolved().digest());
    CHECK_THROWS_AS(parse_baseline("xdeepfm"), ConfigError);
  }
  SUBCASE("no_fusion implies deep-only heads") {
    s.objective.ablation = fsd::Ablation::no_fusion;
    CHECK(s.resolved().model.fusion_input == net::FusionInput::deep_only);
  }
  SUBCASE("invalid specs") {
    s.objective.mu = 2;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = small_spec();
    s.seeds.clear();
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = small_spec();
    s.model.hidden_units = {8};
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = small_spec();
    s.model.head_mode = net::HeadMode::final_only;
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }
}

TEST_CASE("run_training writes per-seed artifacts and an aggregate") {
  auto s = small_spec();
  s.out_dir = fresh_dir("train");
  const auto data = featurestore::load_prepared(s.data_dir);
  const auto out = run_training(s, data);
  CHECK(out.runs.size() == 2);
  CHECK(out.test_auc.size() == 2);
  for (std::uint64_t seed : {1, 2}) {
    const auto dir = s.out_dir / ("seed_" + std::to_string(seed));
    CHECK(fs::exists(dir / "best.ckpt"));
    CHECK(fs::exists(dir / "last.ckpt"));
    CHECK(fs::exists(dir / "train_log.jsonl"));
    CHECK(fs::exists(dir / "run_record.json"));
  }
  const auto agg = json::parse(slurp(s.out_dir / "aggregate.json"));
  CHECK(agg.at("spec_digest") == out.spec_digest);
  CHECK(agg.at("mean_auc").get<double>() == doctest::Approx(out.mean_auc()));
  const auto resolved = json::parse(slurp(s.out_dir / "resolved_config.json"));
  CHECK(resolved.at("spec_digest") == out.spec_digest);

  // Same spec, same numbers.
  auto s2 = s;
  s2.out_dir.clear();
  const auto again = run_training(s2, data);
  CHECK(again.test_auc == out.test_auc);
  CHECK(again.test_logloss == out.test_logloss);

  SUBCASE("compare") {
    auto base = s2;
    base.baseline = Baseline::dcnv2;
    const auto b = run_training(base, data);
    const auto report = compare_aggregates(out.aggregate_json(), b.aggregate_json());
    CHECK(report.auc.mean_a == doctest::Approx(out.mean_auc()));
    CHECK(report.auc.mean_b == doctest::Approx(b.mean_auc()));
    CHECK(report.auc.p_value >= 0.0);
    CHECK(report.auc.p_value <= 1.0);
  }
}

TEST_CASE("grids") {
  const auto data = featurestore::load_prepared(prepared_dir());
  auto base = small_spec();
  base.seeds = {1};
  base.train.max_epochs = 2;

  SUBCASE("sweep") {
    const auto rows = run_sweep(base, data, SweepAxis::gamma, {0.001, 0.01, 0.5}, 2);
    CHECK(rows.size() == 3);
    CHECK(rows[1].value == 0.01);
    CHECK(rows[0].spec_digest != rows[1].spec_digest);
    CHECK_THROWS_AS(run_sweep(base, data, SweepAxis::mu, {}, 1), ConfigError);
    CHECK_THROWS_AS(run_sweep(base, data, SweepAxis::mu, {1.5}, 1), ConfigError);
    CHECK_THROWS_AS(run_sweep(base, data, SweepAxis::tau, {0.0}, 1), ConfigError);
    CHECK_THROWS_AS(parse_axis("lr"), ConfigError);

    std::vector<double> mus;
    for (int k = 1; k <= 9; ++k) mus.push_back(k / 10.0);
    base.train.max_epochs = 1;
    const auto mu_rows = run_sweep(base, data, SweepAxis::mu, mus, 2);
    CHECK(mu_rows.size() == 9);

    const auto dir = fresh_dir("sweep");
    write_grid_csv(dir / "sweep.csv", "value", rows);
    std::ifstream in(dir / "sweep.csv");
    std::string header, line;
    std::getline(in, header);
    CHECK(header == "value,mean_auc,std_auc,mean_logloss,std_logloss,seeds,spec_digest");
    int n = 0;
    while (std::getline(in, line)) ++n;
    CHECK(n == 3);
  }
  SUBCASE("ablation") {
    const auto rows = run_ablation(base, data, 1);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].label == "full");
    CHECK(rows[3].label == "w/o IF");
    // The full variant equals a plain training run on the same spec.
    const auto plain = run_training(base, data);
    CHECK(rows[0].outcome.test_auc == plain.test_auc);
    CHECK(rows[0].spec_digest == plain.spec_digest);
  }
  SUBCASE("combinations") {
    const auto rows = run_combinations(base, data, 2);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].label == "SC");
    CHECK(rows[3].label == "AD");
  }
  SUBCASE("noise") {
    const auto rows = run_noise(base, data, {0.0, 0.2}, 2);
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].model == "DCN");
    CHECK(rows[2].model == "FSDNet");
    CHECK(rows[5].fraction == 0.2);
    for (const auto& r : rows) CHECK(r.noise_seed == base.noise_seed);
    const auto plain = run_training(base, data);
    CHECK(rows[2].outcome.test_auc == plain.test_auc);
    CHECK_THROWS_AS(run_noise(base, data, {1.2}, 1), ConfigError);

    const auto dir = fresh_dir("noise");
    write_noise_csv(dir / "noise.csv", rows);
    std::ifstream in(dir / "noise.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header.find("noise_seed") != std::string::npos);
  }
}

TEST_CASE("export_representations") {
  const auto data = featurestore::load_prepared(prepared_dir());
  auto spec = small_spec();
  spec.seeds = {1};
  spec.train.max_epochs = 1;
  auto config = spec.model;
  config.vocab_sizes = data.vocab_sizes();
  const auto params = net::ModelParams<float>::initialize(config, 1);
  const auto dir = fresh_dir("export");

  const auto n = export_representations(params, data.train, 2, 50, 9, dir / "r.csv", "d1g");
  CHECK(n == 50);
  std::ifstream in(dir / "r.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "# spec_digest=d1g");
  std::getline(in, line);
  const auto columns = std::count(line.begin(), line.end(), ',') + 1;
  CHECK(columns == config.fusion_dim() + 1);
  std::set<std::string> rows;
  int count = 0;
  while (std::getline(in, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') + 1 == columns);
    rows.insert(line);
    ++count;
  }
  CHECK(count == 50);

  // Asking for more rows than exist samples the whole split once.
  const auto all = export_representations(params, data.test, 1, 1'000'000, 9, dir / "all.csv");
  CHECK(all == data.test.size());

  CHECK_THROWS_AS(export_representations(params, data.train, 3, 10, 1, dir / "x.csv"), ConfigError);
  CHECK_THROWS_AS(export_representations(params, data.train, 0, 10, 1, dir / "x.csv"), ConfigError);

  // Same seed, same sample.
  export_representations(params, data.train, 2, 50, 9, dir / "r2.csv", "d1g");
  CHECK(slurp(dir / "r.csv") == slurp(dir / "r2.csv"));
}

TEST_CASE("list parsing and parallel_for") {
  CHECK(parse_double_list("0.1,0.5, 2") == std::vector<double>{0.1, 0.5, 2});
  CHECK(parse_double_list("").empty());
  CHECK_THROWS_AS(parse_double_list("0.1,abc"), ConfigError);
  CHECK(parse_seed_list("1,2,3") == std::vector<std::uint64_t>{1, 2, 3});
  CHECK_THROWS_AS(parse_seed_list("1.5"), ConfigError);

  std::vector<int> out(100, 0);
  parallel_for(100, 4, [&](std::size_t i) { out[i] = static_cast<int>(i * i); });
  for (int i = 0; i < 100; ++i) CHECK(out[static_cast<std::size_t>(i)] == i * i);
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                    if (i == 7) throw ConfigError("boom");
                  }),
                  ConfigError);
}
