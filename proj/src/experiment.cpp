#include "fsdnet/experiment.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "fsdnet/checkpoint.hpp"
#include "fsdnet/rng.hpp"

namespace fsdnet::experiment {

namespace fst = featurestore;

namespace {

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IngestionError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(10) << v;
  return out.str();
}

}  // namespace

// ---------------------------------------------------------------- prepare

json PrepareOptions::to_json() const {
  return {{"input", input.string()},
          {"schema", schema.string()},
          {"min_count", min_count},
          {"split", ratio.to_string()},
          {"seed", seed},
          {"vocab_from", vocab_from_all ? "all" : "train"},
          {"log_base", log_base.describe()}};
}

json PrepareSummary::to_json() const {
  return {{"fields", fields},
          {"features", features},
          {"instances", instances},
          {"train", split_sizes[0]},
          {"validation", split_sizes[1]},
          {"test", split_sizes[2]},
          {"min_count", min_count}};
}

PrepareSummary prepare_dataset(const PrepareOptions& options) {
  const auto schema = fst::Schema::load(options.schema);
  fst::CsvOptions csv;
  csv.delimiter = options.delimiter;
  csv.log_base = options.log_base;
  const auto rows = fst::read_csv(options.input, schema, csv);
  if (rows.size() < 3) throw IngestionError("input needs at least 3 data rows");

  const auto parts = fst::split_indices(rows.size(), options.ratio, options.seed);
  std::vector<fst::TokenRow> train_rows;
  train_rows.reserve(parts[0].size());
  for (std::size_t i : parts[0]) train_rows.push_back(rows[i]);

  const auto vocabs = options.vocab_from_all
                          ? fst::build_vocabulary(rows, schema, options.min_count)
                          : fst::build_vocabulary(train_rows, schema, options.min_count);
  const auto encoded = fst::encode_rows(rows, vocabs);

  fs::create_directories(options.out_dir);
  write_json(options.out_dir / "schema.json", schema.to_json());
  json vocab_doc = fst::vocabulary_to_json(vocabs, schema);
  vocab_doc["built_from"] = options.vocab_from_all ? "all" : "train";
  vocab_doc["log_base"] = options.log_base.describe();
  write_json(options.out_dir / "vocab.json", vocab_doc);

  const json prep = options.to_json();
  const std::string digest = hex_digest(fnv1a64(prep.dump()));
  const char* names[3] = {"train", "validation", "test"};
  PrepareSummary summary;
  for (int k = 0; k < 3; ++k) {
    const auto part = encoded.select(parts[k]);
    fst::write_encoded(options.out_dir / (std::string(names[k]) + ".bin"), part,
                       {{"split", names[k]}, {"split_seed", options.seed},
                        {"split_ratio", options.ratio.to_string()}, {"spec_digest", digest}});
    summary.split_sizes[k] = part.size();
  }
  summary.fields = schema.field_count();
  for (const auto& v : vocabs) summary.features += v.size();
  summary.instances = rows.size();
  summary.min_count = options.min_count;

  json summary_doc = summary.to_json();
  summary_doc["spec_digest"] = digest;
  write_json(options.out_dir / "summary.json", summary_doc);
  json resolved = prep;
  resolved["spec_digest"] = digest;
  write_json(options.out_dir / "resolved_config.json", resolved);
  return summary;
}

void write_synthetic(const fs::path& csv_path, const fs::path& schema_path,
                     const SyntheticOptions& options) {
  if (options.fields < 1 || options.cardinality < 1) {
    throw ConfigError("synthetic data needs at least one field and one category");
  }
  Rng rng(options.seed);
  // Planted first-order effects plus a pairwise interaction table between
  // consecutive fields.
  std::vector<std::vector<double>> first(options.fields, std::vector<double>(options.cardinality));
  for (auto& f : first)
    for (auto& w : f) w = rng.normal(0.0, 1.0);
  std::vector<std::vector<double>> pair(options.cardinality, std::vector<double>(options.cardinality));
  for (auto& row : pair)
    for (auto& w : row) w = rng.normal(0.0, 1.5);

  json schema;
  schema["label"] = "label";
  schema["fields"] = json::array();
  for (std::size_t i = 0; i < options.fields; ++i) {
    schema["fields"].push_back({{"name", "f" + std::to_string(i)}, {"kind", "categorical"}});
  }
  if (options.numeric_field) schema["fields"].push_back({{"name", "num"}, {"kind", "numeric"}});
  write_json(schema_path, schema);

  std::ofstream out(csv_path, std::ios::trunc);
  if (!out) throw IngestionError("cannot write " + csv_path.string());
  out << "label";
  for (std::size_t i = 0; i < options.fields; ++i) out << ",f" << i;
  if (options.numeric_field) out << ",num";
  out << '\n';
  std::vector<std::uint32_t> cats(options.fields);
  for (std::size_t r = 0; r < options.rows; ++r) {
    double score = 0.0;
    for (std::size_t i = 0; i < options.fields; ++i) {
      // Skewed category frequencies so thresholding has something to drop.
      const double u = rng.uniform();
      cats[i] = static_cast<std::uint32_t>(std::floor(u * u * options.cardinality));
      score += first[i][cats[i]];
    }
    for (std::size_t i = 0; i + 1 < options.fields; ++i) score += pair[cats[i]][cats[i + 1]];
    double numeric = 0.0;
    if (options.numeric_field) {
      numeric = std::floor(std::exp(rng.uniform(0.0, 5.0)));
      score += 0.3 * (std::log(numeric + 1.0) - 2.5);
    }
    int label = rng.uniform() < 1.0 / (1.0 + std::exp(-score)) ? 1 : 0;
    if (rng.uniform() < options.noise) label = 1 - label;
    out << label;
    for (std::size_t i = 0; i < options.fields; ++i) out << ",c" << cats[i];
    if (options.numeric_field) {
      if (r % 50 == 7) {
        out << ',';
      } else {
        out << ',' << numeric;
      }
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------- spec

std::string_view to_string(Baseline b) {
  switch (b) {
    case Baseline::none: return "none";
    case Baseline::dcnv2: return "dcnv2";
    case Baseline::dcn: return "dcn";
  }
  return "?";
}

Baseline parse_baseline(std::string_view text) {
  if (text.empty() || text == "none" || text == "fsdnet") return Baseline::none;
  if (text == "dcnv2") return Baseline::dcnv2;
  if (text == "dcn") return Baseline::dcn;
  throw ConfigError("unknown baseline '" + std::string(text) + "' (expected dcnv2 or dcn)");
}

ExperimentSpec default_spec() { return ExperimentSpec{}; }

ExperimentSpec ExperimentSpec::resolved() const {
  ExperimentSpec s = *this;
  if (s.baseline != Baseline::none) {
    s.model.head_mode = net::HeadMode::final_only;
    s.model.combination = net::Combination::SC;
    s.model.fusion_input = net::FusionInput::fused;
    s.model.cross_variant =
        s.baseline == Baseline::dcn ? net::CrossVariant::v1 : net::CrossVariant::v2;
    s.objective.mu = 1.0;
    s.objective.gamma = 0.0;
    s.objective.ablation = fsd::Ablation::full;
  }
  s.model.fusion_input = s.objective.ablation == fsd::Ablation::no_fusion
                             ? net::FusionInput::deep_only
                             : net::FusionInput::fused;
  s.validate();
  return s;
}

void ExperimentSpec::validate() const {
  objective.validate();
  train.validate();
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (!(noise_fraction >= 0.0 && noise_fraction <= 1.0)) {
    throw ConfigError("noise fraction must lie in [0, 1]");
  }
  if (model.embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
  if (model.hidden_units.empty()) throw ConfigError("layer count must be >= 1");
  for (int h : model.hidden_units) {
    if (h != model.hidden_units.front() || h < 1) {
      throw ConfigError("all deep layers must share one positive width");
    }
  }
  if (model.head_mode == net::HeadMode::final_only && objective.distillation_active()) {
    throw ConfigError("a single-head model cannot use distillation terms (set mu=1, gamma=0)");
  }
  if (model.num_layers() < 2 && objective.distillation_active()) {
    throw ConfigError("distillation needs at least 2 layers (no student layers exist)");
  }
}

json ExperimentSpec::to_json() const {
  json m = model.to_json();
  m.erase("vocab_sizes");
  return {{"data", data_dir.string()},
          {"model", m},
          {"objective", objective.to_json()},
          {"train", train.to_json()},
          {"seeds", seeds},
          {"baseline", std::string(to_string(baseline))},
          {"noise_fraction", noise_fraction},
          {"noise_seed", noise_seed},
          {"out", out_dir.string()}};
}

ExperimentSpec ExperimentSpec::from_json(const json& doc) {
  ExperimentSpec s;
  if (doc.contains("data")) s.data_dir = doc.at("data").get<std::string>();
  if (doc.contains("model")) s.model = net::ModelConfig::from_json(doc.at("model"));
  if (doc.contains("objective")) s.objective = fsd::ObjectiveConfig::from_json(doc.at("objective"));
  if (doc.contains("train")) s.train = train::TrainConfig::from_json(doc.at("train"));
  if (doc.contains("seeds")) s.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
  if (doc.contains("baseline")) s.baseline = parse_baseline(doc.at("baseline").get<std::string>());
  s.noise_fraction = doc.value("noise_fraction", s.noise_fraction);
  s.noise_seed = doc.value("noise_seed", s.noise_seed);
  if (doc.contains("out")) s.out_dir = doc.at("out").get<std::string>();
  return s;
}

std::string ExperimentSpec::digest() const {
  json doc = to_json();
  doc.erase("out");
  doc.erase("data");
  return hex_digest(fnv1a64(doc.dump()));
}

// ---------------------------------------------------------------- runs

json TrainOutcome::aggregate_json() const {
  std::vector<std::uint64_t> seeds;
  for (const auto& r : runs) seeds.push_back(r.seed);
  return {{"spec_digest", spec_digest},
          {"seeds", seeds},
          {"test_auc", test_auc},
          {"test_logloss", test_logloss},
          {"mean_auc", mean_auc()},
          {"std_auc", metrics::sample_stddev(test_auc)},
          {"mean_logloss", mean_logloss()},
          {"std_logloss", metrics::sample_stddev(test_logloss)}};
}

TrainOutcome run_training(const ExperimentSpec& raw_spec, const fst::PreparedDataset& data,
                          const std::function<void(std::uint64_t, const train::EpochMetrics&)>&
                              on_epoch) {
  ExperimentSpec spec = raw_spec.resolved();
  spec.model.vocab_sizes = data.vocab_sizes();
  spec.model.validate();

  TrainOutcome outcome;
  outcome.spec_digest = spec.digest();
  if (!spec.out_dir.empty()) {
    fs::create_directories(spec.out_dir);
    json resolved = spec.to_json();
    resolved["spec_digest"] = outcome.spec_digest;
    write_json(spec.out_dir / "resolved_config.json", resolved);
  }

  const fst::EncodedDataset noisy =
      spec.noise_fraction > 0.0
          ? fst::inject_label_noise(data.train, spec.noise_fraction, spec.noise_seed)
          : fst::EncodedDataset();
  const fst::EncodedDataset& train_set = spec.noise_fraction > 0.0 ? noisy : data.train;

  for (std::uint64_t seed : spec.seeds) {
    train::TrainConfig tc = spec.train;
    tc.seed = seed;
    auto params = net::ModelParams<float>::initialize(spec.model, seed);
    train::FitOptions options;
    if (!spec.out_dir.empty()) options.out_dir = spec.out_dir / ("seed_" + std::to_string(seed));
    options.run_metadata = {{"spec_digest", outcome.spec_digest},
                            {"spec", spec.to_json()},
                            {"noise_fraction", spec.noise_fraction},
                            {"noise_seed", spec.noise_seed}};
    if (on_epoch) options.on_epoch = [&](const train::EpochMetrics& m) { on_epoch(seed, m); };
    auto record = train::fit(params, train_set, data.validation, data.test, spec.objective, tc,
                             options);
    if (!options.out_dir.empty()) {
      json doc = record.to_json();
      doc["ablation_weighting"] = "mu kept as configured when a term is removed";
      write_json(options.out_dir / "run_record.json", doc);
    }
    outcome.test_auc.push_back(record.test ? record.test->auc : 0.0);
    outcome.test_logloss.push_back(record.test ? record.test->logloss : 0.0);
    outcome.runs.push_back({seed, std::move(record)});
  }
  if (!spec.out_dir.empty()) write_json(spec.out_dir / "aggregate.json", outcome.aggregate_json());
  return outcome;
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

SweepAxis parse_axis(std::string_view text) {
  if (text == "mu") return SweepAxis::mu;
  if (text == "tau") return SweepAxis::tau;
  if (text == "gamma") return SweepAxis::gamma;
  throw ConfigError("unknown sweep axis '" + std::string(text) + "' (expected mu, tau or gamma)");
}

std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::mu: return "mu";
    case SweepAxis::tau: return "tau";
    case SweepAxis::gamma: return "gamma";
  }
  return "?";
}

namespace {

std::vector<GridRow> run_grid(const std::vector<std::pair<std::string, ExperimentSpec>>& points,
                              const std::vector<double>& values,
                              const fst::PreparedDataset& data, int jobs) {
  std::vector<GridRow> rows(points.size());
  // Resolve everything up front so configuration errors surface before any training.
  for (std::size_t i = 0; i < points.size(); ++i) {
    rows[i].label = points[i].first;
    rows[i].value = values.empty() ? 0.0 : values[i];
    rows[i].spec_digest = points[i].second.resolved().digest();
  }
  parallel_for(points.size(), jobs, [&](std::size_t i) {
    rows[i].outcome = run_training(points[i].second, data);
  });
  return rows;
}

fs::path child_dir(const fs::path& base, const std::string& name) {
  return base.empty() ? fs::path() : base / name;
}

}  // namespace

std::vector<GridRow> run_sweep(const ExperimentSpec& base, const fst::PreparedDataset& data,
                               SweepAxis axis, const std::vector<double>& values, int jobs) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<std::pair<std::string, ExperimentSpec>> points;
  for (double v : values) {
    ExperimentSpec s = base;
    switch (axis) {
      case SweepAxis::mu: s.objective.mu = v; break;
      case SweepAxis::tau: s.objective.tau = v; break;
      case SweepAxis::gamma: s.objective.gamma = v; break;
    }
    const std::string label = std::string(to_string(axis)) + "=" + format_double(v);
    s.out_dir = child_dir(base.out_dir, label);
    s.validate();
    points.emplace_back(label, std::move(s));
  }
  return run_grid(points, values, data, jobs);
}

std::vector<GridRow> run_ablation(const ExperimentSpec& base, const fst::PreparedDataset& data,
                                  int jobs) {
  std::vector<std::pair<std::string, ExperimentSpec>> points;
  const std::pair<const char*, fsd::Ablation> variants[] = {
      {"full", fsd::Ablation::full},
      {"w/o SL", fsd::Ablation::no_soft_label},
      {"w/o HL", fsd::Ablation::no_hint},
      {"w/o IF", fsd::Ablation::no_fusion}};
  for (const auto& [label, ablation] : variants) {
    ExperimentSpec s = base;
    s.baseline = Baseline::none;
    s.objective.ablation = ablation;
    s.out_dir = child_dir(base.out_dir, std::string(fsd::to_string(ablation)));
    points.emplace_back(label, std::move(s));
  }
  return run_grid(points, {}, data, jobs);
}

std::vector<GridRow> run_combinations(const ExperimentSpec& base,
                                      const fst::PreparedDataset& data, int jobs) {
  std::vector<std::pair<std::string, ExperimentSpec>> points;
  for (auto c : {net::Combination::SC, net::Combination::HP, net::Combination::PA,
                 net::Combination::AD}) {
    ExperimentSpec s = base;
    s.baseline = Baseline::none;
    s.model.combination = c;
    const std::string label(net::to_string(c));
    s.out_dir = child_dir(base.out_dir, label);
    points.emplace_back(label, std::move(s));
  }
  return run_grid(points, {}, data, jobs);
}

std::vector<NoiseRow> run_noise(const ExperimentSpec& base, const fst::PreparedDataset& data,
                                const std::vector<double>& fractions, int jobs) {
  if (fractions.empty()) throw ConfigError("noise needs at least one fraction");
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("noise fractions must lie in [0, 1]");
  }
  const std::pair<const char*, Baseline> models[] = {
      {"DCN", Baseline::dcn}, {"DCNv2", Baseline::dcnv2}, {"FSDNet", Baseline::none}};
  std::vector<NoiseRow> rows;
  std::vector<ExperimentSpec> specs;
  for (double f : fractions) {
    for (const auto& [name, baseline] : models) {
      ExperimentSpec s = base;
      s.baseline = baseline;
      s.noise_fraction = f;
      s.out_dir = child_dir(base.out_dir, "noise=" + format_double(f) + "/" + name);
      NoiseRow row;
      row.fraction = f;
      row.model = name;
      row.noise_seed = s.noise_seed;
      row.spec_digest = s.resolved().digest();
      rows.push_back(std::move(row));
      specs.push_back(std::move(s));
    }
  }
  parallel_for(specs.size(), jobs, [&](std::size_t i) { rows[i].outcome = run_training(specs[i], data); });
  return rows;
}

void write_grid_csv(const fs::path& path, std::string_view key_column,
                    const std::vector<GridRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IngestionError("cannot write " + path.string());
  out << std::setprecision(10);
  out << key_column << ",mean_auc,std_auc,mean_logloss,std_logloss,seeds,spec_digest\n";
  for (const auto& row : rows) {
    const auto& o = row.outcome;
    if (key_column == "value") {
      out << row.value;
    } else {
      out << row.label;
    }
    out << ',' << o.mean_auc() << ',' << metrics::sample_stddev(o.test_auc) << ','
        << o.mean_logloss() << ',' << metrics::sample_stddev(o.test_logloss) << ','
        << o.runs.size() << ',' << row.spec_digest << '\n';
  }
}

void write_noise_csv(const fs::path& path, const std::vector<NoiseRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IngestionError("cannot write " + path.string());
  out << std::setprecision(10);
  out << "fraction,model,mean_auc,std_auc,mean_logloss,noise_seed,spec_digest\n";
  for (const auto& row : rows) {
    const auto& o = row.outcome;
    out << row.fraction << ',' << row.model << ',' << o.mean_auc() << ','
        << metrics::sample_stddev(o.test_auc) << ',' << o.mean_logloss() << ','
        << row.noise_seed << ',' << row.spec_digest << '\n';
  }
}

// ---------------------------------------------------------------- evaluation

json CompareReport::to_json() const {
  return {{"auc", auc.to_json()}, {"logloss", logloss.to_json()}};
}

CompareReport compare_aggregates(const json& a, const json& b) {
  const auto auc_a = a.at("test_auc").get<std::vector<double>>();
  const auto auc_b = b.at("test_auc").get<std::vector<double>>();
  const auto ll_a = a.at("test_logloss").get<std::vector<double>>();
  const auto ll_b = b.at("test_logloss").get<std::vector<double>>();
  return {metrics::t_test(auc_a, auc_b), metrics::t_test(ll_a, ll_b)};
}

std::size_t export_representations(const net::ParamSet<float>& params,
                                   const fst::EncodedDataset& data, int layer, std::size_t count,
                                   std::uint64_t seed, const fs::path& out_csv,
                                   std::string_view spec_digest) {
  const int n = params.config().num_layers();
  if (layer < 1 || layer > n) {
    throw ConfigError("layer " + std::to_string(layer) + " out of range 1.." + std::to_string(n));
  }
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  const std::size_t take = std::min(count, data.size());
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(order.size() - i));
    std::swap(order[i], order[j]);
  }
  order.resize(take);

  std::ofstream out(out_csv, std::ios::trunc);
  if (!out) throw IngestionError("cannot write " + out_csv.string());
  if (!spec_digest.empty()) out << "# spec_digest=" << spec_digest << '\n';
  const int width = params.config().fusion_dim();
  for (int k = 0; k < width; ++k) out << 'f' << k << ',';
  out << "prediction\n";
  out << std::setprecision(9);

  std::vector<std::uint32_t> ibuf;
  std::vector<std::uint8_t> lbuf;
  const std::size_t batch_size = 4096;
  for (std::size_t begin = 0; begin < take; begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, take);
    const auto batch = train::make_batch(data, order, begin, end, ibuf, lbuf);
    const auto trace = net::network_forward(batch, params);
    const auto& f = trace.fusion[static_cast<std::size_t>(layer - 1)];
    const RowVector<float> pred = trace.prediction();
    for (Index j = 0; j < f.cols(); ++j) {
      for (Index k = 0; k < f.rows(); ++k) out << f(k, j) << ',';
      out << pred(j) << '\n';
    }
  }
  return take;
}

std::vector<double> parse_double_list(std::string_view text) {
  std::vector<double> values;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    std::string piece(text.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                         : comma - start));
    if (!piece.empty()) {
      char* end = nullptr;
      const double v = std::strtod(piece.c_str(), &end);
      if (end != piece.c_str() + piece.size()) throw ConfigError("'" + piece + "' is not a number");
      values.push_back(v);
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return values;
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> seeds;
  for (double v : parse_double_list(text)) {
    if (v < 0 || v != std::floor(v)) throw ConfigError("seeds must be non-negative integers");
    seeds.push_back(static_cast<std::uint64_t>(v));
  }
  return seeds;
}

}  // namespace fsdnet::experiment
