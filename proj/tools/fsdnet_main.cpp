// fsdnet command-line tool: prepare, train, eval, compare, sweep, ablate,
// combos, noise, export-reps, gradcheck, synth.
//
// Exit codes: 0 success, 2 configuration/input error, 3 numerical failure.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fsdnet/checkpoint.hpp"
#include "fsdnet/experiment.hpp"
#include "fsdnet/gradcheck.hpp"

namespace {

using namespace fsdnet;
using nlohmann::json;
namespace fs = std::filesystem;
namespace ex = fsdnet::experiment;

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kNumericalError = 3;

// Options shared by every subcommand.
struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--config", c.config, "JSON config file; flags override its values");
  cmd->add_option("--out", c.out, "Output location (default: $FSDNET_OUT_ROOT/<command>/<digest>)");
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IngestionError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

fs::path default_out(std::string_view command, const std::string& digest) {
  const char* root = std::getenv("FSDNET_OUT_ROOT");
  return fs::path(root && *root ? root : "runs") / std::string(command) / digest;
}

// Flags that shape an ExperimentSpec; unset flags leave the config file value.
struct SpecFlags {
  std::string data;
  std::string seeds;
  std::string baseline;
  std::optional<double> mu, tau, gamma;
  std::string ablation;
  std::string combination;
  std::string cross;
  std::string head_mode;
  std::optional<int> embed_dim;
  std::optional<int> layers;
  std::optional<int> width;
  std::optional<int> attention_dim;
  std::optional<double> lr;
  std::optional<std::size_t> batch_size;
  std::optional<int> max_epochs;
  std::optional<int> patience;
  std::optional<int> lr_patience;
  std::string monitor;
  std::optional<double> noise;
  std::optional<std::uint64_t> noise_seed;
};

void add_spec_flags(CLI::App* cmd, SpecFlags& f) {
  cmd->add_option("--data", f.data, "Prepared dataset directory");
  cmd->add_option("--seeds", f.seeds, "Comma-separated seed list (overrides --seed)");
  cmd->add_option("--baseline", f.baseline, "Baseline preset: dcnv2 | dcn");
  cmd->add_option("--mu", f.mu, "Loss balance between CE and KL");
  cmd->add_option("--tau", f.tau, "Distillation temperature");
  cmd->add_option("--gamma", f.gamma, "Hint loss weight");
  cmd->add_option("--ablation", f.ablation, "full | no_soft_label | no_hint | no_fusion");
  cmd->add_option("--combination", f.combination, "SC | HP | PA | AD");
  cmd->add_option("--cross", f.cross, "Cross layer variant: v2 | v1");
  cmd->add_option("--head-mode", f.head_mode, "all_layers | final_only");
  cmd->add_option("--embed-dim", f.embed_dim, "Embedding size per field");
  cmd->add_option("--layers", f.layers, "Number of cross/deep layers");
  cmd->add_option("--width", f.width, "Deep layer width");
  cmd->add_option("--attention-dim", f.attention_dim, "Hidden size of AD attention scorers");
  cmd->add_option("--lr", f.lr, "Initial learning rate");
  cmd->add_option("--batch-size", f.batch_size, "Mini-batch size");
  cmd->add_option("--max-epochs", f.max_epochs, "Epoch budget");
  cmd->add_option("--patience", f.patience, "Early stopping patience");
  cmd->add_option("--lr-patience", f.lr_patience, "Plateau epochs before the lr is reduced");
  cmd->add_option("--monitor", f.monitor, "val_auc | val_logloss");
  cmd->add_option("--noise", f.noise, "Fraction of training labels to flip");
  cmd->add_option("--noise-seed", f.noise_seed, "Seed for label noise");
}

ex::ExperimentSpec build_spec(const Common& c, const SpecFlags& f) {
  ex::ExperimentSpec spec =
      c.config.empty() ? ex::default_spec() : ex::ExperimentSpec::from_json(read_json_file(c.config));
  if (!f.data.empty()) spec.data_dir = f.data;
  if (!f.seeds.empty()) {
    spec.seeds = ex::parse_seed_list(f.seeds);
  } else if (c.seed) {
    spec.seeds = {*c.seed};
  }
  if (!f.baseline.empty()) spec.baseline = ex::parse_baseline(f.baseline);
  if (f.mu) spec.objective.mu = *f.mu;
  if (f.tau) spec.objective.tau = *f.tau;
  if (f.gamma) spec.objective.gamma = *f.gamma;
  if (!f.ablation.empty()) spec.objective.ablation = fsd::parse_ablation(f.ablation);
  if (!f.combination.empty()) spec.model.combination = net::parse_combination(f.combination);
  if (!f.cross.empty()) spec.model.cross_variant = net::parse_cross_variant(f.cross);
  if (!f.head_mode.empty()) spec.model.head_mode = net::parse_head_mode(f.head_mode);
  if (f.embed_dim) spec.model.embed_dim = *f.embed_dim;
  if (f.layers || f.width) {
    const int n = f.layers ? *f.layers : static_cast<int>(spec.model.hidden_units.size());
    const int w = f.width ? *f.width : spec.model.hidden_units.front();
    if (n < 1) throw ConfigError("--layers must be >= 1");
    spec.model.hidden_units.assign(static_cast<std::size_t>(n), w);
  }
  if (f.attention_dim) spec.model.attention_dim = *f.attention_dim;
  if (f.lr) spec.train.learning_rate = *f.lr;
  if (f.batch_size) spec.train.batch_size = *f.batch_size;
  if (f.max_epochs) spec.train.max_epochs = *f.max_epochs;
  if (f.patience) spec.train.early_stop_patience = *f.patience;
  if (f.lr_patience) spec.train.lr_patience = *f.lr_patience;
  if (!f.monitor.empty()) spec.train.monitor = train::parse_monitor(f.monitor);
  if (f.noise) spec.noise_fraction = *f.noise;
  if (f.noise_seed) spec.noise_seed = *f.noise_seed;
  if (spec.data_dir.empty()) throw ConfigError("--data (prepared dataset directory) is required");
  return spec;
}

void print_epoch(std::uint64_t seed, const train::EpochMetrics& m) {
  std::cerr << "seed " << seed << " epoch " << m.epoch << " lr " << m.lr << " loss "
            << m.train_loss.total;
  if (m.validation) {
    std::cerr << " val_auc " << m.validation->auc << " val_logloss " << m.validation->logloss;
  }
  std::cerr << " (" << m.seconds << "s)\n";
}

// Resolves the spec, picks the output directory and loads the dataset.
struct Prepared {
  ex::ExperimentSpec spec;
  featurestore::PreparedDataset data;
};

Prepared resolve(const Common& c, const SpecFlags& f, std::string_view command) {
  Prepared p{build_spec(c, f), {}};
  p.spec.validate();
  const auto digest = p.spec.resolved().digest();
  p.spec.out_dir = c.out.empty() ? default_out(command, digest) : fs::path(c.out);
  p.data = featurestore::load_prepared(p.spec.data_dir);
  return p;
}

int cmd_prepare(const Common& c, ex::PrepareOptions opts, const std::string& split,
                const std::string& vocab_from, std::optional<double> log_base,
                const std::string& delimiter) {
  json file = c.config.empty() ? json::object() : read_json_file(c.config);
  if (opts.input.empty() && file.contains("input")) opts.input = file["input"].get<std::string>();
  if (opts.schema.empty() && file.contains("schema")) opts.schema = file["schema"].get<std::string>();
  if (c.seed) {
    opts.seed = *c.seed;
  } else if (file.contains("seed")) {
    opts.seed = file["seed"].get<std::uint64_t>();
  }
  if (!split.empty()) {
    opts.ratio = featurestore::SplitRatio::parse(split);
  } else if (file.contains("split")) {
    opts.ratio = featurestore::SplitRatio::parse(file["split"].get<std::string>());
  }
  const std::string from = !vocab_from.empty() ? vocab_from : file.value("vocab_from", "train");
  if (from != "train" && from != "all") throw ConfigError("--vocab-from must be train or all");
  opts.vocab_from_all = from == "all";
  if (log_base) opts.log_base.base = *log_base;
  if (!delimiter.empty()) {
    if (delimiter == "tab" || delimiter == "\\t") {
      opts.delimiter = '\t';
    } else if (delimiter.size() == 1) {
      opts.delimiter = delimiter[0];
    } else {
      throw ConfigError("--delimiter must be a single character or 'tab'");
    }
  }
  if (opts.input.empty() || opts.schema.empty()) throw ConfigError("--input and --schema are required");
  if (opts.out_dir.empty()) {
    opts.out_dir = c.out.empty() ? default_out("prepare", hex_digest(fnv1a64(opts.to_json().dump())))
                                 : fs::path(c.out);
  }
  const auto summary = ex::prepare_dataset(opts);
  json doc = summary.to_json();
  doc["out_dir"] = opts.out_dir.string();
  std::cout << doc.dump(2) << '\n';
  return kOk;
}

int cmd_train(const Common& c, const SpecFlags& f, bool quiet) {
  auto p = resolve(c, f, "train");
  auto outcome = ex::run_training(p.spec, p.data, quiet ? nullptr : print_epoch);
  json doc = outcome.aggregate_json();
  doc["out_dir"] = p.spec.out_dir.string();
  std::cout << doc.dump(2) << '\n';
  return kOk;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& data_dir,
             const std::string& split) {
  const auto ckpt = net::load_checkpoint(checkpoint);
  const auto data = featurestore::load_prepared(data_dir);
  const auto& rows = data.split(split);
  const auto result = train::evaluate_model(ckpt.params, rows);
  json doc = result.to_json();
  doc["split"] = split;
  doc["spec_digest"] = ckpt.metadata.value("spec_digest", ckpt.params.config().digest());
  if (!c.out.empty()) write_json_file(c.out, doc);
  std::cout << doc.dump(2) << '\n';
  return kOk;
}

json load_aggregate(const fs::path& p) {
  return read_json_file(fs::is_directory(p) ? p / "aggregate.json" : p);
}

int cmd_compare(const Common& c, const std::string& a, const std::string& b) {
  const json ja = load_aggregate(a);
  const json jb = load_aggregate(b);
  const auto report = ex::compare_aggregates(ja, jb);
  json doc = report.to_json();
  doc["a"] = {{"path", a}, {"spec_digest", ja.value("spec_digest", "")}};
  doc["b"] = {{"path", b}, {"spec_digest", jb.value("spec_digest", "")}};
  doc["test"] = "two-tailed Welch t-test, unpaired";
  if (!c.out.empty()) write_json_file(c.out, doc);
  std::cout << doc.dump(2) << '\n';
  return kOk;
}

void print_grid(const std::vector<ex::GridRow>& rows) {
  for (const auto& r : rows) {
    std::cout << r.label << "  auc " << r.outcome.mean_auc() << "  logloss "
              << r.outcome.mean_logloss() << '\n';
  }
}

int cmd_sweep(const Common& c, const SpecFlags& f, const std::string& axis,
              const std::string& values, int jobs) {
  const auto parsed_axis = ex::parse_axis(axis);
  const auto list = ex::parse_double_list(values);
  if (list.empty()) throw ConfigError("--values must list at least one value");
  auto p = resolve(c, f, "sweep");
  const auto rows = ex::run_sweep(p.spec, p.data, parsed_axis, list, jobs);
  ex::write_grid_csv(p.spec.out_dir / "sweep.csv", "value", rows);
  print_grid(rows);
  std::cout << "wrote " << (p.spec.out_dir / "sweep.csv").string() << '\n';
  return kOk;
}

int cmd_grid(const Common& c, const SpecFlags& f, std::string_view command, int jobs) {
  auto p = resolve(c, f, command);
  const auto rows = command == "ablate" ? ex::run_ablation(p.spec, p.data, jobs)
                                        : ex::run_combinations(p.spec, p.data, jobs);
  const fs::path csv = p.spec.out_dir / (command == "ablate" ? "ablation.csv" : "combinations.csv");
  ex::write_grid_csv(csv, "variant", rows);
  print_grid(rows);
  std::cout << "wrote " << csv.string() << '\n';
  return kOk;
}

int cmd_noise(const Common& c, const SpecFlags& f, const std::string& fractions, int jobs) {
  const auto list = ex::parse_double_list(fractions);
  auto p = resolve(c, f, "noise");
  const auto rows = ex::run_noise(p.spec, p.data, list, jobs);
  ex::write_noise_csv(p.spec.out_dir / "noise.csv", rows);
  for (const auto& r : rows) {
    std::cout << r.fraction << "  " << r.model << "  auc " << r.outcome.mean_auc() << '\n';
  }
  std::cout << "wrote " << (p.spec.out_dir / "noise.csv").string() << '\n';
  return kOk;
}

int cmd_export(const Common& c, const std::string& checkpoint, const std::string& data_dir,
               const std::string& split, int layer, std::size_t count) {
  const auto ckpt = net::load_checkpoint(checkpoint);
  const auto data = featurestore::load_prepared(data_dir);
  const std::string digest = ckpt.metadata.value("spec_digest", ckpt.params.config().digest());
  const fs::path out = c.out.empty() ? default_out("export-reps", digest) /
                                           ("layer" + std::to_string(layer) + ".csv")
                                     : fs::path(c.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  const auto written = ex::export_representations(ckpt.params, data.split(split), layer, count,
                                                  c.seed.value_or(1), out, digest);
  std::cout << "wrote " << written << " rows to " << out.string() << '\n';
  return kOk;
}

int cmd_gradcheck(const Common& c, const SpecFlags& f, double tolerance) {
  gradcheck::ToyOptions toy;
  if (c.seed) toy.seed = *c.seed;
  fsd::ObjectiveConfig objective;
  objective.mu = 0.5;
  objective.tau = 1.5;
  objective.gamma = 0.01;
  if (f.mu) objective.mu = *f.mu;
  if (f.tau) objective.tau = *f.tau;
  if (f.gamma) objective.gamma = *f.gamma;
  if (!f.ablation.empty()) objective.ablation = fsd::parse_ablation(f.ablation);
  if (objective.ablation == fsd::Ablation::no_fusion) toy.fusion_input = net::FusionInput::deep_only;
  if (!f.combination.empty()) toy.combination = net::parse_combination(f.combination);
  if (!f.cross.empty()) toy.cross_variant = net::parse_cross_variant(f.cross);
  if (!f.head_mode.empty()) toy.head_mode = net::parse_head_mode(f.head_mode);
  if (f.layers) toy.layers = *f.layers;
  if (f.embed_dim) toy.embed_dim = *f.embed_dim;
  if (f.width) toy.hidden = *f.width;
  objective.validate();

  const auto problem = gradcheck::make_toy_problem(toy);
  const auto report = gradcheck::check(problem.params, problem.batch(), objective);
  json doc = report.to_json();
  doc["objective"] = objective.to_json();
  doc["model"] = problem.params.config().to_json();
  doc["tolerance"] = tolerance;
  doc["passed"] = report.max_rel_error <= tolerance;
  if (!c.out.empty()) write_json_file(c.out, doc);
  for (const auto& t : report.tensors) {
    std::cout << t.name << "  rel_error " << t.rel_error << '\n';
  }
  std::cout << "max relative error " << report.max_rel_error << " (tolerance " << tolerance
            << ")\n";
  return report.max_rel_error <= tolerance ? kOk : kNumericalError;
}

int cmd_synth(const Common& c, ex::SyntheticOptions opts) {
  if (c.seed) opts.seed = *c.seed;
  const fs::path dir = c.out.empty() ? fs::path("synthetic") : fs::path(c.out);
  fs::create_directories(dir);
  ex::write_synthetic(dir / "data.csv", dir / "schema.json", opts);
  std::cout << "wrote " << (dir / "data.csv").string() << " and " << (dir / "schema.json").string()
            << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FSDNet: cross/deep CTR model with fusion self-distillation"};
  app.require_subcommand(1);

  // prepare
  Common prep_common;
  ex::PrepareOptions prep;
  std::string prep_split, prep_vocab_from, prep_delimiter;
  std::optional<double> prep_log_base;
  std::string prep_out_dir;
  auto* prepare = app.add_subcommand("prepare", "Build vocabularies and encoded splits from a CSV");
  add_common(prepare, prep_common);
  prepare->add_option("--input", prep.input, "Headered CSV/TSV file");
  prepare->add_option("--schema", prep.schema, "Schema JSON (field names and kinds)");
  prepare->add_option("--min-count", prep.min_count, "Tokens seen fewer times fold into OOV");
  prepare->add_option("--split", prep_split, "Split ratio train:validation:test, e.g. 8:1:1");
  prepare->add_option("--out-dir", prep_out_dir, "Output directory (same as --out)");
  prepare->add_option("--vocab-from", prep_vocab_from, "Build vocabularies from: train | all");
  prepare->add_option("--log-base", prep_log_base, "Logarithm base for numeric fields (default e)");
  prepare->add_option("--delimiter", prep_delimiter, "Column delimiter (default: by extension)");

  // train-like commands
  Common train_common, sweep_common, ablate_common, combos_common, noise_common;
  SpecFlags train_flags, sweep_flags, ablate_flags, combos_flags, noise_flags;
  bool quiet = false;
  auto* train_cmd = app.add_subcommand("train", "Train one model per seed and aggregate test metrics");
  add_common(train_cmd, train_common);
  add_spec_flags(train_cmd, train_flags);
  train_cmd->add_flag("--quiet", quiet, "Suppress per-epoch progress");

  std::string axis, values;
  int jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "Grid over one of mu, tau, gamma");
  add_common(sweep, sweep_common);
  add_spec_flags(sweep, sweep_flags);
  sweep->add_option("--axis", axis, "mu | tau | gamma")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required();
  sweep->add_option("--jobs", jobs, "Parallel grid points");

  auto* ablate = app.add_subcommand("ablate", "Full model vs w/o SL, w/o HL, w/o IF");
  add_common(ablate, ablate_common);
  add_spec_flags(ablate, ablate_flags);
  ablate->add_option("--jobs", jobs, "Parallel grid points");

  auto* combos = app.add_subcommand("combos", "Compare the SC, HP, PA and AD fusion methods");
  add_common(combos, combos_common);
  add_spec_flags(combos, combos_flags);
  combos->add_option("--jobs", jobs, "Parallel grid points");

  std::string fractions = "0,0.05,0.1,0.15,0.2";
  auto* noise = app.add_subcommand("noise", "Label-noise robustness of DCN, DCNv2 and FSDNet");
  add_common(noise, noise_common);
  add_spec_flags(noise, noise_flags);
  noise->add_option("--fractions", fractions, "Comma-separated noise fractions");
  noise->add_option("--jobs", jobs, "Parallel grid points");

  // eval / compare / export
  Common eval_common;
  std::string eval_ckpt, eval_data, eval_split = "test";
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a prepared split");
  add_common(eval, eval_common);
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval->add_option("--data", eval_data, "Prepared dataset directory")->required();
  eval->add_option("--split", eval_split, "train | validation | test");

  Common compare_common;
  std::string cmp_a, cmp_b;
  auto* compare = app.add_subcommand("compare", "Welch t-test between two trained run groups");
  add_common(compare, compare_common);
  compare->add_option("a", cmp_a, "Run directory or aggregate.json")->required();
  compare->add_option("b", cmp_b, "Run directory or aggregate.json")->required();

  Common export_common;
  std::string exp_ckpt, exp_data, exp_split = "test";
  int exp_layer = 0;
  std::size_t exp_count = 4096;
  auto* exporter = app.add_subcommand("export-reps", "Sample fusion-layer representations to CSV");
  add_common(exporter, export_common);
  exporter->add_option("--checkpoint", exp_ckpt, "Checkpoint file")->required();
  exporter->add_option("--data", exp_data, "Prepared dataset directory")->required();
  exporter->add_option("--split", exp_split, "train | validation | test");
  exporter->add_option("--layer", exp_layer, "Fusion layer, 1-based")->required();
  exporter->add_option("--count", exp_count, "Rows to sample");

  // gradcheck / synth
  Common gc_common;
  SpecFlags gc_flags;
  double tolerance = 1e-5;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the analytic gradients");
  add_common(gc, gc_common);
  gc->add_option("--mu", gc_flags.mu, "Loss balance between CE and KL");
  gc->add_option("--tau", gc_flags.tau, "Distillation temperature");
  gc->add_option("--gamma", gc_flags.gamma, "Hint loss weight");
  gc->add_option("--ablation", gc_flags.ablation, "full | no_soft_label | no_hint | no_fusion");
  gc->add_option("--combination", gc_flags.combination, "SC | HP | PA | AD");
  gc->add_option("--cross", gc_flags.cross, "v2 | v1");
  gc->add_option("--head-mode", gc_flags.head_mode, "all_layers | final_only");
  gc->add_option("--layers", gc_flags.layers, "Number of layers");
  gc->add_option("--embed-dim", gc_flags.embed_dim, "Embedding size");
  gc->add_option("--width", gc_flags.width, "Deep layer width");
  gc->add_option("--tolerance", tolerance, "Maximum accepted relative error");

  Common synth_common;
  ex::SyntheticOptions synth_opts;
  auto* synth = app.add_subcommand("synth", "Write a synthetic CSV and schema for testing");
  add_common(synth, synth_common);
  synth->add_option("--rows", synth_opts.rows, "Number of rows");
  synth->add_option("--fields", synth_opts.fields, "Categorical fields");
  synth->add_option("--cardinality", synth_opts.cardinality, "Categories per field");
  synth->add_option("--label-noise", synth_opts.noise, "Label flip probability");
  synth->add_flag("--numeric", synth_opts.numeric_field, "Add a numeric field");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*prepare) {
      prep.out_dir = prep_out_dir;
      return cmd_prepare(prep_common, prep, prep_split, prep_vocab_from, prep_log_base,
                         prep_delimiter);
    }
    if (*train_cmd) return cmd_train(train_common, train_flags, quiet);
    if (*sweep) return cmd_sweep(sweep_common, sweep_flags, axis, values, jobs);
    if (*ablate) return cmd_grid(ablate_common, ablate_flags, "ablate", jobs);
    if (*combos) return cmd_grid(combos_common, combos_flags, "combos", jobs);
    if (*noise) return cmd_noise(noise_common, noise_flags, fractions, jobs);
    if (*eval) return cmd_eval(eval_common, eval_ckpt, eval_data, eval_split);
    if (*compare) return cmd_compare(compare_common, cmp_a, cmp_b);
    if (*exporter) {
      return cmd_export(export_common, exp_ckpt, exp_data, exp_split, exp_layer, exp_count);
    }
    if (*gc) return cmd_gradcheck(gc_common, gc_flags, tolerance);
    if (*synth) return cmd_synth(synth_common, synth_opts);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  return kConfigError;
}
