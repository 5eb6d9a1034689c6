// Thin pybind11 layer. Structured values cross as JSON text; the Python
// package decodes them into dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fsdnet/checkpoint.hpp"
#include "fsdnet/experiment.hpp"
#include "fsdnet/gradcheck.hpp"
#include "fsdnet/metrics.hpp"
#include "fsdnet/trainer.hpp"

namespace py = pybind11;
using namespace fsdnet;
using nlohmann::json;
namespace ex = fsdnet::experiment;

namespace {

std::vector<std::uint8_t> to_labels(const std::vector<int>& labels) {
  std::vector<std::uint8_t> out;
  out.reserve(labels.size());
  for (int l : labels) {
    if (l != 0 && l != 1) throw MetricError("labels must be 0 or 1");
    out.push_back(static_cast<std::uint8_t>(l));
  }
  return out;
}

std::string prepare(const std::string& input, const std::string& schema, const std::string& out_dir,
                    std::uint64_t min_count, const std::string& split, std::uint64_t seed,
                    bool vocab_from_all) {
  ex::PrepareOptions o;
  o.input = input;
  o.schema = schema;
  o.out_dir = out_dir;
  o.min_count = min_count;
  o.ratio = featurestore::SplitRatio::parse(split);
  o.seed = seed;
  o.vocab_from_all = vocab_from_all;
  return ex::prepare_dataset(o).to_json().dump();
}

void synth(const std::string& out_dir, std::size_t rows, std::size_t fields,
           std::uint32_t cardinality, std::uint64_t seed, double label_noise, bool numeric) {
  ex::SyntheticOptions o;
  o.rows = rows;
  o.fields = fields;
  o.cardinality = cardinality;
  o.seed = seed;
  o.noise = label_noise;
  o.numeric_field = numeric;
  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  ex::write_synthetic(dir / "data.csv", dir / "schema.json", o);
}

std::string train_spec(const std::string& spec_json) {
  auto spec = ex::ExperimentSpec::from_json(json::parse(spec_json));
  spec.validate();
  const auto data = featurestore::load_prepared(spec.data_dir);
  py::gil_scoped_release release;
  return ex::run_training(spec, data).aggregate_json().dump();
}

std::string evaluate(const std::string& checkpoint, const std::string& data_dir,
                     const std::string& split) {
  const auto ckpt = net::load_checkpoint(checkpoint);
  const auto data = featurestore::load_prepared(data_dir);
  return train::evaluate_model(ckpt.params, data.split(split)).to_json().dump();
}

std::string run_gradcheck(std::uint64_t seed, double mu, double tau, double gamma,
                          const std::string& combination) {
  gradcheck::ToyOptions toy;
  toy.seed = seed;
  toy.combination = net::parse_combination(combination);
  fsd::ObjectiveConfig objective;
  objective.mu = mu;
  objective.tau = tau;
  objective.gamma = gamma;
  objective.validate();
  const auto problem = gradcheck::make_toy_problem(toy);
  return gradcheck::check(problem.params, problem.batch(), objective).to_json().dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "fsdnet native core";

  // Python built-in exception types keep the wrapper simple for callers.
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IngestionError>(m, "IngestionError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<LookupError>(m, "LookupError", PyExc_IndexError);
  py::register_exception<MetricError>(m, "MetricError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("auc", [](const std::vector<double>& p, const std::vector<int>& y) {
    return metrics::auc(p, to_labels(y));
  }, py::arg("predictions"), py::arg("labels"));
  m.def("logloss", [](const std::vector<double>& p, const std::vector<int>& y) {
    return metrics::logloss(p, to_labels(y));
  }, py::arg("predictions"), py::arg("labels"));
  m.def("t_test_json", [](const std::vector<double>& a, const std::vector<double>& b) {
    return metrics::t_test(a, b).to_json().dump();
  });
  m.def("discretize_numeric", [](double x, double base) {
    return featurestore::discretize_numeric(x, featurestore::LogBase{base});
  }, py::arg("x"), py::arg("base") = 0.0);
  m.def("default_spec_json", [] { return ex::default_spec().to_json().dump(); });
  m.def("spec_digest", [](const std::string& spec_json) {
    return ex::ExperimentSpec::from_json(json::parse(spec_json)).resolved().digest();
  });
  m.def("prepare_json", &prepare);
  m.def("synth", &synth);
  m.def("train_json", &train_spec);
  m.def("evaluate_json", &evaluate);
  m.def("gradcheck_json", &run_gradcheck);
}
