#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ehrtext/core/errors.hpp"
#include "ehrtext/core/text.hpp"
#include "ehrtext/experiments/metrics.hpp"
#include "ehrtext/experiments/runner.hpp"
#include "ehrtext/ingest/dataset_io.hpp"
#include "ehrtext/serialize/sequences.hpp"
#include "ehrtext/synth/generator.hpp"
#include "ehrtext/tokenize/tokenizer.hpp"

namespace py = pybind11;
using namespace ehrtext;
using json = nlohmann::json;

namespace {

// JSON crosses the boundary as text; the Python wrapper decodes it.
std::string generate(const std::string& config_json, const std::filesystem::path& out_dir) {
  const auto cfg = synth::HospitalConfig::from_json(json::parse(config_json));
  const auto r = synth::generate_hospital(cfg, out_dir);
  return json{{"directory", r.directory.string()},
              {"manifest", r.manifest.string()},
              {"ground_truth", r.ground_truth.string()},
              {"feature_selection", r.feature_selection.string()},
              {"dx_class_map", r.dx_class_map.string()},
              {"oracle_auprc", r.oracle_auprc},
              {"prevalence", r.prevalence},
              {"attempts", r.attempts}}
      .dump();
}

std::string ingest_dataset(const std::filesystem::path& manifest, const std::optional<std::filesystem::path>& dx_map,
                           const std::filesystem::path& out) {
  ingest::IngestionReport rep;
  const auto ds = ingest::ingest(manifest, dx_map, &rep);
  ingest::save_dataset(ds, out);
  return rep.to_json().dump();
}

std::string run_experiment(const std::string& config_json, const std::filesystem::path& base_dir) {
  const auto cfg = exp::ExperimentConfig::from_json(json::parse(config_json), base_dir);
  const auto data = exp::ExperimentData::load(cfg);
  return exp::run_experiment(cfg, data).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of ehrtext";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ManifestError>(m, "ManifestError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<MetricUndefined>(m, "MetricUndefined", PyExc_ValueError);

  m.def("normalize_text", &normalize_text, py::arg("text"));
  m.def("normalize_identifier", &normalize_identifier, py::arg("name"));
  m.def("auprc", &exp::auprc, py::arg("scores"), py::arg("labels"));
  m.def("digit_place_tokens", &tok::digit_place_tokens, py::arg("numeric"));

  py::class_<tok::Tokenizer>(m, "Tokenizer")
      .def(py::init<>())
      .def_static("train", py::overload_cast<const std::vector<std::string>&, int>(&tok::Tokenizer::train),
                  py::arg("corpus"), py::arg("vocab_size"))
      .def("encode", &tok::Tokenizer::encode, py::arg("text"))
      .def("decode", &tok::Tokenizer::decode, py::arg("ids"))
      .def("__len__", &tok::Tokenizer::size)
      .def("token_text", &tok::Tokenizer::token_text, py::arg("id"))
      .def("save", &tok::Tokenizer::save, py::arg("path"))
      .def_static("load", &tok::Tokenizer::load, py::arg("path"))
      .def("to_json_string", [](const tok::Tokenizer& t) { return t.to_json().dump(); })
      .def_static("from_json_string", [](const std::string& s) { return tok::Tokenizer::from_json(json::parse(s)); });

  m.def("_generate_hospital", &generate, py::arg("config_json"), py::arg("out_dir"));
  m.def("_ingest", &ingest_dataset, py::arg("manifest"), py::arg("dx_class_map"), py::arg("out"));
  m.def("_run_experiment", &run_experiment, py::arg("config_json"), py::arg("base_dir"));
}
