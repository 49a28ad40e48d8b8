#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ehrtext/core/errors.hpp"
#include "ehrtext/experiments/importance.hpp"
#include "ehrtext/experiments/plot.hpp"
#include "ehrtext/experiments/runner.hpp"
#include "ehrtext/ingest/dataset_io.hpp"
#include "ehrtext/nn/checkpoint.hpp"
#include "ehrtext/serialize/sequences.hpp"
#include "ehrtext/synth/generator.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
using namespace ehrtext;

namespace {

/// Options every command accepts.
struct Common {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out, "Output path (JSON goes to standard output when omitted)");
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << text;
}

void emit(const json& j, const Common& c) {
  if (c.out.empty())
    std::cout << j.dump(2) << "\n";
  else
    write_file(c.out, j.dump(2) + "\n");
}

std::string require_out(const Common& c, const char* what) {
  if (c.out.empty()) throw ConfigError(std::string("--out is required for ") + what);
  return c.out;
}

/// Applies a nested JSON object of overrides onto `base` (flags beat files).
void merge(json& base, const json& overrides) {
  for (const auto& [k, v] : overrides.items()) {
    if (v.is_object() && base.contains(k) && base[k].is_object())
      merge(base[k], v);
    else
      base[k] = v;
  }
}

struct GenerateArgs {
  std::string config;
  std::string name, schema, code_style, name_style;
  std::optional<int> n_stays, code_namespace, drivers, pool;
  std::optional<double> overlap, event_rate, label_noise, prevalence;
  std::optional<std::uint64_t> risk_seed;
};

int cmd_generate(const GenerateArgs& a, const Common& c) {
  json cfg = a.config.empty() ? json::object() : read_json(a.config);
  if (!a.name.empty()) cfg["name"] = a.name;
  if (!a.schema.empty()) cfg["schema_style"] = a.schema;
  if (!a.code_style.empty()) cfg["code_style"] = a.code_style;
  if (!a.name_style.empty()) cfg["name_style"] = a.name_style;
  if (a.n_stays) cfg["n_stays"] = *a.n_stays;
  if (a.code_namespace) cfg["code_namespace"] = *a.code_namespace;
  if (a.drivers) cfg["mortality_drivers"] = *a.drivers;
  if (a.pool) cfg["concept_pool_size"] = *a.pool;
  if (a.overlap) cfg["vocab_overlap"] = *a.overlap;
  if (a.event_rate) cfg["event_rate"] = *a.event_rate;
  if (a.label_noise) cfg["label_noise"] = *a.label_noise;
  if (a.prevalence) cfg["mortality_prevalence"] = *a.prevalence;
  if (a.risk_seed) cfg["risk_model_seed"] = *a.risk_seed;
  if (c.seed) cfg["seed"] = *c.seed;
  const auto hc = synth::HospitalConfig::from_json(cfg);
  const auto r = synth::generate_hospital(hc, require_out(c, "generate"));
  std::cout << json{{"directory", r.directory.string()},
                    {"manifest", r.manifest.string()},
                    {"ground_truth", r.ground_truth.string()},
                    {"feature_selection", r.feature_selection.string()},
                    {"dx_class_map", r.dx_class_map.string()},
                    {"oracle_auprc", r.oracle_auprc},
                    {"prevalence", r.prevalence},
                    {"attempts", r.attempts}}
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_ingest(const std::string& manifest, const std::string& dx_map, const Common& c) {
  ingest::IngestionReport report;
  std::optional<fs::path> dx;
  if (!dx_map.empty()) dx = dx_map;
  const auto ds = ingest::ingest(manifest, dx, &report);
  ingest::save_dataset(ds, require_out(c, "ingest"));
  std::cout << report.to_json().dump(2) << "\n";
  return 0;
}

int cmd_train_tokenizer(const std::vector<std::string>& data, int vocab_size, const Common& c) {
  std::map<std::string, std::uint64_t> corpus;
  for (const auto& path : data) {
    const auto ds = ingest::load_dataset(path);
    std::vector<const PatientSample*> ptrs;
    for (const auto& s : ds.samples) ptrs.push_back(&s);
    ser::add_to_corpus(corpus, ptrs, ds.descriptions);
  }
  const auto tokenizer = tok::Tokenizer::train(corpus, vocab_size);
  tokenizer.save(require_out(c, "train-tokenizer"));
  std::cout << json{{"vocab_size", tokenizer.size()}, {"merges", tokenizer.to_json().at("merges").size()}}.dump(2)
            << "\n";
  return 0;
}

int cmd_serialize(const std::string& data, const std::string& tokenizer_path, bool flat, int limit,
                  const ser::SerializeConfig& sc, const Common& c) {
  const auto ds = ingest::load_dataset(data);
  const auto tokenizer = tok::Tokenizer::load(tokenizer_path);
  const ser::TextEncoder encoder(tokenizer, ds.descriptions);
  json out = json::array();
  for (std::size_t i = 0; i < ds.samples.size() && (limit < 0 || static_cast<int>(i) < limit); ++i) {
    const auto& s = ds.samples[i];
    json item{{"stay_id", s.stay_id}};
    if (flat)
      item["input"] = ser::to_json(ser::serialize_patient_flattened(s, encoder, sc.L_flat, sc.L_event).ids);
    else
      item["input"] = ser::to_json(ser::serialize_patient_hierarchical(s, encoder, sc.L_event, sc.N_max));
    out.push_back(std::move(item));
  }
  emit(out, c);
  return 0;
}

/// Experiment config assembled from an optional file plus flag overrides.
struct RunArgs {
  std::string config;
  std::string task, family, mode, target;
  std::vector<std::string> data;       // name=path or path
  std::vector<std::string> selection;  // name=path
  std::optional<int> epochs, batch, dim;
  std::optional<double> lr;
};

std::pair<std::string, std::string> name_and_path(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq != std::string::npos) return {arg.substr(0, eq), arg.substr(eq + 1)};
  const auto ds = ingest::load_dataset(arg);
  return {ds.name, arg};
}

exp::ExperimentConfig build_config(const RunArgs& a, const Common& c, bool need_sources) {
  json j = a.config.empty() ? json::object() : read_json(a.config);
  const fs::path base = a.config.empty() ? fs::path() : fs::path(a.config).parent_path();
  json over = json::object();
  if (!a.task.empty()) over["task"] = a.task;
  if (!a.family.empty()) over["family"] = a.family;
  if (!a.mode.empty()) over["mode"] = a.mode;
  if (!a.target.empty()) over["target"] = a.target;
  if (!a.data.empty()) {
    json datasets = json::object(), sources = json::array();
    for (const auto& d : a.data) {
      auto [name, path] = name_and_path(d);
      datasets[name] = fs::absolute(path).string();
      if (name != a.target) sources.push_back(name);
    }
    over["datasets"] = datasets;
    if (!j.contains("sources")) over["sources"] = sources;
  }
  for (const auto& s : a.selection) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--feature-selection expects name=path");
    over["feature_selection"][s.substr(0, eq)] = fs::absolute(s.substr(eq + 1)).string();
  }
  if (a.epochs) over["trainer"]["max_epochs"] = *a.epochs;
  if (a.batch) over["trainer"]["batch"] = *a.batch;
  if (a.lr) over["trainer"]["lr"] = *a.lr;
  if (a.dim) over["model"]["dim"] = *a.dim;
  if (c.seed) over["seeds"] = json::array({*c.seed});
  over["threads"] = c.threads;
  merge(j, over);
  if (!j.contains("sources") && need_sources) throw ConfigError("no datasets given (use --data or a config file)");
  if (!j.contains("sources")) j["sources"] = json::array();
  if (!j.contains("datasets")) j["datasets"] = json::object();
  return exp::ExperimentConfig::from_json(j, base);
}

int cmd_train(const RunArgs& a, const Common& c) {
  auto cfg = build_config(a, c, true);
  cfg.mode = exp::Mode::Single;
  cfg.validate();
  const auto data = exp::ExperimentData::load(cfg);
  const std::uint64_t seed = c.seed.value_or(cfg.seeds.front());
  const auto model = exp::train_on_sources(cfg, data, cfg.sources, seed, nullptr);
  nn::save_checkpoint(require_out(c, "train"), model->checkpoint_config(), model->params);
  std::cout << json{{"training", model->training.to_json()},
                    {"parameters", model->predictor().parameter_report().to_json()}}
                   .dump(2)
            << "\n";
  return 0;
}

exp::TrainedModel load_model(const std::string& path) {
  auto ck = nn::load_checkpoint(path);
  return exp::TrainedModel::from_checkpoint(ck.config, std::move(ck.params));
}

std::vector<std::size_t> select_indices(const ingest::Dataset& ds, Task task, const std::string& split,
                                        std::uint64_t seed) {
  if (split == "all") {
    std::vector<std::size_t> idx(ds.samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
  }
  const auto a = exp::stratified_split(ds.samples, task, seed);
  if (split == "test") return a.indices(ds.samples, exp::Part::Test);
  if (split == "valid") return a.indices(ds.samples, exp::Part::Valid);
  if (split == "train") return a.indices(ds.samples, exp::Part::Train);
  throw ConfigError("--split must be all, train, valid or test");
}

struct EvalArgs {
  std::string checkpoint, data, task, family, split = "test", selection;
  int top_k = 10;
};

void check_model_matches(const exp::TrainedModel& m, const EvalArgs& a, Task task) {
  if (!a.family.empty() && models::family_from_string(a.family) != m.spec.family)
    throw ConfigError("checkpoint holds a " + std::string(models::to_string(m.spec.family)) + " model, not " +
                      a.family);
  if (m.spec.task != task)
    throw ConfigError(std::string("checkpoint was trained for ") + ehrtext::to_string(m.spec.task) + ", not " + a.task);
}

int cmd_evaluate(const EvalArgs& a, const Common& c) {
  const Task task = task_from_string(a.task);
  const auto model = load_model(a.checkpoint);
  check_model_matches(model, a, task);
  const auto ds = ingest::load_dataset(a.data);
  std::optional<ser::FeatureSelection> sel;
  if (!a.selection.empty()) sel = ser::FeatureSelection::load(a.selection);
  const exp::Featurizer fz(model, ds, sel ? &*sel : nullptr);
  const auto idx = select_indices(ds, task, a.split, c.seed.value_or(0));
  const auto set = exp::encode_set(fz, ds, idx, task);
  auto predictor = model.predictor();
  const auto view = set.view();
  const auto r = exp::evaluate(predictor, view, 64);
  emit(json{{"dataset", ds.name},
            {"task", a.task},
            {"family", models::to_string(model.spec.family)},
            {"split", a.split},
            {"samples", idx.size()},
            {"auprc", r.value},
            {"classes_used", r.classes_used},
            {"prevalence", exp::prevalence(model.spec.task_kind(), view.labels, model.spec.num_outputs)}},
       c);
  return 0;
}

int cmd_importance(const EvalArgs& a, const Common& c) {
  const Task task = task_from_string(a.task);
  const auto model = load_model(a.checkpoint);
  check_model_matches(model, a, task);
  const auto ds = ingest::load_dataset(a.data);
  std::optional<ser::FeatureSelection> sel;
  if (!a.selection.empty()) sel = ser::FeatureSelection::load(a.selection);
  const auto idx = select_indices(ds, task, a.split, c.seed.value_or(0));
  const auto ranking = exp::feature_importance(model, ds, idx, task, sel ? &*sel : nullptr);
  emit(exp::to_json(ranking, static_cast<std::size_t>(a.top_k)), c);
  return 0;
}

int cmd_run_experiment(const RunArgs& a, const Common& c) {
  const auto cfg = build_config(a, c, false);
  const auto data = exp::ExperimentData::load(cfg);
  emit(exp::run_experiment(cfg, data), c);
  return 0;
}

int cmd_plot(const std::vector<std::string>& reports, const std::string& title, const std::string& csv,
             const Common& c) {
  std::vector<json> rs;
  for (const auto& r : reports) rs.push_back(read_json(r));
  const auto bars = exp::bars_from_reports(rs);
  write_file(require_out(c, "plot"), exp::bar_chart_svg(bars, title));
  if (!csv.empty()) write_file(csv, exp::bars_to_csv(bars));
  return 0;
}

int cmd_inspect(const std::string& path, const Common& c) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  json out;
  if (bytes.rfind("EHRCKPT1", 0) == 0) {
    const auto ck = nn::checkpoint_from_bytes(bytes);
    const auto model = exp::TrainedModel::from_checkpoint(ck.config, ck.params);
    out = {{"kind", "checkpoint"},
           {"spec", model.spec.to_json()},
           {"parameters", model.predictor().parameter_report().to_json()},
           {"training", ck.config.value("training", json::object())}};
  } else {
    json j;
    try {
      j = json::parse(bytes);
    } catch (const json::exception& e) {
      throw FormatError(path + " is neither a checkpoint nor JSON: " + e.what());
    }
    if (j.contains("merges") && j.contains("vocab")) {
      const auto t = tok::Tokenizer::from_json(j);
      out = {{"kind", "tokenizer"}, {"vocab_size", t.size()}, {"merges", j.at("merges").size()}};
    } else if (j.contains("samples") && j.contains("descriptions")) {
      const auto ds = ingest::dataset_from_json(j);
      std::size_t events = 0;
      for (const auto& s : ds.samples) events += s.events.size();
      out = {{"kind", "dataset"},
             {"name", ds.name},
             {"samples", ds.samples.size()},
             {"events", events},
             {"label_vocab", ds.label_vocab.to_json()}};
    } else if (j.contains("event_tables") && j.contains("stays_table")) {
      const auto m = ingest::manifest_from_json(j, fs::path(path).parent_path());
      ingest::validate_manifest(m);
      out = {{"kind", "manifest"}, {"dataset_name", m.dataset_name}, {"event_tables", m.event_tables.size()}};
    } else if (j.contains("results") && j.contains("config")) {
      out = {{"kind", "report"}, {"results", j.at("results")}};
      if (j.contains("delta_vs_single")) out["delta_vs_single"] = j.at("delta_vs_single");
    } else {
      throw FormatError(path + ": unrecognized JSON document");
    }
  }
  emit(out, c);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-based EHR event-sequence toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  Common common;
  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate a synthetic hospital export");
  add_common(g, common);
  g->add_option("--config", gen.config, "Hospital config JSON")->check(CLI::ExistingFile);
  g->add_option("--name", gen.name, "Dataset name");
  g->add_option("--n-stays", gen.n_stays, "Number of ICU stays");
  g->add_option("--schema", gen.schema, "mimic_like or eicu_like");
  g->add_option("--code-style", gen.code_style, "coded_with_descriptions or raw_text");
  g->add_option("--name-style", gen.name_style, "native, upper_snake, lower_snake, camel or kebab");
  g->add_option("--vocab-overlap", gen.overlap, "Fraction of concepts shared with the reference pool");
  g->add_option("--event-rate", gen.event_rate, "Mean events per hour");
  g->add_option("--risk-model-seed", gen.risk_seed, "Seed of the shared concept risk weights");
  g->add_option("--code-namespace", gen.code_namespace, "Code namespace (0-8)");
  g->add_option("--concept-pool", gen.pool, "Concepts per hospital");
  g->add_option("--label-noise", gen.label_noise, "Logistic noise scale on the mortality risk");
  g->add_option("--prevalence", gen.prevalence, "Target mortality prevalence");
  g->add_option("--mortality-drivers", gen.drivers, "Designated concepts that alone drive mortality");

  std::string manifest, dx_map;
  auto* ing = app.add_subcommand("ingest", "Build a labeled cohort from a manifest");
  add_common(ing, common);
  ing->add_option("--manifest", manifest, "Manifest JSON")->required()->check(CLI::ExistingFile);
  ing->add_option("--dx-map", dx_map, "Diagnosis code to class CSV")->check(CLI::ExistingFile);

  std::vector<std::string> tok_data;
  int vocab_size = 2048;
  auto* tt = app.add_subcommand("train-tokenizer", "Train a byte-pair tokenizer on ingested datasets");
  add_common(tt, common);
  tt->add_option("--data", tok_data, "Ingested dataset JSON (repeatable)")->required()->check(CLI::ExistingFile);
  tt->add_option("--vocab-size", vocab_size, "Total vocabulary size");

  std::string ser_data, ser_tok;
  bool ser_flat = false;
  int ser_limit = -1;
  ser::SerializeConfig sc;
  auto* se = app.add_subcommand("serialize", "Serialize stays into token sequences");
  add_common(se, common);
  se->add_option("--data", ser_data, "Ingested dataset JSON")->required()->check(CLI::ExistingFile);
  se->add_option("--tokenizer", ser_tok, "Tokenizer JSON")->required()->check(CLI::ExistingFile);
  se->add_flag("--flat", ser_flat, "One flattened sequence per stay");
  se->add_option("--limit", ser_limit, "Serialize at most this many stays");
  se->add_option("--l-event", sc.L_event, "Tokens per event");
  se->add_option("--n-max", sc.N_max, "Events per stay");
  se->add_option("--l-flat", sc.L_flat, "Tokens per flattened stay");

  RunArgs train_args, run_args;
  auto add_run = [&](CLI::App* cmd, RunArgs& r) {
    add_common(cmd, common);
    cmd->add_option("--config", r.config, "Experiment config JSON")->check(CLI::ExistingFile);
    cmd->add_option("--task", r.task, "Mort, LOS3, LOS7, Readm, Fi_ac, Im_disch or Dx");
    cmd->add_option("--family", r.family, "UniHPF, DescEmb*, Rajkomar*, SAnD* or UniHPFFlat");
    cmd->add_option("--data", r.data, "Ingested dataset JSON, optionally name=path (repeatable)");
    cmd->add_option("--feature-selection", r.selection, "name=path of a feature selection (repeatable)");
    cmd->add_option("--epochs", r.epochs, "Maximum epochs");
    cmd->add_option("--batch", r.batch, "Batch size");
    cmd->add_option("--lr", r.lr, "Learning rate");
    cmd->add_option("--dim", r.dim, "Model width");
  };
  auto* tr = app.add_subcommand("train", "Train one model and write a checkpoint");
  add_run(tr, train_args);
  auto* re = app.add_subcommand("run-experiment", "Run a multi-seed experiment and print its report");
  add_run(re, run_args);
  re->add_option("--mode", run_args.mode, "single, pooled, transfer_zero_shot or transfer_finetune");
  re->add_option("--target", run_args.target, "Target dataset name for transfer modes");

  EvalArgs eval_args, imp_args;
  auto add_eval = [&](CLI::App* cmd, EvalArgs& e) {
    add_common(cmd, common);
    cmd->add_option("--checkpoint", e.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--data", e.data, "Ingested dataset JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--task", e.task, "Task the checkpoint was trained for")->required();
    cmd->add_option("--family", e.family, "Expected model family");
    cmd->add_option("--split", e.split, "all, train, valid or test (split seed from --seed)");
    cmd->add_option("--feature-selection", e.selection, "Feature selection JSON")->check(CLI::ExistingFile);
  };
  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset");
  add_eval(ev, eval_args);
  auto* im = app.add_subcommand("importance", "Rank features by gradient importance");
  add_eval(im, imp_args);
  im->add_option("--top-k", imp_args.top_k, "Entries to report");

  std::vector<std::string> plot_reports;
  std::string plot_title = "AUPRC", plot_csv;
  auto* pl = app.add_subcommand("plot", "Bar chart of experiment reports");
  add_common(pl, common);
  pl->add_option("--report", plot_reports, "Report JSON (repeatable)")->required()->check(CLI::ExistingFile);
  pl->add_option("--title", plot_title, "Chart title");
  pl->add_option("--csv", plot_csv, "Also write the bars as CSV");

  std::string inspect_path;
  auto* in = app.add_subcommand("inspect", "Summarize a checkpoint, tokenizer, dataset, manifest or report");
  add_common(in, common);
  in->add_option("path", inspect_path, "File to inspect")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, std::cerr, std::cerr);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*g) return cmd_generate(gen, common);
    if (*ing) return cmd_ingest(manifest, dx_map, common);
    if (*tt) return cmd_train_tokenizer(tok_data, vocab_size, common);
    if (*se) return cmd_serialize(ser_data, ser_tok, ser_flat, ser_limit, sc, common);
    if (*tr) return cmd_train(train_args, common);
    if (*re) return cmd_run_experiment(run_args, common);
    if (*ev) return cmd_evaluate(eval_args, common);
    if (*im) return cmd_importance(imp_args, common);
    if (*pl) return cmd_plot(plot_reports, plot_title, plot_csv, common);
    if (*in) return cmd_inspect(inspect_path, common);
  } catch (const ManifestError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const LabelError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const MetricUndefined& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
