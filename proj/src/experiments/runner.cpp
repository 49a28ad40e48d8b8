#include "ehrtext/experiments/runner.hpp"

#include <chrono>
#include <future>

#include "ehrtext/core/errors.hpp"
#include "ehrtext/core/text.hpp"
#include "ehrtext/nn/checkpoint.hpp"

namespace ehrtext::exp {

using nlohmann::json;

const char* to_string(Mode m) {
  switch (m) {
    case Mode::Single: return "single";
    case Mode::Pooled: return "pooled";
    case Mode::ZeroShot: return "transfer_zero_shot";
    case Mode::FineTune: return "transfer_finetune";
  }
  return "?";
}

Mode mode_from_string(std::string_view s) {
  const auto k = to_lower_ascii(s);
  if (k == "single") return Mode::Single;
  if (k == "pooled") return Mode::Pooled;
  if (k == "transfer_zero_shot" || k == "zero_shot" || k == "zero-shot") return Mode::ZeroShot;
  if (k == "transfer_finetune" || k == "finetune" || k == "fine-tune") return Mode::FineTune;
  throw ConfigError("unknown experiment mode '" + std::string(s) + "'");
}

json ModelConfig::to_json() const {
  return {{"dim", dim},         {"heads", heads},       {"ffn", ffn},          {"dropout", dropout},
          {"f_layers", f_layers}, {"g_layers", g_layers}, {"h_layers", h_layers}};
}

ModelConfig ModelConfig::from_json(const json& j, const ModelConfig& d) {
  ModelConfig c = d;
  c.dim = j.value("dim", c.dim);
  c.heads = j.value("heads", c.heads);
  c.ffn = j.value("ffn", c.ffn);
  c.dropout = j.value("dropout", c.dropout);
  c.f_layers = j.value("f_layers", c.f_layers);
  c.g_layers = j.value("g_layers", c.g_layers);
  c.h_layers = j.value("h_layers", c.h_layers);
  return c;
}

void ExperimentConfig::validate() const {
  if (sources.empty()) throw ConfigError("experiment needs at least one source dataset");
  for (const auto& s : sources)
    if (!datasets.count(s)) throw ConfigError("source '" + s + "' is not listed under datasets");
  const bool transfer = mode == Mode::ZeroShot || mode == Mode::FineTune;
  if (transfer) {
    if (target.empty()) throw ConfigError("transfer modes need a target dataset");
    if (!datasets.count(target)) throw ConfigError("target '" + target + "' is not listed under datasets");
    for (const auto& s : sources)
      if (s == target) throw ConfigError("transfer target must differ from the sources");
  }
  if (mode == Mode::Single && sources.size() != 1) throw ConfigError("single mode takes exactly one source");
  if (mode == Mode::Pooled && sources.size() < 2) throw ConfigError("pooled mode needs at least two sources");
  if (mode == Mode::FineTune && sources.size() != 1) throw ConfigError("fine-tuning takes exactly one source");
  if (mode != Mode::Single && (task == Task::FiAc || task == Task::ImDisch))
    throw ConfigError(std::string(ehrtext::to_string(task)) +
                      " labels are not comparable across datasets; only single mode is allowed");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (threads < 1) throw ConfigError("threads must be positive");
  if (vocab_size <= tok::special::kFirstMerge && models::uses_subword_tokens(family))
    throw ConfigError("vocab_size must exceed " + std::to_string(tok::special::kFirstMerge));
  if (serialize.L_event < 8 || serialize.N_max < 1 || serialize.L_flat < 8)
    throw ConfigError("serialize lengths out of range");
  if (models::uses_feature_selection(family)) {
    std::vector<std::string> needed = sources;
    if (transfer) needed.push_back(target);
    for (const auto& n : needed)
      if (!feature_selection.count(n))
        throw ConfigError(std::string(models::to_string(family)) + " needs a feature selection for '" + n + "'");
  }
  trainer.validate();
}

json ExperimentConfig::to_json() const {
  return {{"task", ehrtext::to_string(task)},
          {"family", models::to_string(family)},
          {"mode", to_string(mode)},
          {"datasets", datasets},
          {"sources", sources},
          {"target", target},
          {"feature_selection", feature_selection},
          {"seeds", seeds},
          {"trainer", trainer.to_json()},
          {"model", model.to_json()},
          {"serialize", {{"L_event", serialize.L_event}, {"N_max", serialize.N_max}, {"L_flat", serialize.L_flat}}},
          {"vocab_size", vocab_size},
          {"numeric_bins", numeric_bins},
          {"zero_shot_eval", zero_shot_all ? "all" : "test"},
          {"threads", threads},
          {"compare_single", compare_single}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  try {
    c.task = task_from_string(j.at("task").get<std::string>());
    c.family = models::family_from_string(j.at("family").get<std::string>());
    c.mode = mode_from_string(j.value("mode", std::string("single")));
    const auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return (path.is_relative() && !base_dir.empty() ? base_dir / path : path).string();
    };
    for (const auto& [name, path] : j.at("datasets").items()) c.datasets[name] = resolve(path.get<std::string>());
    c.sources = j.at("sources").get<std::vector<std::string>>();
    c.target = j.value("target", std::string());
    if (j.contains("feature_selection"))
      for (const auto& [name, path] : j.at("feature_selection").items())
        c.feature_selection[name] = resolve(path.get<std::string>());
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("trainer")) c.trainer = TrainerConfig::from_json(j.at("trainer"));
    if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"), c.model);
    if (j.contains("serialize")) {
      const auto& s = j.at("serialize");
      c.serialize.L_event = s.value("L_event", c.serialize.L_event);
      c.serialize.N_max = s.value("N_max", c.serialize.N_max);
      c.serialize.L_flat = s.value("L_flat", c.serialize.L_flat);
    }
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.numeric_bins = j.value("numeric_bins", c.numeric_bins);
    const auto zs = j.value("zero_shot_eval", std::string("all"));
    if (zs != "all" && zs != "test") throw ConfigError("zero_shot_eval must be \"all\" or \"test\"");
    c.zero_shot_all = zs == "all";
    c.threads = j.value("threads", c.threads);
    c.compare_single = j.value("compare_single", c.compare_single);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

const ingest::Dataset& ExperimentData::dataset(const std::string& name) const {
  auto it = datasets.find(name);
  if (it == datasets.end() || !it->second) throw ConfigError("dataset '" + name + "' is not loaded");
  return *it->second;
}

const ser::FeatureSelection* ExperimentData::selection(const std::string& name) const {
  auto it = selections.find(name);
  return it == selections.end() ? nullptr : &it->second;
}

ExperimentData ExperimentData::load(const ExperimentConfig& cfg) {
  ExperimentData d;
  std::vector<std::string> names = cfg.sources;
  if (!cfg.target.empty()) names.push_back(cfg.target);
  for (const auto& n : names) {
    if (d.datasets.count(n)) continue;
    d.datasets[n] = std::make_shared<const ingest::Dataset>(ingest::load_dataset(cfg.datasets.at(n)));
  }
  for (const auto& [n, path] : cfg.feature_selection) d.selections[n] = ser::FeatureSelection::load(path);
  return d;
}

json TrainedModel::checkpoint_config() const {
  json j = {{"spec", spec.to_json()},
            {"serialize", {{"L_event", serialize.L_event}, {"N_max", serialize.N_max}, {"L_flat", serialize.L_flat}}},
            {"training", training.to_json()}};
  if (tokenizer) j["tokenizer"] = tokenizer->to_json();
  if (vocab) j["vocab"] = vocab->to_json();
  return j;
}

TrainedModel TrainedModel::from_checkpoint(const json& config, nn::ParameterStore<float> params) {
  TrainedModel m;
  try {
    m.spec = models::PredictorSpec::from_json(config.at("spec"));
    const auto& s = config.at("serialize");
    m.serialize.L_event = s.at("L_event").get<int>();
    m.serialize.N_max = s.at("N_max").get<int>();
    m.serialize.L_flat = s.at("L_flat").get<int>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  if (config.contains("tokenizer")) m.tokenizer = tok::Tokenizer::from_json(config.at("tokenizer"));
  if (config.contains("vocab")) m.vocab = ser::ConventionalVocab::from_json(config.at("vocab"));
  if (models::uses_subword_tokens(m.spec.family) ? !m.tokenizer : !m.vocab)
    throw FormatError("checkpoint lacks the embedding source of its family");
  m.params = std::move(params);
  return m;
}

Featurizer::Featurizer(const TrainedModel& model, const ingest::Dataset& dataset,
                       const ser::FeatureSelection* selection)
    : model_(&model), dataset_(&dataset), selection_(selection) {
  const auto fam = model.spec.family;
  if (models::uses_feature_selection(fam)) {
    if (!selection) throw ConfigError(std::string(models::to_string(fam)) + " needs a feature selection");
    ser::validate_selection(*selection, ser::schema_of(dataset.samples));
  } else if (selection) {
    throw ConfigError(std::string(models::to_string(fam)) + " does not take a feature selection");
  }
  if (models::uses_subword_tokens(fam)) {
    if (!model.tokenizer) throw ConfigError("model has no tokenizer");
    encoder_.emplace(*model.tokenizer, dataset.descriptions);
  } else if (!model.vocab) {
    throw ConfigError("model has no value vocabulary");
  }
}

PatientSample Featurizer::view(const PatientSample& s) const {
  return selection_ && model_->spec.family == models::Family::DescEmbStar ? ser::apply_selection(s, *selection_) : s;
}

models::ModelInput Featurizer::operator()(const PatientSample& s) const {
  const auto& sc = model_->serialize;
  switch (model_->spec.family) {
    case models::Family::UniHPF:
      return ser::serialize_patient_hierarchical(s, *encoder_, sc.L_event, sc.N_max);
    case models::Family::DescEmbStar:
      return ser::serialize_patient_hierarchical(ser::apply_selection(s, *selection_), *encoder_, sc.L_event,
                                                 sc.N_max);
    case models::Family::RajkomarStar:
      return ser::serialize_conventional(s, nullptr, *model_->vocab, ser::ConventionalMode::FullHierarchical,
                                         sc.N_max, sc.L_event - 1);
    case models::Family::SAnDStar:
      return ser::serialize_conventional(s, selection_, *model_->vocab, ser::ConventionalMode::SelectedFlat, sc.N_max,
                                         1 << 20);
    case models::Family::UniHPFFlat:
      return ser::serialize_patient_flattened(s, *encoder_, sc.L_flat, sc.L_event);
  }
  throw ConfigError("unknown family");
}

LabeledSet EncodedSet::view() const {
  LabeledSet v;
  for (const auto& in : inputs) v.inputs.push_back(&in);
  v.labels = labels;
  return v;
}

EncodedSet encode_set(const Featurizer& fz, const ingest::Dataset& ds, const std::vector<std::size_t>& indices,
                      Task task) {
  EncodedSet out;
  out.inputs.reserve(indices.size());
  for (auto i : indices) {
    const auto& s = ds.samples.at(i);
    auto it = s.labels.find(task);
    if (it == s.labels.end())
      throw ConfigError("dataset '" + ds.name + "' has no " + ehrtext::to_string(task) + " label for stay " +
                        s.stay_id);
    out.inputs.push_back(fz(s));
    out.labels.push_back(&it->second);
  }
  return out;
}

std::shared_ptr<const TrainedModel> RunCache::find(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = models_.find(key);
  return it == models_.end() ? nullptr : it->second;
}

void RunCache::store(const std::string& key, std::shared_ptr<const TrainedModel> model) {
  std::lock_guard lock(mutex_);
  models_.emplace(key, std::move(model));
}

std::size_t RunCache::size() const {
  std::lock_guard lock(mutex_);
  return models_.size();
}

int num_outputs_for(Task task, const ingest::Dataset& ds) {
  switch (task_kind(task)) {
    case TaskKind::Binary: return 1;
    case TaskKind::Multilabel: return kDxClasses;
    case TaskKind::Multiclass: {
      const auto n = task == Task::FiAc ? ds.label_vocab.final_acuity.size() : ds.label_vocab.imminent_discharge.size();
      return static_cast<int>(std::max<std::size_t>(n, 2));
    }
  }
  return 1;
}

namespace {

models::PredictorSpec make_spec(const ExperimentConfig& cfg, int num_outputs) {
  auto spec = models::PredictorSpec::defaults(cfg.family, cfg.task, num_outputs, cfg.serialize);
  const auto& m = cfg.model;
  for (auto* e : {&spec.f, &spec.g, &spec.h}) {
    e->model_dim = m.dim;
    e->heads = m.heads;
    e->ffn_dim = m.ffn;
    e->dropout = m.dropout;
  }
  spec.f.layers = m.f_layers;
  spec.g.layers = m.g_layers;
  spec.h.layers = m.h_layers;
  return spec;
}

json selection_json(const ExperimentConfig& cfg, const ExperimentData& data, const std::vector<std::string>& names) {
  json j = json::object();
  if (!models::uses_feature_selection(cfg.family)) return j;
  for (const auto& n : names)
    if (const auto* s = data.selection(n)) j[n] = s->to_json();
  return j;
}

std::string base_key(const ExperimentConfig& cfg) {
  return json{{"family", models::to_string(cfg.family)},
              {"task", ehrtext::to_string(cfg.task)},
              {"trainer", cfg.trainer.to_json()},
              {"model", cfg.model.to_json()},
              {"serialize", {cfg.serialize.L_event, cfg.serialize.N_max, cfg.serialize.L_flat}},
              {"vocab_size", cfg.vocab_size},
              {"numeric_bins", cfg.numeric_bins}}
      .dump();
}

std::string source_key(const ExperimentConfig& cfg, const ExperimentData& data, const std::vector<std::string>& sources,
                       std::uint64_t seed) {
  std::vector<std::string> sorted = sources;
  std::sort(sorted.begin(), sorted.end());
  return base_key(cfg) + json{{"sources", sorted}, {"seed", seed}, {"selection", selection_json(cfg, data, sorted)}}.dump();
}

struct Splits {
  std::vector<std::size_t> train, valid, test;
};

Splits split_of(const ingest::Dataset& ds, Task task, std::uint64_t seed) {
  const auto a = stratified_split(ds.samples, task, seed);
  return {a.indices(ds.samples, Part::Train), a.indices(ds.samples, Part::Valid), a.indices(ds.samples, Part::Test)};
}

void append(EncodedSet& dst, EncodedSet&& src) {
  for (auto& in : src.inputs) dst.inputs.push_back(std::move(in));
  dst.labels.insert(dst.labels.end(), src.labels.begin(), src.labels.end());
}

}  // namespace

std::shared_ptr<const TrainedModel> train_on_sources(const ExperimentConfig& cfg, const ExperimentData& data,
                                                     const std::vector<std::string>& sources, std::uint64_t seed,
                                                     RunCache* cache) {
  const auto key = source_key(cfg, data, sources, seed);
  if (cache)
    if (auto hit = cache->find(key)) return hit;

  auto tm = std::make_shared<TrainedModel>();
  tm->serialize = cfg.serialize;
  std::map<std::string, Splits> splits;
  std::vector<const PatientSample*> train_samples;
  for (const auto& s : sources) {
    const auto& ds = data.dataset(s);
    splits[s] = split_of(ds, cfg.task, seed);
    for (auto i : splits[s].train) train_samples.push_back(&ds.samples[i]);
  }
  if (models::uses_subword_tokens(cfg.family)) {
    std::map<std::string, std::uint64_t> corpus;
    for (const auto& s : sources) {
      const auto& ds = data.dataset(s);
      std::vector<const PatientSample*> part;
      for (auto i : splits[s].train) part.push_back(&ds.samples[i]);
      ser::add_to_corpus(corpus, part, ds.descriptions);
    }
    tm->tokenizer = tok::Tokenizer::train(corpus, cfg.vocab_size);
  } else {
    tm->vocab = ser::ConventionalVocab::build(train_samples, cfg.numeric_bins);
  }
  tm->spec = make_spec(cfg, num_outputs_for(cfg.task, data.dataset(sources.front())));
  if (tm->tokenizer) {
    tm->spec.token_vocab = tm->tokenizer->size();
  } else {
    tm->spec.value_vocab = tm->vocab->value_count();
    tm->spec.type_vocab = tm->vocab->type_count();
    if (cfg.family == models::Family::RajkomarStar) tm->spec.name_vocab = tm->vocab->name_count();
  }
  tm->spec.validate();

  EncodedSet train, valid;
  for (const auto& s : sources) {
    const auto& ds = data.dataset(s);
    Featurizer fz(*tm, ds, models::uses_feature_selection(cfg.family) ? data.selection(s) : nullptr);
    append(train, encode_set(fz, ds, splits[s].train, cfg.task));
    append(valid, encode_set(fz, ds, splits[s].valid, cfg.task));
  }
  models::Predictor<float> model(tm->spec, splitmix64(seed ^ 0x6d6f64656cULL));
  tm->training = train_model(model, train.view(), valid.view(), cfg.trainer, seed);
  tm->params = std::move(model.params());
  std::shared_ptr<const TrainedModel> out = tm;
  if (cache) cache->store(key, out);
  return out;
}

std::shared_ptr<const TrainedModel> finetune_on_target(const ExperimentConfig& cfg, const ExperimentData& data,
                                                       const TrainedModel& source, const std::string& src_key,
                                                       const std::string& target, std::uint64_t seed, RunCache* cache) {
  const auto key = src_key + json{{"finetune", target}, {"seed", seed},
                                  {"selection", selection_json(cfg, data, {target})}}.dump();
  if (cache)
    if (auto hit = cache->find(key)) return hit;
  const auto& ds = data.dataset(target);
  const auto sp = split_of(ds, cfg.task, seed);
  auto tm = std::make_shared<TrainedModel>();
  tm->serialize = source.serialize;
  tm->tokenizer = source.tokenizer;
  tm->vocab = source.vocab;
  tm->spec = source.spec;
  if (tm->spec.num_outputs != num_outputs_for(cfg.task, ds)) throw ConfigError("target task head size differs");
  if (tm->vocab) {
    std::vector<const PatientSample*> part;
    for (auto i : sp.train) part.push_back(&ds.samples[i]);
    tm->vocab->extend(part);
    tm->spec.value_vocab = tm->vocab->value_count();
    tm->spec.type_vocab = tm->vocab->type_count();
    if (tm->spec.family == models::Family::RajkomarStar) tm->spec.name_vocab = tm->vocab->name_count();
  }
  models::Predictor<float> model(tm->spec, splitmix64(seed ^ 0x66696e65ULL));
  for (auto* p : model.params().all()) {
    const auto& old = source.params.get(p->name).value;
    p->value.topLeftCorner(old.rows(), old.cols()) = old;
  }
  Featurizer fz(*tm, ds, models::uses_feature_selection(cfg.family) ? data.selection(target) : nullptr);
  auto train = encode_set(fz, ds, sp.train, cfg.task);
  auto valid = encode_set(fz, ds, sp.valid, cfg.task);
  tm->training = train_model(model, train.view(), valid.view(), cfg.trainer, seed);
  tm->params = std::move(model.params());
  std::shared_ptr<const TrainedModel> out = tm;
  if (cache) cache->store(key, out);
  return out;
}

namespace {

struct EvalResult {
  double auprc = 0.0;
  double prevalence = 0.0;
};

EvalResult evaluate_on(const ExperimentConfig& cfg, const ExperimentData& data, const TrainedModel& tm,
                       const std::string& name, const std::vector<std::size_t>& indices) {
  const auto& ds = data.dataset(name);
  Featurizer fz(tm, ds, models::uses_feature_selection(cfg.family) ? data.selection(name) : nullptr);
  auto set = encode_set(fz, ds, indices, cfg.task);
  auto model = tm.predictor();
  const auto view = set.view();
  EvalResult r;
  r.auprc = evaluate(model, view, cfg.trainer.eval_batch).value;
  r.prevalence = prevalence(tm.spec.task_kind(), view.labels, tm.spec.num_outputs);
  return r;
}

struct SeedOutcome {
  std::map<std::string, EvalResult> results;
  std::map<std::string, EvalResult> single;
  json training = json::object();
  json parameters;
  bool parameters_unchanged = true;
};

SeedOutcome run_seed(const ExperimentConfig& cfg, const ExperimentData& data, std::uint64_t seed, RunCache* cache) {
  SeedOutcome out;
  const auto single_on = [&](const std::string& name) {
    auto m = train_on_sources(cfg, data, {name}, seed, cache);
    out.single[name] = evaluate_on(cfg, data, *m, name, split_of(data.dataset(name), cfg.task, seed).test);
  };
  switch (cfg.mode) {
    case Mode::Single: {
      const auto& name = cfg.sources.front();
      auto m = train_on_sources(cfg, data, cfg.sources, seed, cache);
      out.results[name] = evaluate_on(cfg, data, *m, name, split_of(data.dataset(name), cfg.task, seed).test);
      out.training[name] = m->training.to_json();
      out.parameters = m->predictor().parameter_report().to_json();
      break;
    }
    case Mode::Pooled: {
      auto m = train_on_sources(cfg, data, cfg.sources, seed, cache);
      for (const auto& name : cfg.sources) {
        out.results[name] = evaluate_on(cfg, data, *m, name, split_of(data.dataset(name), cfg.task, seed).test);
        if (cfg.compare_single) single_on(name);
      }
      out.training["pooled"] = m->training.to_json();
      out.parameters = m->predictor().parameter_report().to_json();
      break;
    }
    case Mode::ZeroShot: {
      auto m = train_on_sources(cfg, data, cfg.sources, seed, cache);
      const auto before = nn::checkpoint_hash(m->checkpoint_config(), m->params);
      const auto& ds = data.dataset(cfg.target);
      std::vector<std::size_t> idx;
      if (cfg.zero_shot_all) {
        for (std::size_t i = 0; i < ds.samples.size(); ++i) idx.push_back(i);
      } else {
        idx = split_of(ds, cfg.task, seed).test;
      }
      out.results[cfg.target] = evaluate_on(cfg, data, *m, cfg.target, idx);
      out.parameters_unchanged = nn::checkpoint_hash(m->checkpoint_config(), m->params) == before;
      if (cfg.compare_single) single_on(cfg.target);
      out.training["source"] = m->training.to_json();
      out.parameters = m->predictor().parameter_report().to_json();
      break;
    }
    case Mode::FineTune: {
      auto src = train_on_sources(cfg, data, cfg.sources, seed, cache);
      auto ft = finetune_on_target(cfg, data, *src, source_key(cfg, data, cfg.sources, seed), cfg.target, seed, cache);
      out.results[cfg.target] =
          evaluate_on(cfg, data, *ft, cfg.target, split_of(data.dataset(cfg.target), cfg.task, seed).test);
      if (cfg.compare_single) single_on(cfg.target);
      out.training["source"] = src->training.to_json();
      out.training["finetune"] = ft->training.to_json();
      out.parameters = ft->predictor().parameter_report().to_json();
      break;
    }
  }
  return out;
}

json summarize(const std::vector<SeedOutcome>& runs, std::map<std::string, EvalResult> SeedOutcome::*field) {
  json out = json::object();
  if (runs.empty()) return out;
  for (const auto& [name, r] : runs.front().*field) {
    (void)r;
    std::vector<double> values;
    double prev = 0.0;
    for (const auto& run : runs) {
      values.push_back((run.*field).at(name).auprc);
      prev += (run.*field).at(name).prevalence;
    }
    auto j = MetricReport::from_values(values).to_json();
    j["prevalence"] = prev / static_cast<double>(runs.size());
    out[name] = j;
  }
  return out;
}

}  // namespace

json run_experiment(const ExperimentConfig& cfg, const ExperimentData& data, RunCache* cache) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  RunCache local;
  if (!cache) cache = &local;
  std::vector<SeedOutcome> runs(cfg.seeds.size());
  for (std::size_t i = 0; i < cfg.seeds.size(); i += static_cast<std::size_t>(cfg.threads)) {
    std::vector<std::future<SeedOutcome>> wave;
    const auto end = std::min(cfg.seeds.size(), i + static_cast<std::size_t>(cfg.threads));
    for (std::size_t k = i; k < end; ++k)
      wave.push_back(std::async(cfg.threads > 1 ? std::launch::async : std::launch::deferred,
                                [&, k] { return run_seed(cfg, data, cfg.seeds[k], cache); }));
    for (std::size_t k = i; k < end; ++k) runs[k] = wave[k - i].get();
  }
  json report;
  report["config"] = cfg.to_json();
  report["results"] = summarize(runs, &SeedOutcome::results);
  if (cfg.compare_single && cfg.mode != Mode::Single) {
    report["single"] = summarize(runs, &SeedOutcome::single);
    json delta = json::object();
    for (const auto& [name, r] : runs.front().results) {
      (void)r;
      if (!runs.front().single.count(name)) continue;
      std::vector<double> d;
      for (const auto& run : runs) d.push_back(run.results.at(name).auprc - run.single.at(name).auprc);
      delta[name] = MetricReport::from_values(d).to_json();
    }
    report["delta_vs_single"] = delta;
  }
  report["parameters"] = runs.front().parameters;
  json training = json::array();
  bool unchanged = true;
  for (const auto& run : runs) {
    training.push_back(run.training);
    unchanged = unchanged && run.parameters_unchanged;
  }
  report["training"] = training;
  if (cfg.mode == Mode::ZeroShot) report["parameters_unchanged"] = unchanged;
  report["wallclock_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace ehrtext::exp
