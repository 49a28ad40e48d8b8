#include "ehrtext/models/predictor.hpp"

#include <cmath>

#include "ehrtext/core/errors.hpp"
#include "ehrtext/core/text.hpp"

namespace ehrtext::models {

const char* to_string(Family f) {
  switch (f) {
    case Family::UniHPF: return "UniHPF";
    case Family::DescEmbStar: return "DescEmb*";
    case Family::RajkomarStar: return "Rajkomar*";
    case Family::SAnDStar: return "SAnD*";
    case Family::UniHPFFlat: return "UniHPFFlat";
  }
  return "?";
}

Family family_from_string(std::string_view s) {
  std::string k = to_lower_ascii(s);
  if (k.ends_with("star")) k.resize(k.size() - 4);
  if (k.ends_with("*")) k.pop_back();
  if (k == "unihpf") return Family::UniHPF;
  if (k == "descemb") return Family::DescEmbStar;
  if (k == "rajkomar") return Family::RajkomarStar;
  if (k == "sand") return Family::SAnDStar;
  if (k == "unihpfflat" || k == "unihpf-flat" || k == "unihpf_flat") return Family::UniHPFFlat;
  throw ConfigError("unknown model family '" + std::string(s) + "'");
}

bool uses_subword_tokens(Family f) {
  return f == Family::UniHPF || f == Family::DescEmbStar || f == Family::UniHPFFlat;
}

bool is_hierarchical(Family f) {
  return f == Family::UniHPF || f == Family::DescEmbStar || f == Family::RajkomarStar;
}

bool uses_feature_selection(Family f) { return f == Family::DescEmbStar || f == Family::SAnDStar; }

PredictorSpec PredictorSpec::defaults(Family family, Task task, int num_outputs, const ser::SerializeConfig& ser) {
  PredictorSpec s;
  s.family = family;
  s.task = task;
  s.num_outputs = num_outputs;
  s.f = nn::EncoderConfig{2, 128, 4, 512, 0.1, ser.L_event};
  s.g = nn::EncoderConfig{2, 128, 4, 512, 0.1, ser.N_max};
  s.h = nn::EncoderConfig{4, 128, 4, 512, 0.1, family == Family::UniHPFFlat ? ser.L_flat : ser.N_max};
  return s;
}

void PredictorSpec::validate() const {
  if (num_outputs < 1) throw ConfigError("num_outputs must be positive");
  const auto kind = task_kind();
  if (kind == TaskKind::Binary && num_outputs != 1) throw ConfigError("binary tasks have one output");
  if (kind == TaskKind::Multilabel && num_outputs != kDxClasses) throw ConfigError("Dx has 18 outputs");
  if (kind == TaskKind::Multiclass && num_outputs < 2) throw ConfigError("multiclass tasks need at least 2 classes");
  if (uses_subword_tokens(family)) {
    if (value_vocab || name_vocab || type_vocab)
      throw ConfigError(std::string(to_string(family)) + " embeds sub-word tokens only; value vocabulary not allowed");
    if (token_vocab <= 0) throw ConfigError(std::string(to_string(family)) + " needs a sub-word vocabulary size");
  } else {
    if (token_vocab) throw ConfigError(std::string(to_string(family)) + " uses vocabulary tables, not sub-words");
    if (value_vocab <= 0 || type_vocab <= 0) throw ConfigError("conventional families need value and type tables");
    if (family == Family::RajkomarStar && name_vocab <= 0) throw ConfigError("Rajkomar* needs a name table");
  }
  if (is_hierarchical(family)) {
    f.validate();
    g.validate();
    if (f.model_dim != g.model_dim) throw ConfigError("f and g must share model_dim");
  } else {
    h.validate();
  }
}

nlohmann::json PredictorSpec::to_json() const {
  return {{"family", to_string(family)}, {"f", f.to_json()},           {"g", g.to_json()},
          {"h", h.to_json()},           {"task", ehrtext::to_string(task)}, {"num_outputs", num_outputs},
          {"token_vocab", token_vocab}, {"value_vocab", value_vocab},  {"name_vocab", name_vocab},
          {"type_vocab", type_vocab}};
}

PredictorSpec PredictorSpec::from_json(const nlohmann::json& j) {
  PredictorSpec s;
  try {
    s.family = family_from_string(j.at("family").get<std::string>());
    s.f = nn::EncoderConfig::from_json(j.at("f"));
    s.g = nn::EncoderConfig::from_json(j.at("g"));
    s.h = nn::EncoderConfig::from_json(j.at("h"));
    s.task = task_from_string(j.at("task").get<std::string>());
    s.num_outputs = j.at("num_outputs").get<int>();
    s.token_vocab = j.value("token_vocab", 0);
    s.value_vocab = j.value("value_vocab", 0);
    s.name_vocab = j.value("name_vocab", 0);
    s.type_vocab = j.value("type_vocab", 0);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("predictor spec: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json ParameterReport::to_json() const {
  nlohmann::json tables = nlohmann::json::object();
  for (const auto& [name, n] : input_tables) tables[name] = n;
  return {{"total", total}, {"excluding_input_tables", excluding_input_tables}, {"excluded_input_tables", tables}};
}

std::vector<std::vector<double>> probabilities(TaskKind kind, const nn::Mat<double>& logits) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    auto& row = out[static_cast<std::size_t>(r)];
    row.resize(static_cast<std::size_t>(logits.cols()));
    if (kind == TaskKind::Multiclass) {
      const double m = logits.row(r).maxCoeff();
      double sum = 0;
      for (Eigen::Index c = 0; c < logits.cols(); ++c) sum += row[static_cast<std::size_t>(c)] = std::exp(logits(r, c) - m);
      for (auto& v : row) v /= sum;
    } else {
      for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        const double z = logits(r, c);
        row[static_cast<std::size_t>(c)] = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      }
    }
  }
  return out;
}

template <typename T>
Predictor<T>::Predictor(PredictorSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  declare(seed);
}

template <typename T>
Predictor<T>::Predictor(PredictorSpec spec, nn::ParameterStore<T> params) : spec_(std::move(spec)) {
  spec_.validate();
  declare(0);
  for (auto* p : params_.all()) {
    if (!params.contains(p->name)) throw ConfigError("checkpoint lacks parameter " + p->name);
    const auto& src = params.get(p->name);
    if (src.value.rows() != p->value.rows() || src.value.cols() != p->value.cols())
      throw ConfigError("checkpoint parameter " + p->name + " has the wrong shape");
    p->value = src.value;
  }
  if (params.all().size() != params_.all().size()) throw ConfigError("checkpoint has unexpected parameters");
}

template <typename T>
void Predictor<T>::declare(std::uint64_t seed) {
  Rng rng(seed);
  const auto& s = spec_;
  const int d = is_hierarchical(s.family) ? s.f.model_dim : s.h.model_dim;
  switch (s.family) {
    case Family::UniHPF:
    case Family::DescEmbStar:
      params_.add("emb.token", s.token_vocab, d, nn::Init::Normal, rng, 0.02, true);
      break;
    case Family::RajkomarStar:
      params_.add("emb.cls", 1, d, nn::Init::Normal, rng);
      params_.add("emb.type", s.type_vocab, d, nn::Init::Normal, rng, 0.02, true);
      params_.add("emb.name", s.name_vocab, d, nn::Init::Normal, rng, 0.02, true);
      params_.add("emb.value", s.value_vocab, d, nn::Init::Normal, rng, 0.02, true);
      break;
    case Family::SAnDStar:
      params_.add("emb.type", s.type_vocab, d, nn::Init::Normal, rng, 0.02, true);
      params_.add("emb.value", s.value_vocab, d, nn::Init::Normal, rng, 0.02, true);
      params_.add("h.interval", IntervalBucket::kCount, d, nn::Init::Normal, rng);
      break;
    case Family::UniHPFFlat:
      params_.add("emb.token", s.token_vocab, d, nn::Init::Normal, rng, 0.02, true);
      break;
  }
  if (is_hierarchical(s.family)) {
    nn::declare_encoder(params_, "f", s.f, rng);
    params_.add("g.interval", IntervalBucket::kCount, d, nn::Init::Normal, rng);
    nn::declare_encoder(params_, "g", s.g, rng);
  } else {
    nn::declare_encoder(params_, "h", s.h, rng);
  }
  params_.add("head.ln.g", 1, d, nn::Init::Ones, rng);
  params_.add("head.ln.b", 1, d, nn::Init::Zeros, rng);
  params_.add("head.W", d, s.num_outputs, nn::Init::Normal, rng);
  params_.add("head.b", 1, s.num_outputs, nn::Init::Zeros, rng);
}

template <typename T>
ParameterReport Predictor<T>::parameter_report() const {
  ParameterReport r;
  r.total = params_.count();
  r.excluding_input_tables = params_.count_excluding_input_tables();
  for (const auto* p : params_.all())
    if (p->input_table) r.input_tables.emplace_back(p->name, p->size());
  return r;
}

namespace {

[[noreturn]] void mismatch(Family f, const char* expected) {
  throw ConfigError(std::string(to_string(f)) + " expects " + expected + " input");
}

}  // namespace

template <typename T>
nn::Var Predictor<T>::text_events(nn::Graph<T>& g, const std::vector<const ModelInput*>& batch, Forward& out) {
  std::vector<int> ids;
  out.event_offsets = {0};
  out.sample_offsets = {0};
  for (const auto* in : batch) {
    const auto* h = std::get_if<ser::HierarchicalInput>(in);
    if (!h) mismatch(spec_.family, "hierarchical token");
    if (h->event_sequences.empty()) throw ShapeError("stay without events");
    for (const auto& seq : h->event_sequences) {
      const auto n = seq.content_length();
      ids.insert(ids.end(), seq.ids.begin(), seq.ids.begin() + static_cast<std::ptrdiff_t>(n));
      out.event_offsets.push_back(static_cast<int>(ids.size()));
    }
    out.sample_offsets.push_back(out.sample_offsets.back() + static_cast<int>(h->event_sequences.size()));
  }
  return g.embedding(params_.get("emb.token"), ids);
}

template <typename T>
nn::Var Predictor<T>::conventional_events(nn::Graph<T>& g, const std::vector<const ModelInput*>& batch,
                                          Forward& out) {
  std::vector<int> cls, types, names, values;
  out.event_offsets = {0};
  out.sample_offsets = {0};
  for (const auto* in : batch) {
    const auto* c = std::get_if<ser::ConventionalInput>(in);
    if (!c || c->mode != ser::ConventionalMode::FullHierarchical) mismatch(spec_.family, "full conventional");
    if (c->events.empty()) throw ShapeError("stay without events");
    for (const auto& e : c->events) {
      cls.push_back(0);
      types.push_back(e.type_id);
      names.push_back(-1);
      values.push_back(-1);
      for (std::size_t k = 0; k < e.value_ids.size(); ++k) {
        cls.push_back(-1);
        types.push_back(-1);
        names.push_back(e.name_ids[k]);
        values.push_back(e.value_ids[k]);
      }
      out.event_offsets.push_back(static_cast<int>(cls.size()));
    }
    out.sample_offsets.push_back(out.sample_offsets.back() + static_cast<int>(c->events.size()));
  }
  nn::Var x = g.add(g.embedding(params_.get("emb.cls"), cls), g.embedding(params_.get("emb.type"), types));
  x = g.add(x, g.embedding(params_.get("emb.name"), names));
  return g.add(x, g.embedding(params_.get("emb.value"), values));
}

template <typename T>
nn::Var Predictor<T>::selected_events(nn::Graph<T>& g, const std::vector<const ModelInput*>& batch,
                                      std::vector<int>& intervals, Forward& out) {
  std::vector<int> types, values;
  std::vector<int> feature_offsets = {0};
  out.event_offsets = {0};
  out.sample_offsets = {0};
  for (const auto* in : batch) {
    const auto* c = std::get_if<ser::ConventionalInput>(in);
    if (!c || c->mode != ser::ConventionalMode::SelectedFlat) mismatch(spec_.family, "selected conventional");
    if (c->events.empty()) throw ShapeError("stay without events");
    for (const auto& e : c->events) {
      types.push_back(e.type_id);
      intervals.push_back(e.interval.id());
      values.insert(values.end(), e.value_ids.begin(), e.value_ids.end());
      feature_offsets.push_back(static_cast<int>(values.size()));
    }
    out.sample_offsets.push_back(out.sample_offsets.back() + static_cast<int>(c->events.size()));
  }
  out.f_input = g.embedding(params_.get("emb.value"), values);
  out.event_offsets = feature_offsets;
  nn::Var ev = g.segment_sum(out.f_input, feature_offsets);
  return g.add(ev, g.embedding(params_.get("emb.type"), types));
}

template <typename T>
nn::Var Predictor<T>::head(nn::Graph<T>& g, nn::Var pooled) {
  nn::Var x = g.layer_norm(pooled, params_.get("head.ln.g"), params_.get("head.ln.b"));
  return g.linear(x, params_.get("head.W"), params_.get("head.b"));
}

template <typename T>
typename Predictor<T>::Forward Predictor<T>::forward(nn::Graph<T>& g, const std::vector<const ModelInput*>& batch) {
  if (batch.empty()) throw ShapeError("empty batch");
  Forward out;
  switch (spec_.family) {
    case Family::UniHPF:
    case Family::DescEmbStar:
    case Family::RajkomarStar: {
      out.f_input = spec_.family == Family::RajkomarStar ? conventional_events(g, batch, out)
                                                          : text_events(g, batch, out);
      auto f = nn::encoder_forward(g, params_, "f", spec_.f, out.f_input, out.event_offsets);
      std::vector<int> cls_rows(out.event_offsets.begin(), out.event_offsets.end() - 1);
      out.m = g.gather_rows(f.hidden, cls_rows);
      std::vector<int> intervals;
      for (const auto* in : batch) {
        if (const auto* h = std::get_if<ser::HierarchicalInput>(in))
          for (auto b : h->interval_buckets) intervals.push_back(b.id());
        else
          for (const auto& e : std::get<ser::ConventionalInput>(*in).events) intervals.push_back(e.interval.id());
      }
      nn::Var x = g.add(out.m, g.embedding(params_.get("g.interval"), intervals));
      auto agg = nn::encoder_forward(g, params_, "g", spec_.g, x, out.sample_offsets);
      out.p = g.segment_mean(agg.hidden, out.sample_offsets);
      break;
    }
    case Family::SAnDStar: {
      std::vector<int> intervals;
      nn::Var ev = selected_events(g, batch, intervals, out);
      nn::Var x = g.add(ev, g.embedding(params_.get("h.interval"), intervals));
      auto enc = nn::encoder_forward(g, params_, "h", spec_.h, x, out.sample_offsets);
      out.p = g.segment_mean(enc.hidden, out.sample_offsets);
      break;
    }
    case Family::UniHPFFlat: {
      std::vector<int> ids;
      std::vector<int> offsets = {0};
      for (const auto* in : batch) {
        const auto* fl = std::get_if<ser::FlattenedInput>(in);
        if (!fl) mismatch(spec_.family, "flattened token");
        const auto n = fl->ids.content_length();
        ids.insert(ids.end(), fl->ids.ids.begin(), fl->ids.ids.begin() + static_cast<std::ptrdiff_t>(n));
        offsets.push_back(static_cast<int>(ids.size()));
      }
      out.f_input = g.embedding(params_.get("emb.token"), ids);
      out.event_offsets = offsets;
      out.sample_offsets = offsets;
      auto enc = nn::encoder_forward(g, params_, "h", spec_.h, out.f_input, offsets);
      out.p = g.segment_mean(enc.hidden, offsets);
      break;
    }
  }
  out.logits = head(g, out.p);
  return out;
}

template <typename T>
nn::Var Predictor<T>::loss(nn::Graph<T>& g, nn::Var logits, const std::vector<const Label*>& labels,
                           double pos_weight) const {
  for (const auto* l : labels)
    if (l->task != spec_.task) throw LabelError("label task does not match the model task");
  switch (spec_.task_kind()) {
    case TaskKind::Binary: {
      std::vector<int> y;
      for (const auto* l : labels) y.push_back(l->as_int());
      return g.bce_loss(logits, y, pos_weight);
    }
    case TaskKind::Multiclass: {
      std::vector<int> y;
      for (const auto* l : labels) y.push_back(l->as_int());
      return g.softmax_ce_loss(logits, y);
    }
    case TaskKind::Multilabel: {
      std::vector<std::vector<std::uint8_t>> y;
      for (const auto* l : labels) y.push_back(l->as_multi_hot());
      return g.multilabel_bce_loss(logits, y);
    }
  }
  throw ConfigError("unknown task kind");
}

template <typename T>
std::vector<std::vector<double>> Predictor<T>::predict(const std::vector<const ModelInput*>& batch) {
  nn::Graph<T> g;
  auto fw = forward(g, batch);
  return probabilities(spec_.task_kind(), g.value(fw.logits).template cast<double>());
}

template class Predictor<float>;
template class Predictor<double>;

}  // namespace ehrtext::models
