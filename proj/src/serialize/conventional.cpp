#include "ehrtext/serialize/conventional.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>

#include "ehrtext/core/errors.hpp"

namespace ehrtext::ser {

bool FeatureSelection::selects(const EventType& type, const FeatureName& name) const {
  auto it = features.find(type);
  if (it == features.end()) return false;
  return std::find(it->second.begin(), it->second.end(), name) != it->second.end();
}

nlohmann::json FeatureSelection::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [type, names] : features) {
    auto& arr = j[type.text()] = nlohmann::json::array();
    for (const auto& n : names) arr.push_back(n.text());
  }
  return j;
}

FeatureSelection FeatureSelection::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("feature selection must be a JSON object");
  FeatureSelection sel;
  try {
    for (const auto& [type, names] : j.items()) {
      auto& out = sel.features[EventType(type)];
      for (const auto& n : names) out.emplace_back(n.get<std::string>());
    }
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad feature selection: ") + e.what());
  }
  return sel;
}

FeatureSelection FeatureSelection::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open feature selection " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

Schema schema_of(const std::vector<PatientSample>& samples) {
  Schema schema;
  for (const auto& s : samples)
    for (const auto& e : s.events)
      for (const auto& f : e.features) schema.emplace(e.event_type, f.name);
  return schema;
}

void validate_selection(const FeatureSelection& selection, const Schema& schema) {
  for (const auto& [type, names] : selection.features)
    for (const auto& n : names)
      if (!schema.count({type, n}))
        throw ConfigError("feature selection references unknown feature '" + type.text() + "." + n.text() + "'");
}

namespace {

std::string column_key(const EventType& type, const FeatureName& name) { return type.text() + '\x1f' + name.text(); }

std::vector<double> quantile_edges(std::vector<double> values, int bins) {
  std::sort(values.begin(), values.end());
  std::vector<double> edges;
  for (int k = 1; k < bins; ++k) {
    const auto idx = static_cast<std::size_t>(static_cast<double>(k) * static_cast<double>(values.size()) / bins);
    const double edge = values[std::min(idx, values.size() - 1)];
    if (edges.empty() || edge > edges.back()) edges.push_back(edge);
  }
  return edges;
}

void add_key(std::map<std::string, int>& table, const std::string& key) {
  if (!table.count(key)) table.emplace(key, static_cast<int>(table.size()) + 1);
}

int find_key(const std::map<std::string, int>& table, const std::string& key) {
  auto it = table.find(key);
  return it == table.end() ? ConventionalVocab::kOov : it->second;
}

}  // namespace

std::string ConventionalVocab::value_key(const EventType& type, const Feature& feature) const {
  const std::string col = column_key(type, feature.name);
  if (feature.value.kind == ValueKind::Numeric) {
    auto it = numeric_edges_.find(col);
    if (it != numeric_edges_.end()) {
      const double x = std::strtod(feature.value.raw.c_str(), nullptr);
      const auto bin = std::upper_bound(it->second.begin(), it->second.end(), x) - it->second.begin();
      return col + "\x1f#" + std::to_string(bin);
    }
  }
  return col + "\x1f=" + feature.value.raw;
}

ConventionalVocab ConventionalVocab::build(const std::vector<PatientSample>& train, int numeric_bins) {
  std::vector<const PatientSample*> ptrs;
  for (const auto& s : train) ptrs.push_back(&s);
  return build(ptrs, numeric_bins);
}

ConventionalVocab ConventionalVocab::build(const std::vector<const PatientSample*>& train, int numeric_bins) {
  if (numeric_bins < 1) throw ConfigError("numeric_bins must be positive");
  ConventionalVocab v;
  v.bins_ = numeric_bins;
  v.extend(train);
  return v;
}

void ConventionalVocab::extend(const std::vector<const PatientSample*>& train) {
  std::map<std::string, std::vector<double>> numeric;
  for (const auto* s : train)
    for (const auto& e : s->events)
      for (const auto& f : e.features)
        if (f.value.kind == ValueKind::Numeric) {
          const auto col = column_key(e.event_type, f.name);
          if (!numeric_edges_.count(col)) numeric[col].push_back(std::strtod(f.value.raw.c_str(), nullptr));
        }
  for (auto& [col, values] : numeric) numeric_edges_[col] = quantile_edges(std::move(values), bins_);
  for (const auto* s : train) {
    for (const auto& e : s->events) {
      add_key(types_, e.event_type.text());
      for (const auto& f : e.features) {
        add_key(names_, column_key(e.event_type, f.name));
        add_key(values_, value_key(e.event_type, f));
      }
    }
  }
}

int ConventionalVocab::value_id(const EventType& type, const Feature& feature) const {
  return find_key(values_, value_key(type, feature));
}

int ConventionalVocab::name_id(const EventType& type, const FeatureName& name) const {
  return find_key(names_, column_key(type, name));
}

int ConventionalVocab::type_id(const EventType& type) const { return find_key(types_, type.text()); }

nlohmann::json ConventionalVocab::to_json() const {
  return {{"format_version", 1}, {"numeric_bins", bins_}, {"values", values_},
          {"names", names_},     {"types", types_},       {"numeric_edges", numeric_edges_}};
}

ConventionalVocab ConventionalVocab::from_json(const nlohmann::json& j) {
  try {
    ConventionalVocab v;
    v.bins_ = j.at("numeric_bins").get<int>();
    v.values_ = j.at("values").get<std::map<std::string, int>>();
    v.names_ = j.at("names").get<std::map<std::string, int>>();
    v.types_ = j.at("types").get<std::map<std::string, int>>();
    v.numeric_edges_ = j.at("numeric_edges").get<std::map<std::string, std::vector<double>>>();
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("conventional vocab: ") + e.what());
  }
}

ConventionalInput serialize_conventional(const PatientSample& sample, const FeatureSelection* selection,
                                         const ConventionalVocab& vocab, ConventionalMode mode, int N_max,
                                         int max_features) {
  if (mode == ConventionalMode::SelectedFlat && selection == nullptr)
    throw ConfigError("selected-feature serialization needs a feature selection");
  if (N_max < 1 || max_features < 1) throw ConfigError("N_max and max_features must be positive");
  if (sample.intervals.size() != sample.events.size()) throw ShapeError("intervals and events differ in length");
  ConventionalInput out;
  out.mode = mode;
  for (std::size_t i = 0; i < sample.events.size(); ++i) {
    const auto& e = sample.events[i];
    ConventionalEvent ce;
    ce.type_id = vocab.type_id(e.event_type);
    ce.interval = sample.intervals[i];
    for (const auto& f : e.features) {
      if (mode == ConventionalMode::SelectedFlat && !selection->selects(e.event_type, f.name)) continue;
      if (static_cast<int>(ce.value_ids.size()) >= max_features) break;
      ce.name_ids.push_back(vocab.name_id(e.event_type, f.name));
      ce.value_ids.push_back(vocab.value_id(e.event_type, f));
    }
    if (ce.value_ids.empty()) continue;
    out.events.push_back(std::move(ce));
  }
  if (out.events.empty() && !sample.events.empty()) {
    ConventionalEvent placeholder;
    placeholder.type_id = vocab.type_id(sample.events.back().event_type);
    placeholder.interval = sample.intervals.back();
    placeholder.name_ids.push_back(ConventionalVocab::kOov);
    placeholder.value_ids.push_back(ConventionalVocab::kOov);
    out.events.push_back(std::move(placeholder));
  }
  if (out.events.size() > static_cast<std::size_t>(N_max))
    out.events.erase(out.events.begin(), out.events.end() - N_max);
  return out;
}

std::vector<ConventionalInput> serialize_conventional(const std::vector<PatientSample>& samples,
                                                      const FeatureSelection* selection,
                                                      const ConventionalVocab& vocab, ConventionalMode mode,
                                                      int N_max, int max_features) {
  if (selection) validate_selection(*selection, schema_of(samples));
  std::vector<ConventionalInput> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(serialize_conventional(s, selection, vocab, mode, N_max, max_features));
  return out;
}

PatientSample apply_selection(const PatientSample& sample, const FeatureSelection& selection) {
  PatientSample out = sample;
  out.events.clear();
  out.intervals.clear();
  for (std::size_t i = 0; i < sample.events.size(); ++i) {
    MedicalEvent e = sample.events[i];
    std::erase_if(e.features, [&](const Feature& f) { return !selection.selects(e.event_type, f.name); });
    if (e.features.empty()) continue;
    out.events.push_back(std::move(e));
    out.intervals.push_back(sample.intervals[i]);
  }
  if (out.events.empty() && !sample.events.empty()) {
    out.events.push_back(MedicalEvent{sample.events.back().event_type, {}, sample.events.back().timestamp});
    out.intervals.push_back(sample.intervals.back());
  }
  return out;
}

}  // namespace ehrtext::ser
