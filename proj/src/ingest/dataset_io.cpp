#include "ehrtext/ingest/dataset_io.hpp"

#include <fstream>

#include "ehrtext/core/errors.hpp"

namespace ehrtext::ingest {

using nlohmann::json;

namespace {
constexpr int kDatasetFormatVersion = 1;
}

json sample_to_json(const PatientSample& s) {
  json events = json::array();
  for (const auto& e : s.events) {
    json feats = json::array();
    for (const auto& f : e.features) feats.push_back({f.name.text(), f.value.raw, to_string(f.value.kind)});
    events.push_back({{"type", e.event_type.text()}, {"time", e.timestamp}, {"features", feats}});
  }
  json intervals = json::array();
  for (const auto& b : s.intervals) intervals.push_back(b.id());
  json labels = json::object();
  for (const auto& [task, label] : s.labels) {
    if (std::holds_alternative<int>(label.value))
      labels[to_string(task)] = label.as_int();
    else
      labels[to_string(task)] = label.as_multi_hot();
  }
  const auto& d = s.demographics;
  return {{"stay_id", s.stay_id},
          {"hospital_admission_id", s.hospital_admission_id},
          {"source_dataset", s.source_dataset},
          {"demographics",
           {{"age_years", d.age_years},
            {"icu_in", d.icu_in},
            {"icu_out", d.icu_out},
            {"discharge_status", d.discharge_status},
            {"discharge_location", d.discharge_location}}},
          {"events", events},
          {"intervals", intervals},
          {"labels", labels}};
}

PatientSample sample_from_json(const json& j) {
  PatientSample s;
  s.stay_id = j.at("stay_id").get<std::string>();
  s.hospital_admission_id = j.at("hospital_admission_id").get<std::string>();
  s.source_dataset = j.at("source_dataset").get<std::string>();
  const auto& d = j.at("demographics");
  s.demographics = {d.at("age_years").get<int>(), d.at("icu_in").get<Minutes>(), d.at("icu_out").get<Minutes>(),
                    d.at("discharge_status").get<std::string>(), d.at("discharge_location").get<std::string>()};
  for (const auto& e : j.at("events")) {
    MedicalEvent ev;
    ev.event_type = EventType(e.at("type").get<std::string>());
    ev.timestamp = e.at("time").get<Minutes>();
    for (const auto& f : e.at("features"))
      ev.features.push_back(Feature{FeatureName(f.at(0).get<std::string>()),
                                    FeatureValue{f.at(1).get<std::string>(),
                                                 value_kind_from_string(f.at(2).get<std::string>())}});
    s.events.push_back(std::move(ev));
  }
  for (const auto& b : j.at("intervals")) s.intervals.emplace_back(b.get<int>());
  for (const auto& [name, value] : j.at("labels").items()) {
    const Task t = task_from_string(name);
    if (value.is_array())
      s.labels[t] = Label{t, value.get<std::vector<std::uint8_t>>()};
    else
      s.labels[t] = Label{t, value.get<int>()};
  }
  return s;
}

json dataset_to_json(const Dataset& d) {
  json samples = json::array();
  for (const auto& s : d.samples) samples.push_back(sample_to_json(s));
  return {{"format_version", kDatasetFormatVersion},
          {"dataset_name", d.name},
          {"description_map", d.descriptions.to_json()},
          {"main_features", d.main_features},
          {"label_vocabulary", d.label_vocab.to_json()},
          {"samples", samples}};
}

Dataset dataset_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != kDatasetFormatVersion)
      throw FormatError("unsupported dataset format_version");
    Dataset d;
    d.name = j.at("dataset_name").get<std::string>();
    d.descriptions = tok::DescriptionMap::from_json(j.at("description_map"));
    d.main_features = j.at("main_features").get<std::map<std::string, std::string>>();
    d.label_vocab = LabelVocabulary::from_json(j.at("label_vocabulary"));
    for (const auto& s : j.at("samples")) d.samples.push_back(sample_from_json(s));
    return d;
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset: ") + e.what());
  }
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << dataset_to_json(d).dump() << '\n';
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open dataset " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return dataset_from_json(j);
}

Dataset ingest(const std::filesystem::path& manifest_path, const std::optional<std::filesystem::path>& dx_class_map,
               IngestionReport* report) {
  IngestionReport local;
  IngestionReport& rep = report ? *report : local;
  const DatasetManifest manifest = load_manifest(manifest_path);
  auto samples = build_cohort(manifest, &rep);
  if (!samples.empty()) {
    const FeatureStats stats = compute_feature_stats(samples);
    samples = prune_features(std::move(samples), stats, &rep);
  }
  Dataset d;
  d.name = manifest.dataset_name;
  d.descriptions = load_description_maps(manifest);
  d.main_features = main_feature_columns(manifest);
  d.samples = attach_labels(std::move(samples), manifest, dx_class_map, &d.label_vocab, &rep);
  return d;
}

}  // namespace ehrtext::ingest
