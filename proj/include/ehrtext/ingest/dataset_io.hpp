#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ehrtext/core/types.hpp"
#include "ehrtext/ingest/cohort.hpp"
#include "ehrtext/tokenize/description_map.hpp"

namespace ehrtext::ingest {

/// An ingested, pruned and labeled dataset: everything downstream stages
/// need, with no reference back to the raw export.
struct Dataset {
  std::string name;
  tok::DescriptionMap descriptions;
  std::map<std::string, std::string> main_features;
  LabelVocabulary label_vocab;
  std::vector<PatientSample> samples;

  bool operator==(const Dataset&) const = default;
};

/// Full pipeline: manifest -> cohort -> stats -> prune -> labels.
Dataset ingest(const std::filesystem::path& manifest_path, const std::optional<std::filesystem::path>& dx_class_map,
               IngestionReport* report = nullptr);

nlohmann::json dataset_to_json(const Dataset& d);
Dataset dataset_from_json(const nlohmann::json& j);
void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

nlohmann::json sample_to_json(const PatientSample& s);
PatientSample sample_from_json(const nlohmann::json& j);

}  // namespace ehrtext::ingest
