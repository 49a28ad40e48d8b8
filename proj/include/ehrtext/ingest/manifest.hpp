#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace ehrtext::ingest {

struct EventTableSpec {
  std::string file_path;
  std::string event_type_name;
  std::string stay_id_column;
  std::string time_column;
  std::vector<std::string> excluded_columns;
  /// Column whose (described) value names the event in importance tallies.
  std::string main_feature_column;
};

struct StaysTableSpec {
  std::string file_path;
  std::string stay_id_column;
  std::string patient_id_column;
  std::string hospital_admission_id_column;
  std::string intime_column;
  std::string outtime_column;
  std::string age_column;
  std::string discharge_status_column;
  std::string discharge_location_column;
};

struct DescriptionMapSpec {
  std::string file_path;
  std::string code_column;
  std::string text_column;
  std::vector<std::string> applies_to;  // "event_type_name:column"
};

/// Diagnosis codes recorded per hospital admission (Dx labels only).
struct DiagnosesTableSpec {
  std::string file_path;
  std::string hospital_admission_id_column;
  std::string code_column;
};

struct DatasetManifest {
  std::string dataset_name;
  std::vector<EventTableSpec> event_tables;
  StaysTableSpec stays_table;
  std::vector<DescriptionMapSpec> description_maps;
  std::optional<DiagnosesTableSpec> diagnoses_table;
  /// Directory relative file paths are resolved against.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& file_path) const;
};

/// Parses and eagerly validates a manifest; throws ManifestError naming the
/// offending field.
DatasetManifest load_manifest(const std::filesystem::path& path);
DatasetManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
nlohmann::json manifest_to_json(const DatasetManifest& m);
void validate_manifest(const DatasetManifest& m);

}  // namespace ehrtext::ingest
