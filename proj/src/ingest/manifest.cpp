#include "ehrtext/ingest/manifest.hpp"

#include <fstream>
#include <map>
#include <set>

#include "ehrtext/core/errors.hpp"
#include "ehrtext/ingest/csv.hpp"

namespace ehrtext::ingest {

using nlohmann::json;

std::filesystem::path DatasetManifest::resolve(const std::string& file_path) const {
  std::filesystem::path p(file_path);
  return p.is_absolute() ? p : base_dir / p;
}

namespace {

std::string required_string(const json& j, const char* key, const std::string& field) {
  if (!j.contains(key) || !j.at(key).is_string())
    throw ManifestError(field, std::string("missing string field '") + key + "'");
  return j.at(key).get<std::string>();
}

std::string optional_string(const json& j, const char* key) {
  return j.contains(key) && j.at(key).is_string() ? j.at(key).get<std::string>() : std::string();
}

std::vector<std::string> string_list(const json& j, const char* key, const std::string& field) {
  std::vector<std::string> out;
  if (!j.contains(key)) return out;
  if (!j.at(key).is_array()) throw ManifestError(field, std::string("'") + key + "' must be a list");
  for (const auto& v : j.at(key)) {
    if (!v.is_string()) throw ManifestError(field, std::string("'") + key + "' must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

std::vector<std::string> header_of(const DatasetManifest& m, const std::string& file, const std::string& field) {
  const auto path = m.resolve(file);
  if (!std::filesystem::exists(path)) throw ManifestError(field, "file not found: " + path.string());
  try {
    return read_csv_header(path);
  } catch (const FormatError& e) {
    throw ManifestError(field, e.what());
  }
}

void require_column(const std::vector<std::string>& header, const std::string& column, const std::string& field,
                    const std::string& file) {
  if (column.empty()) throw ManifestError(field, "column name is empty");
  for (const auto& h : header)
    if (h == column) return;
  throw ManifestError(field, "column '" + column + "' not found in " + file);
}

}  // namespace

DatasetManifest manifest_from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ManifestError("manifest", "manifest must be a JSON object");
  DatasetManifest m;
  m.base_dir = base_dir;
  m.dataset_name = required_string(j, "dataset_name", "dataset_name");
  if (!j.contains("event_tables") || !j.at("event_tables").is_array())
    throw ManifestError("event_tables", "missing event_tables list");
  for (const auto& t : j.at("event_tables")) {
    EventTableSpec e;
    e.file_path = required_string(t, "file_path", "file_path");
    e.event_type_name = required_string(t, "event_type_name", "event_type_name");
    e.stay_id_column = required_string(t, "stay_id_column", "stay_id_column");
    e.time_column = required_string(t, "time_column", "time_column");
    e.excluded_columns = string_list(t, "excluded_columns", "excluded_columns");
    e.main_feature_column = optional_string(t, "main_feature_column");
    m.event_tables.push_back(std::move(e));
  }
  if (!j.contains("stays_table") || !j.at("stays_table").is_object())
    throw ManifestError("stays_table", "missing stays_table object");
  const auto& s = j.at("stays_table");
  m.stays_table.file_path = required_string(s, "file_path", "stays_table.file_path");
  m.stays_table.stay_id_column = required_string(s, "stay_id_column", "stay_id_column");
  m.stays_table.patient_id_column = required_string(s, "patient_id_column", "patient_id_column");
  m.stays_table.hospital_admission_id_column =
      required_string(s, "hospital_admission_id_column", "hospital_admission_id_column");
  m.stays_table.intime_column = required_string(s, "intime_column", "intime_column");
  m.stays_table.outtime_column = required_string(s, "outtime_column", "outtime_column");
  m.stays_table.age_column = required_string(s, "age_column", "age_column");
  m.stays_table.discharge_status_column = required_string(s, "discharge_status_column", "discharge_status_column");
  m.stays_table.discharge_location_column =
      required_string(s, "discharge_location_column", "discharge_location_column");
  if (j.contains("description_maps")) {
    if (!j.at("description_maps").is_array()) throw ManifestError("description_maps", "must be a list");
    for (const auto& d : j.at("description_maps")) {
      DescriptionMapSpec spec;
      spec.file_path = required_string(d, "file_path", "description_maps.file_path");
      spec.code_column = required_string(d, "code_column", "code_column");
      spec.text_column = required_string(d, "text_column", "text_column");
      spec.applies_to = string_list(d, "applies_to", "applies_to");
      m.description_maps.push_back(std::move(spec));
    }
  }
  if (j.contains("diagnoses_table") && !j.at("diagnoses_table").is_null()) {
    const auto& d = j.at("diagnoses_table");
    DiagnosesTableSpec spec;
    spec.file_path = required_string(d, "file_path", "diagnoses_table.file_path");
    spec.hospital_admission_id_column =
        required_string(d, "hospital_admission_id_column", "diagnoses_table.hospital_admission_id_column");
    spec.code_column = required_string(d, "code_column", "diagnoses_table.code_column");
    m.diagnoses_table = spec;
  }
  validate_manifest(m);
  return m;
}

void validate_manifest(const DatasetManifest& m) {
  if (m.dataset_name.empty()) throw ManifestError("dataset_name", "dataset_name is empty");
  if (m.event_tables.empty()) throw ManifestError("event_tables", "at least one event table is required");

  std::map<std::string, std::vector<std::string>> headers;
  std::set<std::string> names;
  for (const auto& t : m.event_tables) {
    if (!names.insert(t.event_type_name).second)
      throw ManifestError("event_type_name", "duplicate event table '" + t.event_type_name + "'");
    auto header = header_of(m, t.file_path, "file_path");
    require_column(header, t.stay_id_column, "stay_id_column", t.file_path);
    require_column(header, t.time_column, "time_column", t.file_path);
    for (const auto& c : t.excluded_columns) require_column(header, c, "excluded_columns", t.file_path);
    if (!t.main_feature_column.empty())
      require_column(header, t.main_feature_column, "main_feature_column", t.file_path);
    headers[t.event_type_name] = std::move(header);
  }

  const auto& s = m.stays_table;
  const auto stays_header = header_of(m, s.file_path, "stays_table.file_path");
  for (const auto& [col, field] : std::vector<std::pair<std::string, std::string>>{
           {s.stay_id_column, "stay_id_column"},
           {s.patient_id_column, "patient_id_column"},
           {s.hospital_admission_id_column, "hospital_admission_id_column"},
           {s.intime_column, "intime_column"},
           {s.outtime_column, "outtime_column"},
           {s.age_column, "age_column"},
           {s.discharge_status_column, "discharge_status_column"},
           {s.discharge_location_column, "discharge_location_column"}})
    require_column(stays_header, col, field, s.file_path);

  for (const auto& d : m.description_maps) {
    const auto header = header_of(m, d.file_path, "description_maps.file_path");
    require_column(header, d.code_column, "code_column", d.file_path);
    require_column(header, d.text_column, "text_column", d.file_path);
    if (d.applies_to.empty()) throw ManifestError("applies_to", "description map applies to nothing");
    for (const auto& target : d.applies_to) {
      const auto colon = target.find(':');
      if (colon == std::string::npos) throw ManifestError("applies_to", "expected 'table:column', got '" + target + "'");
      const auto table = target.substr(0, colon);
      const auto column = target.substr(colon + 1);
      auto it = headers.find(table);
      if (it == headers.end()) throw ManifestError("applies_to", "unknown table '" + table + "'");
      require_column(it->second, column, "applies_to", table);
    }
  }

  if (m.diagnoses_table) {
    const auto& d = *m.diagnoses_table;
    const auto header = header_of(m, d.file_path, "diagnoses_table.file_path");
    require_column(header, d.hospital_admission_id_column, "diagnoses_table.hospital_admission_id_column",
                   d.file_path);
    require_column(header, d.code_column, "diagnoses_table.code_column", d.file_path);
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("path", "cannot open manifest " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ManifestError("path", std::string("invalid JSON: ") + e.what());
  }
  return manifest_from_json(j, path.parent_path());
}

json manifest_to_json(const DatasetManifest& m) {
  json j;
  j["dataset_name"] = m.dataset_name;
  j["event_tables"] = json::array();
  for (const auto& t : m.event_tables) {
    json e{{"file_path", t.file_path},
           {"event_type_name", t.event_type_name},
           {"stay_id_column", t.stay_id_column},
           {"time_column", t.time_column},
           {"excluded_columns", t.excluded_columns}};
    if (!t.main_feature_column.empty()) e["main_feature_column"] = t.main_feature_column;
    j["event_tables"].push_back(e);
  }
  const auto& s = m.stays_table;
  j["stays_table"] = {{"file_path", s.file_path},
                      {"stay_id_column", s.stay_id_column},
                      {"patient_id_column", s.patient_id_column},
                      {"hospital_admission_id_column", s.hospital_admission_id_column},
                      {"intime_column", s.intime_column},
                      {"outtime_column", s.outtime_column},
                      {"age_column", s.age_column},
                      {"discharge_status_column", s.discharge_status_column},
                      {"discharge_location_column", s.discharge_location_column}};
  j["description_maps"] = json::array();
  for (const auto& d : m.description_maps)
    j["description_maps"].push_back({{"file_path", d.file_path},
                                     {"code_column", d.code_column},
                                     {"text_column", d.text_column},
                                     {"applies_to", d.applies_to}});
  if (m.diagnoses_table)
    j["diagnoses_table"] = {{"file_path", m.diagnoses_table->file_path},
                            {"hospital_admission_id_column", m.diagnoses_table->hospital_admission_id_column},
                            {"code_column", m.diagnoses_table->code_column}};
  return j;
}

}  // namespace ehrtext::ingest
