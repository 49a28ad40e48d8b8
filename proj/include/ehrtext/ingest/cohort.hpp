#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "ehrtext/core/types.hpp"
#include "ehrtext/ingest/manifest.hpp"
#include "ehrtext/tokenize/description_map.hpp"

namespace ehrtext::ingest {

struct IngestionReport {
  std::size_t stays_total = 0;
  std::size_t samples_emitted = 0;
  std::map<std::string, std::size_t> samples_rejected_by_rule;
  std::size_t features_pruned = 0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

/// Occurrence statistics over a whole sample set.
struct FeatureStats {
  using NameKey = std::pair<std::string, std::string>;                // (event type, name)
  using ValueKey = std::tuple<std::string, std::string, std::string>;  // (event type, name, value)

  std::map<NameKey, std::size_t> name_counts;
  std::map<NameKey, bool> integer_only;
  std::map<ValueKey, std::size_t> value_counts;
  std::size_t min_count = 5;

  /// Whole column dropped because every observed value is an integer literal.
  bool is_integer_only(const EventType& type, const FeatureName& name) const;
  /// Occurrence below `min_count`: per value for Code/Text kinds, per column
  /// for Numeric kinds.
  bool is_rare(const EventType& type, const Feature& feature) const;
  bool should_remove(const EventType& type, const Feature& feature) const;
};

struct LabelVocabulary {
  std::vector<std::string> final_acuity;       // index 0 is "death"
  std::vector<std::string> imminent_discharge;  // index 0 is "no discharge"

  nlohmann::json to_json() const;
  static LabelVocabulary from_json(const nlohmann::json& j);
  bool operator==(const LabelVocabulary&) const = default;
};

/// Mortality and imminent discharge look 48 hours past the end of the
/// observation window.
inline constexpr Minutes kPredictionWindow = 2880;
inline constexpr Minutes kLos3Minutes = 3 * 1440;
inline constexpr Minutes kLos7Minutes = 7 * 1440;

/// Parses minute counts ("125", "125.7") or ISO dates/datetimes
/// ("2150-01-01 10:30:00"); the latter become minutes since 1970-01-01.
std::optional<Minutes> parse_timestamp(const std::string& text);

tok::DescriptionMap load_description_maps(const DatasetManifest& manifest);

/// Event type -> normalized main feature name, for tables that declare one.
std::map<std::string, std::string> main_feature_columns(const DatasetManifest& manifest);

std::vector<PatientSample> build_cohort(const DatasetManifest& manifest, IngestionReport* report = nullptr,
                                        const CohortRules& rules = {});

FeatureStats compute_feature_stats(const std::vector<PatientSample>& samples);

std::vector<PatientSample> prune_features(std::vector<PatientSample> samples, const FeatureStats& stats,
                                          IngestionReport* report = nullptr, const CohortRules& rules = {});

/// Adds all seven labels. `dx_class_map` is a CSV (code, class_index 0-17).
std::vector<PatientSample> attach_labels(std::vector<PatientSample> samples, const DatasetManifest& manifest,
                                         const std::optional<std::filesystem::path>& dx_class_map,
                                         LabelVocabulary* vocab_out = nullptr, IngestionReport* report = nullptr);

}  // namespace ehrtext::ingest
