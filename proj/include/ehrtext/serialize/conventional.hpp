#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ehrtext/core/types.hpp"

namespace ehrtext::ser {

/// Task-specific feature subset: event type -> feature names.
struct FeatureSelection {
  std::map<EventType, std::vector<FeatureName>> features;

  bool selects(const EventType& type, const FeatureName& name) const;
  nlohmann::json to_json() const;
  static FeatureSelection from_json(const nlohmann::json& j);
  static FeatureSelection load(const std::filesystem::path& path);
  bool operator==(const FeatureSelection&) const = default;
};

/// (event type, feature name) pairs observed in a sample set.
using Schema = std::set<std::pair<EventType, FeatureName>>;

Schema schema_of(const std::vector<PatientSample>& samples);

/// Throws ConfigError naming the first selected feature absent from the schema.
void validate_selection(const FeatureSelection& selection, const Schema& schema);

/// Lookup tables for conventional embeddings. Id 0 is OOV in every table.
/// Numeric columns are binned into training-set quantiles; other values map
/// one id per distinct (type, name, value).
class ConventionalVocab {
 public:
  static constexpr int kOov = 0;
  static constexpr int kDefaultBins = 10;

  static ConventionalVocab build(const std::vector<const PatientSample*>& train, int numeric_bins = kDefaultBins);
  static ConventionalVocab build(const std::vector<PatientSample>& train, int numeric_bins = kDefaultBins);
  /// Adds entries for values unseen so far; existing ids stay unchanged.
  void extend(const std::vector<const PatientSample*>& train);

  int value_id(const EventType& type, const Feature& feature) const;
  int name_id(const EventType& type, const FeatureName& name) const;
  int type_id(const EventType& type) const;

  int value_count() const { return static_cast<int>(values_.size()) + 1; }
  int name_count() const { return static_cast<int>(names_.size()) + 1; }
  int type_count() const { return static_cast<int>(types_.size()) + 1; }

  nlohmann::json to_json() const;
  static ConventionalVocab from_json(const nlohmann::json& j);
  bool operator==(const ConventionalVocab&) const = default;

 private:
  std::string value_key(const EventType& type, const Feature& feature) const;

  int bins_ = kDefaultBins;
  std::map<std::string, int> values_;
  std::map<std::string, int> names_;
  std::map<std::string, int> types_;
  // "type/name" -> ascending bin edges for numeric columns
  std::map<std::string, std::vector<double>> numeric_edges_;
};

enum class ConventionalMode { SelectedFlat, FullHierarchical };

struct ConventionalEvent {
  int type_id = ConventionalVocab::kOov;
  std::vector<int> name_ids;
  std::vector<int> value_ids;
  IntervalBucket interval;
  bool operator==(const ConventionalEvent&) const = default;
};

struct ConventionalInput {
  ConventionalMode mode = ConventionalMode::FullHierarchical;
  std::vector<ConventionalEvent> events;
  bool operator==(const ConventionalInput&) const = default;
};

/// SelectedFlat keeps only selected features and drops events left empty;
/// FullHierarchical keeps every feature (at most `max_features` per event).
/// The most recent `N_max` events are kept. A stay with no selected feature
/// at all keeps its last event as a single OOV feature.
ConventionalInput serialize_conventional(const PatientSample& sample, const FeatureSelection* selection,
                                         const ConventionalVocab& vocab, ConventionalMode mode, int N_max,
                                         int max_features);

/// Dataset-level form that first validates the selection against the
/// samples' schema.
std::vector<ConventionalInput> serialize_conventional(const std::vector<PatientSample>& samples,
                                                      const FeatureSelection* selection,
                                                      const ConventionalVocab& vocab, ConventionalMode mode,
                                                      int N_max, int max_features);

/// Same event filter as SelectedFlat, for text-based selected-feature models:
/// only selected features survive and emptied events are dropped. A stay
/// with no selected feature keeps its last event with no features.
PatientSample apply_selection(const PatientSample& sample, const FeatureSelection& selection);

}  // namespace ehrtext::ser
