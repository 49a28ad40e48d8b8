#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace ehrtext::synth {

enum class SchemaStyle { MimicLike, EicuLike };
enum class CodeStyle { CodedWithDescriptions, RawText };
/// Spelling of event-table column names. `Native` is upper snake case for
/// mimic_like and lower concatenated words for eicu_like; the other styles
/// normalize to identical feature names.
enum class NameStyle { Native, UpperSnake, LowerSnake, Camel, Kebab };
enum class ConceptCategory { Drug, Lab, Infusion };

std::string to_string(SchemaStyle s);
std::string to_string(CodeStyle s);
std::string to_string(NameStyle s);
std::string to_string(ConceptCategory c);
SchemaStyle schema_style_from_string(const std::string& s);
CodeStyle code_style_from_string(const std::string& s);
NameStyle name_style_from_string(const std::string& s);

struct HospitalConfig {
  std::string name = "hospital";
  int n_stays = 2000;
  SchemaStyle schema_style = SchemaStyle::MimicLike;
  CodeStyle code_style = CodeStyle::CodedWithDescriptions;
  NameStyle name_style = NameStyle::Native;
  /// Fraction of the hospital's concept pool taken from the reference pool.
  double vocab_overlap = 1.0;
  /// Mean events per hour of ICU stay.
  double event_rate = 1.5;
  /// Seeds the concept risk weights; hospitals sharing it share semantics.
  std::uint64_t risk_model_seed = 7;
  /// Seeds everything hospital-specific (private concepts, stays, events).
  std::uint64_t seed = 0;
  /// Hospitals with different namespaces never share a code string.
  int code_namespace = 0;
  int concept_pool_size = 150;
  /// Scale of logistic noise added to the mortality risk; 0 is deterministic.
  double label_noise = 0.5;
  double mortality_prevalence = 0.15;
  /// When positive, mortality depends only on this many designated concepts.
  int mortality_drivers = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static HospitalConfig from_json(const nlohmann::json& j);
};

struct LatentConcept {
  int concept_id = 0;
  ConceptCategory category = ConceptCategory::Drug;
  std::string description;
  std::string unit;
  double value_mean = 0.0;
  double value_sd = 1.0;
};

/// Fixed compositional lexicon shared by every hospital.
const std::vector<LatentConcept>& lexicon();

struct GenerationResult {
  std::filesystem::path directory;
  std::filesystem::path manifest;
  std::filesystem::path ground_truth;
  std::filesystem::path feature_selection;
  std::filesystem::path dx_class_map;
  double oracle_auprc = 0.0;
  double prevalence = 0.0;
  int attempts = 0;
};

/// Writes event CSVs, a stays CSV, description maps, a diagnoses table, a
/// dx class map, a feature selection, manifest.json and ground_truth.json.
/// Output is byte-identical for identical configs.
GenerationResult generate_hospital(const HospitalConfig& cfg, const std::filesystem::path& out_dir);

/// AUPRC of the true mortality risk score against the generated labels.
/// With `shuffle_labels` the labels are permuted first (chance level).
double verify_separability(const std::filesystem::path& dataset_dir, bool shuffle_labels = false,
                           std::uint64_t shuffle_seed = 0);

}  // namespace ehrtext::synth
