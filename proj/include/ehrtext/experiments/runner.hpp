#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ehrtext/experiments/metrics.hpp"
#include "ehrtext/experiments/split.hpp"
#include "ehrtext/experiments/trainer.hpp"
#include "ehrtext/ingest/dataset_io.hpp"
#include "ehrtext/models/predictor.hpp"
#include "ehrtext/serialize/conventional.hpp"
#include "ehrtext/serialize/sequences.hpp"
#include "ehrtext/tokenize/tokenizer.hpp"

namespace ehrtext::exp {

enum class Mode { Single, Pooled, ZeroShot, FineTune };

const char* to_string(Mode m);
/// "single", "pooled", "transfer_zero_shot", "transfer_finetune".
Mode mode_from_string(std::string_view s);

/// Model sizes shared by every encoder of a family.
struct ModelConfig {
  int dim = 128;
  int heads = 4;
  int ffn = 512;
  double dropout = 0.1;
  int f_layers = 2;
  int g_layers = 2;
  int h_layers = 4;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j, const ModelConfig& defaults);
};

struct ExperimentConfig {
  Task task = Task::Mort;
  models::Family family = models::Family::UniHPF;
  Mode mode = Mode::Single;
  /// Dataset name -> ingested dataset JSON path.
  std::map<std::string, std::string> datasets;
  std::vector<std::string> sources;
  std::string target;
  /// Dataset name -> feature selection JSON path (selected-feature families).
  std::map<std::string, std::string> feature_selection;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  TrainerConfig trainer;
  ModelConfig model;
  ser::SerializeConfig serialize;
  int vocab_size = 2048;
  int numeric_bins = ser::ConventionalVocab::kDefaultBins;
  /// Zero-shot evaluation set: every target stay ("all") or its test split.
  bool zero_shot_all = true;
  int threads = 1;
  /// Also run single-domain baselines and report deltas against them.
  bool compare_single = true;

  /// Throws ConfigError on inconsistent settings, including pooled or
  /// transfer modes for Fi_ac and Im_disch.
  void validate() const;
  nlohmann::json to_json() const;
  /// Relative dataset and selection paths resolve against `base_dir`.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
};

/// Datasets and feature selections addressed by name.
struct ExperimentData {
  std::map<std::string, std::shared_ptr<const ingest::Dataset>> datasets;
  std::map<std::string, ser::FeatureSelection> selections;

  const ingest::Dataset& dataset(const std::string& name) const;
  const ser::FeatureSelection* selection(const std::string& name) const;
  /// Loads every dataset and selection named by the config.
  static ExperimentData load(const ExperimentConfig& cfg);
};

/// A trained model with everything needed to featurize new stays.
struct TrainedModel {
  models::PredictorSpec spec;
  nn::ParameterStore<float> params;
  std::optional<tok::Tokenizer> tokenizer;
  std::optional<ser::ConventionalVocab> vocab;
  ser::SerializeConfig serialize;
  TrainResult training;

  /// Checkpoint config: spec, serialization settings and tokenizer/vocab.
  nlohmann::json checkpoint_config() const;
  static TrainedModel from_checkpoint(const nlohmann::json& config, nn::ParameterStore<float> params);
  models::Predictor<float> predictor() const { return models::Predictor<float>(spec, params); }
};

/// Maps stays of one dataset to model inputs for a trained model.
class Featurizer {
 public:
  Featurizer(const TrainedModel& model, const ingest::Dataset& dataset, const ser::FeatureSelection* selection);
  models::ModelInput operator()(const PatientSample& s) const;
  /// Stay after feature selection (identity for families without one).
  PatientSample view(const PatientSample& s) const;

 private:
  const TrainedModel* model_;
  const ingest::Dataset* dataset_;
  const ser::FeatureSelection* selection_;
  std::optional<ser::TextEncoder> encoder_;
};

/// Inputs and labels for a subset of a dataset.
struct EncodedSet {
  std::vector<models::ModelInput> inputs;
  std::vector<const Label*> labels;
  LabeledSet view() const;
};

EncodedSet encode_set(const Featurizer& fz, const ingest::Dataset& ds, const std::vector<std::size_t>& indices,
                      Task task);

/// Thread-safe memo of trained models and splits keyed by their inputs.
class RunCache {
 public:
  std::shared_ptr<const TrainedModel> find(const std::string& key) const;
  void store(const std::string& key, std::shared_ptr<const TrainedModel> model);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const TrainedModel>> models_;
};

/// Trains a fresh model on the union of the sources' training splits
/// (validation on the union of their validation splits).
std::shared_ptr<const TrainedModel> train_on_sources(const ExperimentConfig& cfg, const ExperimentData& data,
                                                     const std::vector<std::string>& sources, std::uint64_t seed,
                                                     RunCache* cache);

/// Continues training `source` on the target's training split; the source
/// tokenizer is reused and conventional tables grow for unseen target values.
std::shared_ptr<const TrainedModel> finetune_on_target(const ExperimentConfig& cfg, const ExperimentData& data,
                                                       const TrainedModel& source, const std::string& source_key,
                                                       const std::string& target, std::uint64_t seed, RunCache* cache);

/// Runs every seed of an experiment and returns the report JSON:
/// {config, results: {dataset: {per_seed, mean, se, prevalence}}, single,
/// delta_vs_single, parameters, training, wallclock_seconds}.
nlohmann::json run_experiment(const ExperimentConfig& cfg, const ExperimentData& data, RunCache* cache = nullptr);

/// Number of outputs of the task's head for a dataset.
int num_outputs_for(Task task, const ingest::Dataset& ds);

}  // namespace ehrtext::exp
