#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <json.hpp>

#include "ehrtext/core/errors.hpp"
#include "ehrtext/experiments/metrics.hpp"
#include "ehrtext/models/predictor.hpp"

namespace ehrtext::exp {

struct TrainerConfig {
  double lr = 1e-4;
  int batch = 32;
  int max_epochs = 50;
  int patience = 5;
  double weight_decay = 0.0;
  /// Positive-class loss weight for binary tasks (1 = off).
  double pos_weight = 1.0;
  /// Global gradient-norm clip (0 = off).
  double grad_clip = 1.0;
  int eval_batch = 64;
  /// NaN/Inf checks on every op.
  bool checked = false;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainerConfig from_json(const nlohmann::json& j, const TrainerConfig& defaults);
  static TrainerConfig from_json(const nlohmann::json& j);
};

/// Patience counter over a maximized validation metric.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}
  /// Records one epoch; returns true when the metric improved on the best.
  bool update(double metric);
  bool should_stop() const { return waited_ >= patience_; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }

 private:
  int patience_;
  int waited_ = 0;
  int epoch_ = 0;
  int best_epoch_ = 0;
  double best_ = -1e300;
};

/// A view of labeled model inputs.
struct LabeledSet {
  std::vector<const models::ModelInput*> inputs;
  std::vector<const Label*> labels;
  std::size_t size() const { return inputs.size(); }
};

struct TrainResult {
  nn::ParameterStore<float> best_params;
  double best_valid = 0.0;
  int best_epoch = 0;
  int epochs_run = 0;
  std::vector<double> valid_history;
  std::vector<double> train_loss;
  nlohmann::json to_json() const;
};

/// Raised when the loss stops being finite; carries the epochs completed.
class TrainingDiverged : public NumericsError {
 public:
  TrainingDiverged(const std::string& what, nlohmann::json partial)
      : NumericsError(what), partial_(std::move(partial)) {}
  const nlohmann::json& partial_report() const { return partial_; }

 private:
  nlohmann::json partial_;
};

/// Mini-batch AdamW with seeded shuffling and dropout; early stopping on
/// validation AUPRC. The model ends up holding the best-validation weights.
TrainResult train_model(models::Predictor<float>& model, const LabeledSet& train, const LabeledSet& valid,
                        const TrainerConfig& cfg, std::uint64_t seed);

/// Probabilities for every input, in batches.
std::vector<std::vector<double>> predict_all(models::Predictor<float>& model,
                                             const std::vector<const models::ModelInput*>& inputs, int batch);

/// Task AUPRC of the model on a labeled set.
MacroResult evaluate(models::Predictor<float>& model, const LabeledSet& set, int batch);

}  // namespace ehrtext::exp
