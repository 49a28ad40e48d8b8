#include "ehrtext/experiments/trainer.hpp"

#include <cmath>
#include <numeric>

#include "ehrtext/core/random.hpp"
#include "ehrtext/nn/optim.hpp"

namespace ehrtext::exp {

void TrainerConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("trainer.lr must be positive");
  if (batch < 1 || eval_batch < 1) throw ConfigError("trainer batch sizes must be positive");
  if (max_epochs < 1) throw ConfigError("trainer.max_epochs must be positive");
  if (patience < 1) throw ConfigError("trainer.patience must be positive");
  if (weight_decay < 0.0 || pos_weight <= 0.0 || grad_clip < 0.0) throw ConfigError("trainer hyperparameters out of range");
}

nlohmann::json TrainerConfig::to_json() const {
  return {{"lr", lr},
          {"batch", batch},
          {"max_epochs", max_epochs},
          {"patience", patience},
          {"weight_decay", weight_decay},
          {"pos_weight", pos_weight},
          {"grad_clip", grad_clip},
          {"eval_batch", eval_batch},
          {"checked", checked}};
}

TrainerConfig TrainerConfig::from_json(const nlohmann::json& j, const TrainerConfig& defaults) {
  TrainerConfig c = defaults;
  try {
    c.lr = j.value("lr", c.lr);
    c.batch = j.value("batch", c.batch);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.pos_weight = j.value("pos_weight", c.pos_weight);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.eval_batch = j.value("eval_batch", c.eval_batch);
    c.checked = j.value("checked", c.checked);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("trainer config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainerConfig TrainerConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainerConfig{}); }

bool EarlyStopping::update(double metric) {
  ++epoch_;
  if (metric > best_) {
    best_ = metric;
    best_epoch_ = epoch_;
    waited_ = 0;
    return true;
  }
  ++waited_;
  return false;
}

nlohmann::json TrainResult::to_json() const {
  return {{"best_valid", best_valid},
          {"best_epoch", best_epoch},
          {"epochs_run", epochs_run},
          {"valid_history", valid_history},
          {"train_loss", train_loss}};
}

std::vector<std::vector<double>> predict_all(models::Predictor<float>& model,
                                             const std::vector<const models::ModelInput*>& inputs, int batch) {
  std::vector<std::vector<double>> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); i += static_cast<std::size_t>(batch)) {
    const auto end = std::min(inputs.size(), i + static_cast<std::size_t>(batch));
    std::vector<const models::ModelInput*> chunk(inputs.begin() + static_cast<std::ptrdiff_t>(i),
                                                 inputs.begin() + static_cast<std::ptrdiff_t>(end));
    auto probs = model.predict(chunk);
    for (auto& p : probs) out.push_back(std::move(p));
  }
  return out;
}

MacroResult evaluate(models::Predictor<float>& model, const LabeledSet& set, int batch) {
  return task_auprc(model.spec().task_kind(), predict_all(model, set.inputs, batch), set.labels);
}

TrainResult train_model(models::Predictor<float>& model, const LabeledSet& train, const LabeledSet& valid,
                        const TrainerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (train.size() == 0) throw ConfigError("empty training set");
  if (train.inputs.size() != train.labels.size() || valid.inputs.size() != valid.labels.size())
    throw ShapeError("inputs and labels differ in length");
  nn::AdamWConfig opt_cfg;
  opt_cfg.lr = cfg.lr;
  opt_cfg.weight_decay = cfg.weight_decay;
  opt_cfg.checked = true;
  nn::AdamW<float> opt(opt_cfg);
  auto& params = model.params();
  EarlyStopping stopper(cfg.patience);
  TrainResult result;
  result.best_params = params;
  Rng rng(splitmix64(seed ^ 0x7472616eULL));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::uint64_t step = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(cfg.batch)) {
      const auto end = std::min(order.size(), i + static_cast<std::size_t>(cfg.batch));
      std::vector<const models::ModelInput*> xb;
      std::vector<const Label*> yb;
      for (std::size_t k = i; k < end; ++k) {
        xb.push_back(train.inputs[order[k]]);
        yb.push_back(train.labels[order[k]]);
      }
      nn::Graph<float> g(nn::Graph<float>::Options{true, splitmix64(seed * 0x9e3779b97f4a7c15ULL + ++step), cfg.checked});
      auto fw = model.forward(g, xb);
      auto loss = model.loss(g, fw.logits, yb, cfg.pos_weight);
      const double l = g.value(loss)(0, 0);
      if (!std::isfinite(l)) {
        result.epochs_run = epoch - 1;
        throw TrainingDiverged("non-finite training loss at epoch " + std::to_string(epoch), result.to_json());
      }
      params.zero_grad();
      g.backward(loss);
      nn::clip_grad_norm(params, cfg.grad_clip);
      try {
        opt.step(params);
      } catch (const NumericsError& e) {
        result.epochs_run = epoch - 1;
        throw TrainingDiverged(e.what(), result.to_json());
      }
      loss_sum += l;
      ++batches;
    }
    result.train_loss.push_back(loss_sum / static_cast<double>(batches));
    result.epochs_run = epoch;
    double metric;
    if (valid.size() == 0) {
      metric = -result.train_loss.back();
    } else {
      try {
        metric = evaluate(model, valid, cfg.eval_batch).value;
      } catch (const MetricUndefined&) {
        metric = -result.train_loss.back();
      }
    }
    result.valid_history.push_back(metric);
    if (stopper.update(metric)) {
      result.best_params = params;
      result.best_valid = metric;
      result.best_epoch = epoch;
    }
    if (stopper.should_stop()) break;
  }
  params = result.best_params;
  return result;
}

}  // namespace ehrtext::exp
