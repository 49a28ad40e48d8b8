#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ehrtext/core/types.hpp"
#include "ehrtext/nn/encoder.hpp"
#include "ehrtext/nn/graph.hpp"
#include "ehrtext/serialize/conventional.hpp"
#include "ehrtext/serialize/sequences.hpp"

namespace ehrtext::models {

/// UniHPFFlat is the text-flattened ablation (all tokens through h).
enum class Family { UniHPF, DescEmbStar, RajkomarStar, SAnDStar, UniHPFFlat };

const char* to_string(Family f);
/// Accepts "UniHPF", "DescEmb*", "Rajkomar*", "SAnD*", "UniHPFFlat" (the
/// star may be omitted or spelled "Star").
Family family_from_string(std::string_view s);
bool uses_subword_tokens(Family f);
bool is_hierarchical(Family f);
bool uses_feature_selection(Family f);

struct PredictorSpec {
  Family family = Family::UniHPF;
  nn::EncoderConfig f;
  nn::EncoderConfig g;
  nn::EncoderConfig h;
  Task task = Task::Mort;
  int num_outputs = 1;
  /// Sub-word vocabulary size (text families only).
  int token_vocab = 0;
  /// Conventional table sizes (conventional families only).
  int value_vocab = 0;
  int name_vocab = 0;
  int type_vocab = 0;

  /// Default configuration for a family: d = 128, 4 heads, FFN 512, f and g
  /// with 2 layers each, h with 4 layers; f.max_len = L_event and
  /// g.max_len = N_max (h.max_len = N_max, or L_flat for the ablation).
  static PredictorSpec defaults(Family family, Task task, int num_outputs, const ser::SerializeConfig& ser = {});

  /// Throws ConfigError when the embedding sources do not match the family
  /// (e.g. a value vocabulary on a text family) or encoders are malformed.
  void validate() const;
  TaskKind task_kind() const { return ehrtext::task_kind(task); }
  nlohmann::json to_json() const;
  static PredictorSpec from_json(const nlohmann::json& j);
  bool operator==(const PredictorSpec&) const = default;
};

/// Serialized form of one stay for any family.
using ModelInput = std::variant<ser::HierarchicalInput, ser::ConventionalInput, ser::FlattenedInput>;

/// Parameter counts with the vocabulary tables itemized.
struct ParameterReport {
  std::size_t total = 0;
  std::size_t excluding_input_tables = 0;
  std::vector<std::pair<std::string, std::size_t>> input_tables;
  nlohmann::json to_json() const;
};

template <typename T>
class Predictor {
 public:
  /// Fresh model with seeded initialization.
  Predictor(PredictorSpec spec, std::uint64_t seed);
  /// Model over existing parameters (e.g. from a checkpoint); names and
  /// shapes must match the spec.
  Predictor(PredictorSpec spec, nn::ParameterStore<T> params);

  struct Forward {
    nn::Var logits;
    /// Rows fed to the event encoder f (hierarchical families).
    nn::Var f_input;
    /// Row offsets of each event inside f_input.
    std::vector<int> event_offsets;
    /// Event offsets of each sample.
    std::vector<int> sample_offsets;
    /// Pooled patient representation p.
    nn::Var p;
    /// Event embeddings m_i (hierarchical families).
    nn::Var m;
  };

  /// Throws ConfigError when an input does not match the family.
  Forward forward(nn::Graph<T>& g, const std::vector<const ModelInput*>& batch);
  /// Task loss for a batch of labels (all must carry `spec().task`).
  nn::Var loss(nn::Graph<T>& g, nn::Var logits, const std::vector<const Label*>& labels, double pos_weight = 1.0) const;
  /// Probabilities per sample: 1 value (binary), C (softmax), 18 (sigmoid).
  std::vector<std::vector<double>> predict(const std::vector<const ModelInput*>& batch);

  const PredictorSpec& spec() const { return spec_; }
  nn::ParameterStore<T>& params() { return params_; }
  const nn::ParameterStore<T>& params() const { return params_; }
  ParameterReport parameter_report() const;

 private:
  void declare(std::uint64_t seed);
  nn::Var head(nn::Graph<T>& g, nn::Var pooled);
  nn::Var text_events(nn::Graph<T>& g, const std::vector<const ModelInput*>& batch, Forward& out);
  nn::Var conventional_events(nn::Graph<T>& g, const std::vector<const ModelInput*>& batch, Forward& out);
  nn::Var selected_events(nn::Graph<T>& g, const std::vector<const ModelInput*>& batch, std::vector<int>& intervals,
                          Forward& out);

  PredictorSpec spec_;
  nn::ParameterStore<T> params_;
};

/// Output probabilities from logits rows according to the task kind.
std::vector<std::vector<double>> probabilities(TaskKind kind, const nn::Mat<double>& logits);

extern template class Predictor<float>;
extern template class Predictor<double>;

}  // namespace ehrtext::models
