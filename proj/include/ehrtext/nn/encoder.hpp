#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ehrtext/nn/graph.hpp"

namespace ehrtext::nn {

struct EncoderConfig {
  int layers = 2;
  int model_dim = 128;
  int heads = 4;
  int ffn_dim = 512;
  double dropout = 0.1;
  int max_len = 128;

  /// Throws ConfigError on non-positive sizes or model_dim % heads != 0.
  void validate() const;
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j, const EncoderConfig& defaults);
  static EncoderConfig from_json(const nlohmann::json& j);
  bool operator==(const EncoderConfig&) const = default;
};

struct EncoderOutput {
  Var hidden;
  std::vector<Var> attention;  // one node per layer
};

/// Registers `<prefix>.pos` and per-layer weights `<prefix>.l<i>.*`.
template <typename T>
void declare_encoder(ParameterStore<T>& store, const std::string& prefix, const EncoderConfig& cfg, Rng& rng);

/// Pre-norm transformer over row blocks: learned positions are added, then
/// each layer applies LN, multi-head attention, residual, LN, GELU
/// feed-forward, residual. `offsets` delimits the sequences (only non-PAD
/// rows are present, so PAD is never attended to). Throws ShapeError when a
/// block exceeds max_len or the width differs from model_dim.
template <typename T>
EncoderOutput encoder_forward(Graph<T>& g, ParameterStore<T>& store, const std::string& prefix,
                              const EncoderConfig& cfg, Var x, const std::vector<int>& offsets);

}  // namespace ehrtext::nn
