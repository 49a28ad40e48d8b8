#include "ehrtext/nn/encoder.hpp"

#include "ehrtext/core/errors.hpp"

namespace ehrtext::nn {

void EncoderConfig::validate() const {
  if (layers < 0) throw ConfigError("encoder layers must be non-negative");
  if (model_dim <= 0 || heads <= 0 || ffn_dim <= 0 || max_len <= 0)
    throw ConfigError("encoder sizes must be positive");
  if (model_dim % heads != 0)
    throw ConfigError("model_dim " + std::to_string(model_dim) + " not divisible by heads " + std::to_string(heads));
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"layers", layers},   {"model_dim", model_dim}, {"heads", heads},
          {"ffn_dim", ffn_dim}, {"dropout", dropout},     {"max_len", max_len}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j, const EncoderConfig& defaults) {
  EncoderConfig c = defaults;
  try {
    c.layers = j.value("layers", c.layers);
    c.model_dim = j.value("model_dim", c.model_dim);
    c.heads = j.value("heads", c.heads);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.dropout = j.value("dropout", c.dropout);
    c.max_len = j.value("max_len", c.max_len);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("encoder config: ") + e.what());
  }
  c.validate();
  return c;
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) { return from_json(j, EncoderConfig{}); }

template <typename T>
void declare_encoder(ParameterStore<T>& store, const std::string& prefix, const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const int d = cfg.model_dim;
  store.add(prefix + ".pos", cfg.max_len, d, Init::Normal, rng);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = prefix + ".l" + std::to_string(l);
    store.add(p + ".ln1.g", 1, d, Init::Ones, rng);
    store.add(p + ".ln1.b", 1, d, Init::Zeros, rng);
    store.add(p + ".attn.qkv.W", d, 3 * d, Init::Normal, rng);
    store.add(p + ".attn.qkv.b", 1, 3 * d, Init::Zeros, rng);
    store.add(p + ".attn.out.W", d, d, Init::Normal, rng);
    store.add(p + ".attn.out.b", 1, d, Init::Zeros, rng);
    store.add(p + ".ln2.g", 1, d, Init::Ones, rng);
    store.add(p + ".ln2.b", 1, d, Init::Zeros, rng);
    store.add(p + ".ffn.in.W", d, cfg.ffn_dim, Init::Normal, rng);
    store.add(p + ".ffn.in.b", 1, cfg.ffn_dim, Init::Zeros, rng);
    store.add(p + ".ffn.out.W", cfg.ffn_dim, d, Init::Normal, rng);
    store.add(p + ".ffn.out.b", 1, d, Init::Zeros, rng);
  }
}

template <typename T>
EncoderOutput encoder_forward(Graph<T>& g, ParameterStore<T>& store, const std::string& prefix,
                              const EncoderConfig& cfg, Var x, const std::vector<int>& offsets) {
  const auto& vx = g.value(x);
  if (vx.cols() != cfg.model_dim)
    throw ShapeError(prefix + ": input width " + std::to_string(vx.cols()) + " != model_dim " +
                     std::to_string(cfg.model_dim));
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != vx.rows())
    throw ShapeError(prefix + ": offsets do not cover the input rows");
  std::vector<int> positions(static_cast<std::size_t>(vx.rows()));
  for (std::size_t b = 0; b + 1 < offsets.size(); ++b) {
    if (offsets[b + 1] - offsets[b] > cfg.max_len)
      throw ShapeError(prefix + ": sequence length " + std::to_string(offsets[b + 1] - offsets[b]) +
                       " exceeds max_len " + std::to_string(cfg.max_len));
    for (int r = offsets[b]; r < offsets[b + 1]; ++r) positions[static_cast<std::size_t>(r)] = r - offsets[b];
  }
  EncoderOutput out;
  Var h = g.add(x, g.embedding(store.get(prefix + ".pos"), positions));
  h = g.dropout(h, cfg.dropout);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = prefix + ".l" + std::to_string(l);
    Var a = g.layer_norm(h, store.get(p + ".ln1.g"), store.get(p + ".ln1.b"));
    Var qkv = g.linear(a, store.get(p + ".attn.qkv.W"), store.get(p + ".attn.qkv.b"));
    Var att = g.attention(qkv, offsets, cfg.heads);
    out.attention.push_back(att);
    Var o = g.linear(att, store.get(p + ".attn.out.W"), store.get(p + ".attn.out.b"));
    h = g.add(h, g.dropout(o, cfg.dropout));
    Var b = g.layer_norm(h, store.get(p + ".ln2.g"), store.get(p + ".ln2.b"));
    Var f = g.gelu(g.linear(b, store.get(p + ".ffn.in.W"), store.get(p + ".ffn.in.b")));
    f = g.linear(f, store.get(p + ".ffn.out.W"), store.get(p + ".ffn.out.b"));
    h = g.add(h, g.dropout(f, cfg.dropout));
  }
  out.hidden = h;
  return out;
}

template void declare_encoder<float>(ParameterStore<float>&, const std::string&, const EncoderConfig&, Rng&);
template void declare_encoder<double>(ParameterStore<double>&, const std::string&, const EncoderConfig&, Rng&);
template EncoderOutput encoder_forward<float>(Graph<float>&, ParameterStore<float>&, const std::string&,
                                             const EncoderConfig&, Var, const std::vector<int>&);
template EncoderOutput encoder_forward<double>(Graph<double>&, ParameterStore<double>&, const std::string&,
                                              const EncoderConfig&, Var, const std::vector<int>&);

}  // namespace ehrtext::nn
