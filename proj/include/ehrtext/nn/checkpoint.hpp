#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "ehrtext/nn/tensor.hpp"

namespace ehrtext::nn {

/// Binary layout: the 8 magic bytes "EHRCKPT1", a little-endian u64 header
/// length, a JSON header {format_version, config, parameters: [{name, shape,
/// offset, bytes, input_table}]}, then the little-endian float32 payload.
struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  nlohmann::json config;
  ParameterStore<float> params;
};

std::string checkpoint_to_bytes(const nlohmann::json& config, const ParameterStore<float>& params);
Checkpoint checkpoint_from_bytes(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config,
                     const ParameterStore<float>& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a hash of the serialized form (used to prove a model was not updated).
std::uint64_t checkpoint_hash(const nlohmann::json& config, const ParameterStore<float>& params);

}  // namespace ehrtext::nn
