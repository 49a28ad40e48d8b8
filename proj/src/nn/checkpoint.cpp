#include "ehrtext/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "ehrtext/core/errors.hpp"
#include "ehrtext/nn/graph.hpp"

namespace ehrtext::nn {

namespace {

constexpr char kMagic[8] = {'E', 'H', 'R', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(in[pos + static_cast<std::size_t>(i)]);
  return v;
}

void put_f32(std::string& out, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

float get_f32(const std::string& in, std::size_t pos) {
  std::uint32_t u = 0;
  for (int i = 3; i >= 0; --i) u = (u << 8) | static_cast<unsigned char>(in[pos + static_cast<std::size_t>(i)]);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace

std::string checkpoint_to_bytes(const nlohmann::json& config, const ParameterStore<float>& params) {
  nlohmann::json manifest = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto* p : params.all()) {
    const std::size_t bytes = p->size() * 4;
    manifest.push_back({{"name", p->name},
                        {"shape", {p->value.rows(), p->value.cols()}},
                        {"offset", offset},
                        {"bytes", bytes},
                        {"input_table", p->input_table}});
    offset += bytes;
  }
  const nlohmann::json header = {
      {"format_version", Checkpoint::kFormatVersion}, {"config", config}, {"parameters", manifest}};
  const std::string text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto* p : params.all())
    for (Eigen::Index i = 0; i < p->value.size(); ++i) put_f32(out, p->value.data()[i]);
  return out;
}

Checkpoint checkpoint_from_bytes(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw FormatError("not a checkpoint (bad magic)");
  const std::uint64_t header_len = get_u64(bytes, 8);
  if (header_len > bytes.size() - 16) throw FormatError("checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  Checkpoint ck;
  try {
    if (header.at("format_version").get<int>() != Checkpoint::kFormatVersion)
      throw FormatError("unsupported checkpoint format_version");
    ck.config = header.at("config");
    const std::size_t base = 16 + header_len;
    for (const auto& entry : header.at("parameters")) {
      const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
      const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto nbytes = entry.at("bytes").get<std::size_t>();
      if (nbytes != static_cast<std::size_t>(rows * cols) * 4 || base + offset + nbytes > bytes.size())
        throw FormatError("checkpoint payload inconsistent for " + entry.at("name").get<std::string>());
      Mat<float> v(rows, cols);
      for (Eigen::Index i = 0; i < v.size(); ++i)
        v.data()[i] = get_f32(bytes, base + offset + static_cast<std::size_t>(i) * 4);
      ck.params.emplace(entry.at("name").get<std::string>(), std::move(v), entry.at("input_table").get<bool>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config,
                     const ParameterStore<float>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  const auto bytes = checkpoint_to_bytes(config, params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_bytes(ss.str());
}

std::uint64_t checkpoint_hash(const nlohmann::json& config, const ParameterStore<float>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : checkpoint_to_bytes(config, params)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace ehrtext::nn
