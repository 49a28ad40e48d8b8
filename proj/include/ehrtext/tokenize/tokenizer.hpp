#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ehrtext/core/types.hpp"
#include "ehrtext/tokenize/description_map.hpp"
#include "ehrtext/tokenize/special_tokens.hpp"

namespace ehrtext::tok {

/// Sign token (negative values only) followed by one digit-place token per
/// digit, most significant first. Scientific notation is expanded first;
/// places outside [-3, 6] clamp to the extreme place. Leading integer zeros
/// are dropped. Returns an empty vector for non-decimal input.
std::vector<int> digit_place_tokens(std::string_view numeric);

/// A textualized feature value: text for the sub-word tokenizer or
/// pre-tokenized digit-place ids.
using Textualized = std::variant<std::string, std::vector<int>>;

/// Code -> description when mapped, raw string when not (or for Text),
/// digit-place tokens for Numeric.
Textualized textualize(const Feature& feature, const DescriptionMap& descriptions, const EventType& table);

/// Byte-level BPE over whitespace-delimited chunks. Each chunk after the
/// first carries its leading space, so decode(encode(x)) == normalize_text(x).
class Tokenizer {
 public:
  static constexpr int kFormatVersion = 1;

  Tokenizer();

  /// Greedy most-frequent-pair merging until `vocab_size` entries exist or
  /// no pair remains. Ties go to the lexicographically smallest pair.
  /// Throws ConfigError when vocab_size leaves no room for merges.
  static Tokenizer train(const std::vector<std::string>& corpus, int vocab_size);
  /// Same, over pre-counted texts.
  static Tokenizer train(const std::map<std::string, std::uint64_t>& text_counts, int vocab_size);

  std::vector<int> encode(std::string_view text) const;
  std::string decode(const std::vector<int>& ids) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::pair<int, int>>& merges() const { return merges_; }
  /// Byte string for a non-special id; a bracketed name for special ids.
  std::string token_text(int id) const;

  nlohmann::json to_json() const;
  static Tokenizer from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static Tokenizer load(const std::filesystem::path& path);

  bool operator==(const Tokenizer& other) const { return merges_ == other.merges_ && tokens_ == other.tokens_; }

 private:
  void add_merge(int left, int right);
  std::vector<int> encode_chunk(std::string_view chunk) const;

  // Byte strings for ids >= kByteBase; empty for special ids.
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> token_ids_;
  std::vector<std::pair<int, int>> merges_;
  std::vector<int> merge_results_;
  // (left << 32 | right) -> merge rank
  std::unordered_map<std::uint64_t, int> merge_rank_;
};

/// Splits normalized text into BPE chunks ("a b" -> "a", " b").
std::vector<std::string> pretokenize(std::string_view normalized);

std::string special_token_name(int id);

}  // namespace ehrtext::tok
