#include "ehrtext/tokenize/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

#include "ehrtext/core/errors.hpp"
#include "ehrtext/core/text.hpp"

namespace ehrtext::tok {

using nlohmann::json;

namespace {

std::uint64_t pair_key(int l, int r) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(l)) << 32) | static_cast<std::uint32_t>(r);
}

void append_utf8(std::string& out, unsigned cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Printable stand-ins for raw bytes so token strings are valid JSON text.
const std::vector<unsigned>& byte_to_codepoint() {
  static const std::vector<unsigned> table = [] {
    std::vector<unsigned> t(256);
    unsigned next = 256;
    for (unsigned b = 0; b < 256; ++b) {
      const bool printable = (b >= 33 && b <= 126) || (b >= 161 && b <= 172) || (b >= 174);
      t[b] = printable ? b : next++;
    }
    return t;
  }();
  return table;
}

std::string bytes_to_display(const std::string& bytes) {
  std::string out;
  for (unsigned char b : bytes) append_utf8(out, byte_to_codepoint()[b]);
  return out;
}

std::string display_to_bytes(const std::string& display) {
  static const std::unordered_map<unsigned, unsigned char> inverse = [] {
    std::unordered_map<unsigned, unsigned char> m;
    for (unsigned b = 0; b < 256; ++b) m[byte_to_codepoint()[b]] = static_cast<unsigned char>(b);
    return m;
  }();
  std::string out;
  for (std::size_t i = 0; i < display.size();) {
    const unsigned char c = static_cast<unsigned char>(display[i]);
    unsigned cp;
    std::size_t len;
    if (c < 0x80) {
      cp = c;
      len = 1;
    } else if ((c & 0xE0) == 0xC0) {
      cp = c & 0x1F;
      len = 2;
    } else if ((c & 0xF0) == 0xE0) {
      cp = c & 0x0F;
      len = 3;
    } else {
      throw FormatError("tokenizer: bad token text");
    }
    if (i + len > display.size()) throw FormatError("tokenizer: truncated token text");
    for (std::size_t k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(display[i + k]) & 0x3F);
    auto it = inverse.find(cp);
    if (it == inverse.end()) throw FormatError("tokenizer: unknown byte symbol");
    out.push_back(static_cast<char>(it->second));
    i += len;
  }
  return out;
}

}  // namespace

std::string special_token_name(int id) {
  using namespace special;
  if (id == kPad) return "[PAD]";
  if (id == kCls) return "[CLS]";
  if (id == kSep) return "[SEP]";
  if (id == kUnk) return "[UNK]";
  if (id >= kIntervalBase && id < kIntervalBase + IntervalBucket::kCount)
    return "[T" + std::to_string(id - kIntervalBase) + "]";
  if (id == kPlus) return "[+]";
  if (id == kMinus) return "[-]";
  if (id >= kDigitBase && id < kCount) {
    const int place = (id - kDigitBase) / 10 + kMinPlace;
    const int digit = (id - kDigitBase) % 10;
    return "[DP" + std::string(place >= 0 ? "+" : "") + std::to_string(place) + ":" + std::to_string(digit) + "]";
  }
  throw std::out_of_range("not a special token id");
}

std::vector<std::string> pretokenize(std::string_view normalized) {
  std::vector<std::string> chunks;
  std::string current;
  for (char c : normalized) {
    if (c == ' ' && !current.empty()) {
      chunks.push_back(std::move(current));
      current.clear();
    }
    current.push_back(c);
  }
  if (!current.empty()) chunks.push_back(std::move(current));
  return chunks;
}

Tokenizer::Tokenizer() {
  tokens_.resize(special::kFirstMerge);
  for (int b = 0; b < 256; ++b) {
    std::string s(1, static_cast<char>(b));
    tokens_[static_cast<std::size_t>(special::byte(static_cast<unsigned char>(b)))] = s;
    token_ids_.emplace(s, special::byte(static_cast<unsigned char>(b)));
  }
}

void Tokenizer::add_merge(int left, int right) {
  const std::string merged = tokens_[static_cast<std::size_t>(left)] + tokens_[static_cast<std::size_t>(right)];
  int id;
  auto it = token_ids_.find(merged);
  if (it != token_ids_.end()) {
    id = it->second;
  } else {
    id = static_cast<int>(tokens_.size());
    tokens_.push_back(merged);
    token_ids_.emplace(merged, id);
  }
  merge_rank_.emplace(pair_key(left, right), static_cast<int>(merges_.size()));
  merges_.emplace_back(left, right);
  merge_results_.push_back(id);
}

Tokenizer Tokenizer::train(const std::vector<std::string>& corpus, int vocab_size) {
  std::map<std::string, std::uint64_t> counts;
  for (const auto& s : corpus) ++counts[s];
  return train(counts, vocab_size);
}

Tokenizer Tokenizer::train(const std::map<std::string, std::uint64_t>& text_counts, int vocab_size) {
  if (vocab_size <= special::kFirstMerge)
    throw ConfigError("vocab_size must exceed " + std::to_string(special::kFirstMerge) +
                      " (special tokens + byte alphabet)");
  if (text_counts.empty()) throw ConfigError("tokenizer corpus is empty");
  Tokenizer tok;

  std::map<std::string, std::uint64_t> chunk_counts;
  for (const auto& [text, n] : text_counts)
    for (auto& chunk : pretokenize(normalize_text(text))) chunk_counts[chunk] += n;

  struct Word {
    std::vector<int> symbols;
    std::uint64_t count;
  };
  std::vector<Word> words;
  words.reserve(chunk_counts.size());
  for (const auto& [chunk, n] : chunk_counts) {
    Word w{{}, n};
    for (unsigned char b : chunk) w.symbols.push_back(special::byte(b));
    if (w.symbols.size() > 1) words.push_back(std::move(w));
  }

  std::unordered_map<std::uint64_t, std::uint64_t> pair_counts;
  while (tok.size() < vocab_size) {
    pair_counts.clear();
    for (const auto& w : words)
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) pair_counts[pair_key(w.symbols[i], w.symbols[i + 1])] += w.count;
    if (pair_counts.empty()) break;

    std::uint64_t best_key = 0, best_count = 0;
    for (const auto& [key, count] : pair_counts) {
      if (count < best_count) continue;
      if (count == best_count) {
        const int bl = static_cast<int>(best_key >> 32), br = static_cast<int>(best_key & 0xffffffffu);
        const int kl = static_cast<int>(key >> 32), kr = static_cast<int>(key & 0xffffffffu);
        const auto& tl = tok.tokens_;
        const auto cand = std::tie(tl[static_cast<std::size_t>(kl)], tl[static_cast<std::size_t>(kr)]);
        const auto best = std::tie(tl[static_cast<std::size_t>(bl)], tl[static_cast<std::size_t>(br)]);
        if (!(cand < best)) continue;
      }
      best_key = key;
      best_count = count;
    }
    const int left = static_cast<int>(best_key >> 32), right = static_cast<int>(best_key & 0xffffffffu);
    tok.add_merge(left, right);
    const int merged = tok.merge_results_.back();
    for (auto& w : words) {
      auto& s = w.symbols;
      std::size_t out = 0;
      for (std::size_t i = 0; i < s.size();) {
        if (i + 1 < s.size() && s[i] == left && s[i + 1] == right) {
          s[out++] = merged;
          i += 2;
        } else {
          s[out++] = s[i++];
        }
      }
      s.resize(out);
    }
    std::erase_if(words, [](const Word& w) { return w.symbols.size() < 2; });
  }
  return tok;
}

std::vector<int> Tokenizer::encode_chunk(std::string_view chunk) const {
  std::vector<int> ids;
  ids.reserve(chunk.size());
  for (unsigned char b : chunk) ids.push_back(special::byte(b));
  while (ids.size() > 1) {
    int best_rank = std::numeric_limits<int>::max();
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
      auto it = merge_rank_.find(pair_key(ids[i], ids[i + 1]));
      if (it != merge_rank_.end() && it->second < best_rank) best_rank = it->second;
    }
    if (best_rank == std::numeric_limits<int>::max()) break;
    const auto [left, right] = merges_[static_cast<std::size_t>(best_rank)];
    const int merged = merge_results_[static_cast<std::size_t>(best_rank)];
    std::size_t out = 0;
    for (std::size_t i = 0; i < ids.size();) {
      if (i + 1 < ids.size() && ids[i] == left && ids[i + 1] == right) {
        ids[out++] = merged;
        i += 2;
      } else {
        ids[out++] = ids[i++];
      }
    }
    ids.resize(out);
  }
  return ids;
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> out;
  for (const auto& chunk : pretokenize(normalize_text(text))) {
    auto ids = encode_chunk(chunk);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= size()) throw FormatError("token id out of range: " + std::to_string(id));
    if (special::is_special(id)) continue;
    out += tokens_[static_cast<std::size_t>(id)];
  }
  return out;
}

std::string Tokenizer::token_text(int id) const {
  if (id < 0 || id >= size()) throw FormatError("token id out of range: " + std::to_string(id));
  if (special::is_special(id)) return special_token_name(id);
  return tokens_[static_cast<std::size_t>(id)];
}

json Tokenizer::to_json() const {
  json specials = json::object();
  for (int id = 0; id < special::kCount; ++id) specials[special_token_name(id)] = id;
  json vocab = json::object();
  for (int id = special::kCount; id < size(); ++id) vocab[bytes_to_display(tokens_[static_cast<std::size_t>(id)])] = id;
  json merges = json::array();
  for (const auto& [l, r] : merges_)
    merges.push_back(bytes_to_display(tokens_[static_cast<std::size_t>(l)]) + " " +
                     bytes_to_display(tokens_[static_cast<std::size_t>(r)]));
  return {{"format_version", kFormatVersion}, {"special_tokens", specials}, {"vocab", vocab}, {"merges", merges}};
}

Tokenizer Tokenizer::from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != kFormatVersion) throw FormatError("unsupported tokenizer format_version");
    for (const auto& [name, id] : j.at("special_tokens").items())
      if (special_token_name(id.get<int>()) != name) throw FormatError("special token layout mismatch: " + name);
    if (j.at("special_tokens").size() != static_cast<std::size_t>(special::kCount))
      throw FormatError("special token count mismatch");
    Tokenizer tok;
    const auto& vocab = j.at("vocab");
    std::vector<std::string> by_id(vocab.size() + special::kCount);
    for (const auto& [display, id] : vocab.items()) {
      const int i = id.get<int>();
      if (i < special::kCount || i >= static_cast<int>(by_id.size()) || !by_id[static_cast<std::size_t>(i)].empty())
        throw FormatError("vocab ids must be dense and unique");
      by_id[static_cast<std::size_t>(i)] = display_to_bytes(display);
    }
    for (int b = 0; b < 256; ++b)
      if (by_id[static_cast<std::size_t>(special::byte(static_cast<unsigned char>(b)))] != std::string(1, static_cast<char>(b)))
        throw FormatError("byte alphabet mismatch");
    for (const auto& m : j.at("merges")) {
      const auto s = m.get<std::string>();
      const auto space = s.find(' ');
      if (space == std::string::npos) throw FormatError("bad merge entry");
      const auto l = tok.token_ids_.find(display_to_bytes(s.substr(0, space)));
      const auto r = tok.token_ids_.find(display_to_bytes(s.substr(space + 1)));
      if (l == tok.token_ids_.end() || r == tok.token_ids_.end()) throw FormatError("merge references unknown token");
      tok.add_merge(l->second, r->second);
    }
    if (tok.tokens_.size() != by_id.size()) throw FormatError("vocab size does not match merges");
    for (std::size_t i = special::kFirstMerge; i < by_id.size(); ++i)
      if (tok.tokens_[i] != by_id[i]) throw FormatError("vocab does not match merge order");
    return tok;
  } catch (const json::exception& e) {
    throw FormatError(std::string("tokenizer: ") + e.what());
  }
}

void Tokenizer::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << to_json().dump(1) << '\n';
}

Tokenizer Tokenizer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open tokenizer " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace ehrtext::tok
