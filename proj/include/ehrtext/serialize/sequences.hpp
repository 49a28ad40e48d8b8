#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ehrtext/core/types.hpp"
#include "ehrtext/tokenize/description_map.hpp"
#include "ehrtext/tokenize/tokenizer.hpp"

namespace ehrtext::ser {

enum class Segment : std::uint8_t { EventType, Name, Value, Time, Cls, Pad };

const char* to_string(Segment s);

/// Token ids with a parallel segment marker per position.
struct TokenSequence {
  std::vector<int> ids;
  std::vector<Segment> segment;

  std::size_t size() const { return ids.size(); }
  /// Number of positions before the first PAD.
  std::size_t content_length() const;
  /// Throws ShapeError when the sequence breaks the layout invariants
  /// (parallel lengths, leading CLS, no content after PAD).
  void validate() const;
  bool operator==(const TokenSequence&) const = default;
};

/// One padded sequence per event plus the event interval buckets.
struct HierarchicalInput {
  std::vector<TokenSequence> event_sequences;
  std::vector<IntervalBucket> interval_buckets;
  bool operator==(const HierarchicalInput&) const = default;
};

/// Every event of a stay in a single sequence with one leading CLS.
struct FlattenedInput {
  TokenSequence ids;
  bool operator==(const FlattenedInput&) const = default;
};

struct SerializeConfig {
  int L_event = 128;
  int N_max = 256;
  int L_flat = 4096;
};

/// Memoizing text encoder: tokenizer + description map + encode cache.
class TextEncoder {
 public:
  TextEncoder(const tok::Tokenizer& tokenizer, const tok::DescriptionMap& descriptions)
      : tok_(&tokenizer), descriptions_(&descriptions) {}

  const std::vector<int>& encode(const std::string& text) const;
  std::vector<int> encode_value(const Feature& feature, const EventType& type) const;
  const tok::Tokenizer& tokenizer() const { return *tok_; }

 private:
  const tok::Tokenizer* tok_;
  const tok::DescriptionMap* descriptions_;
  mutable std::unordered_map<std::string, std::vector<int>> cache_;
};

/// [CLS] S(type) { S(name) S(value) }* [T], truncated to L_event with the
/// interval token kept last, then PAD-filled to exactly L_event.
TokenSequence serialize_event(const MedicalEvent& event, IntervalBucket interval, const TextEncoder& enc, int L_event);

/// Most recent N_max events, one sequence each.
HierarchicalInput serialize_patient_hierarchical(const PatientSample& sample, const TextEncoder& enc, int L_event,
                                                 int N_max);

/// Per-event layouts without their CLS, concatenated after a single CLS.
/// Whole oldest events are dropped until the result fits L_flat; no PAD.
FlattenedInput serialize_patient_flattened(const PatientSample& sample, const TextEncoder& enc, int L_flat,
                                           int L_event);

/// Texts fed to tokenizer training: event types, feature names and
/// non-numeric textualized values.
std::map<std::string, std::uint64_t> tokenizer_corpus(const std::vector<PatientSample>& samples,
                                                      const tok::DescriptionMap& descriptions);
/// Adds the texts of `samples` to `counts`.
void add_to_corpus(std::map<std::string, std::uint64_t>& counts, const std::vector<const PatientSample*>& samples,
                   const tok::DescriptionMap& descriptions);

nlohmann::json to_json(const TokenSequence& s);
nlohmann::json to_json(const HierarchicalInput& h);

}  // namespace ehrtext::ser
