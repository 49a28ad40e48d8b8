#include "ehrtext/serialize/sequences.hpp"

#include <algorithm>
#include <variant>

#include "ehrtext/core/errors.hpp"

namespace ehrtext::ser {

const char* to_string(Segment s) {
  switch (s) {
    case Segment::EventType: return "EVENT_TYPE";
    case Segment::Name: return "NAME";
    case Segment::Value: return "VALUE";
    case Segment::Time: return "TIME";
    case Segment::Cls: return "CLS";
    case Segment::Pad: return "PAD";
  }
  return "?";
}

std::size_t TokenSequence::content_length() const {
  auto it = std::find(segment.begin(), segment.end(), Segment::Pad);
  return static_cast<std::size_t>(it - segment.begin());
}

void TokenSequence::validate() const {
  if (ids.size() != segment.size()) throw ShapeError("token ids and segments differ in length");
  if (ids.empty() || ids[0] != tok::special::kCls || segment[0] != Segment::Cls)
    throw ShapeError("token sequence must begin with CLS");
  bool padding = false;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const bool pad = segment[i] == Segment::Pad;
    if (pad != (ids[i] == tok::special::kPad)) throw ShapeError("PAD id and PAD segment disagree");
    if (padding && !pad) throw ShapeError("content after PAD");
    padding = padding || pad;
  }
}

const std::vector<int>& TextEncoder::encode(const std::string& text) const {
  auto it = cache_.find(text);
  if (it != cache_.end()) return it->second;
  return cache_.emplace(text, tok_->encode(text)).first->second;
}

std::vector<int> TextEncoder::encode_value(const Feature& feature, const EventType& type) const {
  auto t = tok::textualize(feature, *descriptions_, type);
  if (auto* ids = std::get_if<std::vector<int>>(&t)) return *ids;
  return encode(std::get<std::string>(t));
}

namespace {

void append(TokenSequence& seq, const std::vector<int>& ids, Segment s) {
  seq.ids.insert(seq.ids.end(), ids.begin(), ids.end());
  seq.segment.insert(seq.segment.end(), ids.size(), s);
}

// S(type) { S(name) S(value) }* [T], at most `budget` tokens with [T] last.
TokenSequence event_body(const MedicalEvent& event, IntervalBucket interval, const TextEncoder& enc,
                         std::size_t budget) {
  TokenSequence seq;
  append(seq, enc.encode(event.event_type.text()), Segment::EventType);
  for (const auto& f : event.features) {
    if (seq.size() >= budget) break;
    append(seq, enc.encode(f.name.text()), Segment::Name);
    append(seq, enc.encode_value(f, event.event_type), Segment::Value);
  }
  if (seq.size() > budget - 1) {
    seq.ids.resize(budget - 1);
    seq.segment.resize(budget - 1);
  }
  seq.ids.push_back(tok::special::interval(interval.id()));
  seq.segment.push_back(Segment::Time);
  return seq;
}

}  // namespace

TokenSequence serialize_event(const MedicalEvent& event, IntervalBucket interval, const TextEncoder& enc,
                              int L_event) {
  if (L_event < 8) throw ConfigError("L_event must be at least 8");
  TokenSequence seq;
  seq.ids.reserve(static_cast<std::size_t>(L_event));
  seq.segment.reserve(static_cast<std::size_t>(L_event));
  seq.ids.push_back(tok::special::kCls);
  seq.segment.push_back(Segment::Cls);
  auto body = event_body(event, interval, enc, static_cast<std::size_t>(L_event) - 1);
  seq.ids.insert(seq.ids.end(), body.ids.begin(), body.ids.end());
  seq.segment.insert(seq.segment.end(), body.segment.begin(), body.segment.end());
  seq.ids.resize(static_cast<std::size_t>(L_event), tok::special::kPad);
  seq.segment.resize(static_cast<std::size_t>(L_event), Segment::Pad);
  return seq;
}

HierarchicalInput serialize_patient_hierarchical(const PatientSample& sample, const TextEncoder& enc, int L_event,
                                                 int N_max) {
  if (N_max < 1) throw ConfigError("N_max must be positive");
  if (sample.intervals.size() != sample.events.size()) throw ShapeError("intervals and events differ in length");
  HierarchicalInput out;
  const std::size_t n = sample.events.size();
  const std::size_t start = n > static_cast<std::size_t>(N_max) ? n - static_cast<std::size_t>(N_max) : 0;
  for (std::size_t i = start; i < n; ++i) {
    out.event_sequences.push_back(serialize_event(sample.events[i], sample.intervals[i], enc, L_event));
    out.interval_buckets.push_back(sample.intervals[i]);
  }
  return out;
}

FlattenedInput serialize_patient_flattened(const PatientSample& sample, const TextEncoder& enc, int L_flat,
                                           int L_event) {
  if (L_flat < 8) throw ConfigError("L_flat must be at least 8");
  if (L_event < 8) throw ConfigError("L_event must be at least 8");
  if (sample.intervals.size() != sample.events.size()) throw ShapeError("intervals and events differ in length");
  const std::size_t room = static_cast<std::size_t>(L_flat) - 1;
  std::vector<TokenSequence> bodies;
  std::size_t total = 0;
  for (std::size_t i = sample.events.size(); i-- > 0;) {
    auto body = event_body(sample.events[i], sample.intervals[i], enc, static_cast<std::size_t>(L_event) - 1);
    if (total + body.size() > room) {
      if (bodies.empty()) bodies.push_back(event_body(sample.events[i], sample.intervals[i], enc, room));
      break;
    }
    total += body.size();
    bodies.push_back(std::move(body));
  }
  FlattenedInput out;
  out.ids.ids.push_back(tok::special::kCls);
  out.ids.segment.push_back(Segment::Cls);
  for (auto it = bodies.rbegin(); it != bodies.rend(); ++it) {
    out.ids.ids.insert(out.ids.ids.end(), it->ids.begin(), it->ids.end());
    out.ids.segment.insert(out.ids.segment.end(), it->segment.begin(), it->segment.end());
  }
  return out;
}

std::map<std::string, std::uint64_t> tokenizer_corpus(const std::vector<PatientSample>& samples,
                                                      const tok::DescriptionMap& descriptions) {
  std::map<std::string, std::uint64_t> counts;
  std::vector<const PatientSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  add_to_corpus(counts, ptrs, descriptions);
  return counts;
}

void add_to_corpus(std::map<std::string, std::uint64_t>& counts, const std::vector<const PatientSample*>& samples,
                   const tok::DescriptionMap& descriptions) {
  for (const auto* s : samples) {
    for (const auto& e : s->events) {
      ++counts[e.event_type.text()];
      for (const auto& f : e.features) {
        ++counts[f.name.text()];
        auto t = tok::textualize(f, descriptions, e.event_type);
        if (auto* text = std::get_if<std::string>(&t)) ++counts[*text];
      }
    }
  }
}

nlohmann::json to_json(const TokenSequence& s) {
  nlohmann::json segs = nlohmann::json::array();
  for (auto g : s.segment) segs.push_back(to_string(g));
  return {{"ids", s.ids}, {"segment", segs}};
}

nlohmann::json to_json(const HierarchicalInput& h) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& s : h.event_sequences) events.push_back(to_json(s));
  std::vector<int> buckets;
  for (auto b : h.interval_buckets) buckets.push_back(b.id());
  return {{"event_sequences", events}, {"interval_buckets", buckets}};
}

}  // namespace ehrtext::ser
