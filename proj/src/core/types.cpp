#include "ehrtext/core/types.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "ehrtext/core/errors.hpp"
#include "ehrtext/core/text.hpp"

namespace ehrtext {

FeatureName::FeatureName(std::string_view raw) : text_(normalize_identifier(raw)) {
  if (text_.empty()) throw std::invalid_argument("feature name is empty after normalization");
}

EventType::EventType(std::string_view raw) : text_(normalize_identifier(raw)) {
  if (text_.empty()) throw std::invalid_argument("event type is empty after normalization");
}

const char* to_string(ValueKind kind) {
  switch (kind) {
    case ValueKind::Text: return "text";
    case ValueKind::Numeric: return "numeric";
    case ValueKind::Code: return "code";
  }
  return "text";
}

ValueKind value_kind_from_string(std::string_view s) {
  if (s == "numeric") return ValueKind::Numeric;
  if (s == "code") return ValueKind::Code;
  if (s == "text") return ValueKind::Text;
  throw FormatError("unknown value kind '" + std::string(s) + "'");
}

IntervalBucket::IntervalBucket(int id) : id_(id) {
  if (id < 0 || id >= kCount) throw std::out_of_range("interval bucket id out of range");
}

IntervalBucket IntervalBucket::from_gap(Minutes gap) {
  static constexpr Minutes kUpper[] = {5, 15, 60, 120, 360, 720};
  if (gap < 0) return IntervalBucket(0);
  for (int b = 0; b < 6; ++b)
    if (gap < kUpper[b]) return IntervalBucket(b);
  return IntervalBucket(6);
}

const char* to_string(Task task) {
  switch (task) {
    case Task::Mort: return "Mort";
    case Task::LOS3: return "LOS3";
    case Task::LOS7: return "LOS7";
    case Task::Readm: return "Readm";
    case Task::FiAc: return "Fi_ac";
    case Task::ImDisch: return "Im_disch";
    case Task::Dx: return "Dx";
  }
  return "?";
}

Task task_from_string(std::string_view s) {
  for (Task t : kAllTasks)
    if (s == to_string(t)) return t;
  throw ConfigError("unknown task '" + std::string(s) + "'");
}

TaskKind task_kind(Task task) {
  switch (task) {
    case Task::FiAc:
    case Task::ImDisch: return TaskKind::Multiclass;
    case Task::Dx: return TaskKind::Multilabel;
    default: return TaskKind::Binary;
  }
}

std::optional<MedicalEvent> canonicalize_event(const std::vector<std::pair<std::string, std::string>>& raw_features,
                                               const EventType& event_type, Minutes timestamp,
                                               const CodeColumnPredicate& is_code_column) {
  MedicalEvent event;
  event.event_type = event_type;
  event.timestamp = timestamp;
  std::set<std::string> seen;
  for (const auto& [raw_name, raw_value] : raw_features) {
    const std::string name_text = normalize_identifier(raw_name);
    if (name_text.empty() || seen.count(name_text)) continue;
    std::string value = normalize_text(raw_value);
    if (value.empty()) continue;
    seen.insert(name_text);
    FeatureName name(name_text);
    ValueKind kind = ValueKind::Text;
    if (is_code_column && is_code_column(event_type, name))
      kind = ValueKind::Code;
    else if (is_decimal_literal(value))
      kind = ValueKind::Numeric;
    event.features.push_back(Feature{std::move(name), FeatureValue{std::move(value), kind}});
  }
  if (event.features.empty()) return std::nullopt;
  std::sort(event.features.begin(), event.features.end(),
            [](const Feature& a, const Feature& b) { return a.name < b.name; });
  return event;
}

std::optional<MedicalEvent> canonicalize_event(const MedicalEvent& event, const CodeColumnPredicate& is_code_column) {
  std::vector<std::pair<std::string, std::string>> raw;
  raw.reserve(event.features.size());
  std::set<std::string> code_names;
  for (const auto& f : event.features) {
    raw.emplace_back(f.name.text(), f.value.raw);
    if (f.value.kind == ValueKind::Code) code_names.insert(f.name.text());
  }
  if (is_code_column) return canonicalize_event(raw, event.event_type, event.timestamp, is_code_column);
  return canonicalize_event(raw, event.event_type, event.timestamp,
                            [&](const EventType&, const FeatureName& n) { return code_names.count(n.text()) > 0; });
}

std::vector<IntervalBucket> compute_intervals(const std::vector<MedicalEvent>& events) {
  std::vector<IntervalBucket> out;
  out.reserve(events.size());
  for (std::size_t i = 0; i < events.size(); ++i)
    out.push_back(i == 0 ? IntervalBucket::first()
                         : IntervalBucket::from_gap(events[i].timestamp - events[i - 1].timestamp));
  return out;
}

std::vector<std::string> cohort_violations(const PatientSample& sample, const CohortRules& rules) {
  std::vector<std::string> v;
  if (sample.demographics.age_years < rules.min_age_years) v.push_back("age");
  if (sample.duration() <= rules.min_stay_minutes) v.push_back("duration");
  if (sample.events.size() < rules.min_events) v.push_back("too_few_events");
  if (sample.intervals.size() != sample.events.size()) v.push_back("intervals");
  for (std::size_t i = 0; i < sample.events.size(); ++i) {
    const auto& e = sample.events[i];
    if (e.timestamp < 0 || e.timestamp > rules.observation_window) {
      v.push_back("window");
      break;
    }
    if (i > 0 && e.timestamp < sample.events[i - 1].timestamp) {
      v.push_back("order");
      break;
    }
  }
  return v;
}

}  // namespace ehrtext
