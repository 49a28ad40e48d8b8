#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace ehrtext {

/// Feature name after identifier normalization (never empty).
class FeatureName {
 public:
  FeatureName() = default;
  /// Throws std::invalid_argument when the name is empty after normalization.
  explicit FeatureName(std::string_view raw);
  const std::string& text() const noexcept { return text_; }
  auto operator<=>(const FeatureName&) const = default;

 private:
  std::string text_;
};

enum class ValueKind : std::uint8_t { Text, Numeric, Code };

const char* to_string(ValueKind kind);
ValueKind value_kind_from_string(std::string_view s);

struct FeatureValue {
  std::string raw;
  ValueKind kind = ValueKind::Text;
  bool operator==(const FeatureValue&) const = default;
};

struct Feature {
  FeatureName name;
  FeatureValue value;
  bool operator==(const Feature&) const = default;
};

class EventType {
 public:
  EventType() = default;
  explicit EventType(std::string_view raw);
  const std::string& text() const noexcept { return text_; }
  auto operator<=>(const EventType&) const = default;

 private:
  std::string text_;
};

/// Minutes since ICU admission.
using Minutes = std::int64_t;

struct MedicalEvent {
  EventType event_type;
  std::vector<Feature> features;  // sorted by name, names unique
  Minutes timestamp = 0;
  bool operator==(const MedicalEvent&) const = default;
};

/// Time-gap class attached to each event: gap to the previous event in the
/// same stay, or `kFirstEvent` for the first one.
class IntervalBucket {
 public:
  static constexpr int kCount = 8;
  static constexpr int kFirstEvent = 7;

  IntervalBucket() = default;
  explicit IntervalBucket(int id);
  int id() const noexcept { return id_; }
  bool operator==(const IntervalBucket&) const = default;

  /// Gap boundaries [0,5) [5,15) [15,60) [60,120) [120,360) [360,720) [720,inf).
  /// Negative gaps clamp to bucket 0.
  static IntervalBucket from_gap(Minutes gap);
  static IntervalBucket first() { return IntervalBucket(kFirstEvent); }

 private:
  int id_ = kFirstEvent;
};

enum class Task : std::uint8_t { Mort, LOS3, LOS7, Readm, FiAc, ImDisch, Dx };

inline constexpr std::array<Task, 7> kAllTasks = {Task::Mort,  Task::LOS3,    Task::LOS7, Task::Readm,
                                                  Task::FiAc,  Task::ImDisch, Task::Dx};
inline constexpr int kDxClasses = 18;

enum class TaskKind : std::uint8_t { Binary, Multiclass, Multilabel };

const char* to_string(Task task);
/// Accepts "Mort", "LOS3", "LOS7", "Readm", "Fi_ac", "Im_disch", "Dx".
Task task_from_string(std::string_view s);
TaskKind task_kind(Task task);

/// Binary bit, class index or 18-wide multi-hot vector depending on the task.
struct Label {
  Task task = Task::Mort;
  std::variant<int, std::vector<std::uint8_t>> value;

  int as_int() const { return std::get<int>(value); }
  const std::vector<std::uint8_t>& as_multi_hot() const { return std::get<std::vector<std::uint8_t>>(value); }
  bool operator==(const Label&) const = default;
};

struct Demographics {
  int age_years = 0;
  Minutes icu_in = 0;
  Minutes icu_out = 0;
  std::string discharge_status;
  std::string discharge_location;
  bool operator==(const Demographics&) const = default;
};

struct PatientSample {
  std::string stay_id;
  std::string hospital_admission_id;
  std::string source_dataset;
  std::vector<MedicalEvent> events;
  std::vector<IntervalBucket> intervals;
  std::map<Task, Label> labels;
  Demographics demographics;
  bool operator==(const PatientSample&) const = default;

  Minutes duration() const { return demographics.icu_out - demographics.icu_in; }
};

/// Cohort thresholds; every admitted sample satisfies all of them.
struct CohortRules {
  int min_age_years = 18;            // inclusive
  Minutes min_stay_minutes = 1440;   // strict: duration must exceed this
  std::size_t min_events = 5;
  Minutes observation_window = 720;  // inclusive upper bound on event time
};

/// Predicate telling whether a (event type, normalized feature name) column
/// is covered by a description map.
using CodeColumnPredicate = std::function<bool(const EventType&, const FeatureName&)>;

/// Canonical event: names normalized, first occurrence of a name wins,
/// features sorted by name, values whitespace-normalized, kinds inferred
/// (Code if the column has a description map, else Numeric if the value is a
/// decimal literal, else Text). Empty values are dropped. Returns nullopt when
/// no feature survives.
std::optional<MedicalEvent> canonicalize_event(const std::vector<std::pair<std::string, std::string>>& raw_features,
                                               const EventType& event_type, Minutes timestamp,
                                               const CodeColumnPredicate& is_code_column = {});

/// Re-applies canonicalization to an already-built event.
std::optional<MedicalEvent> canonicalize_event(const MedicalEvent& event,
                                               const CodeColumnPredicate& is_code_column = {});

/// Recomputes interval buckets from event timestamps.
std::vector<IntervalBucket> compute_intervals(const std::vector<MedicalEvent>& events);

/// Names of the violated cohort invariants (empty when the sample is valid).
std::vector<std::string> cohort_violations(const PatientSample& sample, const CohortRules& rules = {});

}  // namespace ehrtext
