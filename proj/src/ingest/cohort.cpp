#include "ehrtext/ingest/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <set>
#include <unordered_map>

#include "ehrtext/core/errors.hpp"
#include "ehrtext/core/text.hpp"
#include "ehrtext/ingest/csv.hpp"

namespace ehrtext::ingest {

using nlohmann::json;

json IngestionReport::to_json() const {
  return {{"stays_total", stays_total},
          {"samples_emitted", samples_emitted},
          {"samples_rejected_by_rule", samples_rejected_by_rule},
          {"features_pruned", features_pruned},
          {"warnings", warnings}};
}

namespace {

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

bool parse_fixed_int(const std::string& s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  return true;
}

bool is_expired(const std::string& status) {
  static const std::set<std::string> kDead = {"expired", "dead", "died", "deceased", "death"};
  return kDead.count(to_lower_ascii(normalize_text(status))) > 0;
}

struct StayRow {
  std::string stay_id;
  std::string hadm_id;
  Minutes intime = 0;
  Minutes outtime = 0;
  std::optional<int> age;
  std::string status;
  std::string location;
  std::size_t row = 0;
  bool times_ok = true;
};

std::vector<StayRow> read_stays(const DatasetManifest& m, std::vector<std::string>* warnings) {
  const auto& spec = m.stays_table;
  const CsvTable table = read_csv(m.resolve(spec.file_path));
  auto col = [&](const std::string& name) { return *table.column(name); };
  const auto c_id = col(spec.stay_id_column), c_hadm = col(spec.hospital_admission_id_column),
             c_in = col(spec.intime_column), c_out = col(spec.outtime_column), c_age = col(spec.age_column),
             c_status = col(spec.discharge_status_column), c_loc = col(spec.discharge_location_column);
  std::vector<StayRow> stays;
  std::size_t bad_times = 0;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    StayRow s;
    s.stay_id = normalize_text(row[c_id]);
    s.hadm_id = normalize_text(row[c_hadm]);
    s.row = r;
    auto in = parse_timestamp(row[c_in]);
    auto out = parse_timestamp(row[c_out]);
    if (!in || !out) {
      s.times_ok = false;
      ++bad_times;
    } else {
      s.intime = *in;
      s.outtime = *out;
    }
    const std::string age = normalize_text(row[c_age]);
    if (is_decimal_literal(age)) s.age = static_cast<int>(std::floor(std::stod(age)));
    s.status = normalize_text(row[c_status]);
    s.location = normalize_text(row[c_loc]);
    if (s.location.empty()) s.location = "unknown";
    stays.push_back(std::move(s));
  }
  if (bad_times && warnings)
    warnings->push_back(std::to_string(bad_times) + " stays with unparseable intime/outtime dropped");
  return stays;
}

struct ScannedEvent {
  std::size_t stay_index;
  std::size_t table_index;
  std::size_t row_index;
  MedicalEvent event;
};

struct TableScan {
  std::vector<ScannedEvent> events;
  std::size_t bad_timestamps = 0;
  std::size_t empty_events = 0;
};

TableScan scan_table(const DatasetManifest& m, std::size_t table_index,
                     const std::unordered_map<std::string, std::size_t>& stay_index,
                     const std::vector<StayRow>& stays, const tok::DescriptionMap& descriptions,
                     const CohortRules& rules) {
  const auto& spec = m.event_tables[table_index];
  const CsvTable table = read_csv(m.resolve(spec.file_path));
  const std::size_t c_stay = *table.column(spec.stay_id_column);
  const std::size_t c_time = *table.column(spec.time_column);
  std::set<std::size_t> skip = {c_stay, c_time};
  for (const auto& ex : spec.excluded_columns) skip.insert(*table.column(ex));
  std::vector<std::size_t> feature_columns;
  for (std::size_t c = 0; c < table.header.size(); ++c)
    if (!skip.count(c)) feature_columns.push_back(c);

  const EventType type(spec.event_type_name);
  const CodeColumnPredicate is_code = [&](const EventType& t, const FeatureName& n) {
    return descriptions.covers(t, n);
  };
  TableScan scan;
  std::vector<std::pair<std::string, std::string>> raw;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    auto it = stay_index.find(normalize_text(row[c_stay]));
    if (it == stay_index.end()) continue;
    const StayRow& stay = stays[it->second];
    if (!stay.times_ok) continue;
    auto t = parse_timestamp(row[c_time]);
    if (!t) {
      ++scan.bad_timestamps;
      continue;
    }
    const Minutes rel = *t - stay.intime;
    if (rel < 0 || rel > rules.observation_window) continue;
    raw.clear();
    for (std::size_t c : feature_columns) raw.emplace_back(table.header[c], row[c]);
    auto event = canonicalize_event(raw, type, rel, is_code);
    if (!event) {
      ++scan.empty_events;
      continue;
    }
    scan.events.push_back({it->second, table_index, r, std::move(*event)});
  }
  return scan;
}

}  // namespace

std::optional<Minutes> parse_timestamp(const std::string& raw) {
  const std::string s = normalize_text(raw);
  if (s.empty()) return std::nullopt;
  if (is_decimal_literal(s)) {
    const double v = std::stod(s);
    if (!std::isfinite(v)) return std::nullopt;
    return static_cast<Minutes>(std::floor(v));
  }
  int y, mo, d, h = 0, mi = 0;
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  if (!parse_fixed_int(s, 0, 4, y) || !parse_fixed_int(s, 5, 2, mo) || !parse_fixed_int(s, 8, 2, d))
    return std::nullopt;
  if (mo < 1 || mo > 12 || d < 1 || d > 31) return std::nullopt;
  if (s.size() > 10) {
    if ((s[10] != ' ' && s[10] != 'T') || s.size() < 16 || s[13] != ':') return std::nullopt;
    if (!parse_fixed_int(s, 11, 2, h) || !parse_fixed_int(s, 14, 2, mi)) return std::nullopt;
    if (h > 23 || mi > 59) return std::nullopt;
    if (s.size() > 16) {
      int sec;
      if (s[16] != ':' || !parse_fixed_int(s, 17, 2, sec)) return std::nullopt;
      for (std::size_t i = 19; i < s.size(); ++i)
        if (!(s[i] == '.' || (s[i] >= '0' && s[i] <= '9'))) return std::nullopt;
    }
  }
  return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 1440 + h * 60 + mi;
}

tok::DescriptionMap load_description_maps(const DatasetManifest& manifest) {
  tok::DescriptionMap map;
  for (const auto& spec : manifest.description_maps) {
    const CsvTable table = read_csv(manifest.resolve(spec.file_path));
    const std::size_t c_code = *table.column(spec.code_column);
    const std::size_t c_text = *table.column(spec.text_column);
    for (const auto& target : spec.applies_to) {
      const auto colon = target.find(':');
      const EventType type(target.substr(0, colon));
      const FeatureName column(target.substr(colon + 1));
      map.add(type, column, "", "");  // registers the column even for an empty table
      for (const auto& row : table.rows) map.add(type, column, row[c_code], row[c_text]);
    }
  }
  return map;
}

std::map<std::string, std::string> main_feature_columns(const DatasetManifest& manifest) {
  std::map<std::string, std::string> out;
  for (const auto& t : manifest.event_tables)
    if (!t.main_feature_column.empty())
      out[EventType(t.event_type_name).text()] = FeatureName(t.main_feature_column).text();
  return out;
}

std::vector<PatientSample> build_cohort(const DatasetManifest& manifest, IngestionReport* report,
                                        const CohortRules& rules) {
  IngestionReport local;
  IngestionReport& rep = report ? *report : local;
  const auto descriptions = load_description_maps(manifest);
  const auto stays = read_stays(manifest, &rep.warnings);
  rep.stays_total += stays.size();

  std::unordered_map<std::string, std::size_t> stay_index;
  std::map<std::string, std::size_t> first_in_admission;
  for (std::size_t i = 0; i < stays.size(); ++i) {
    if (!stay_index.emplace(stays[i].stay_id, i).second)
      rep.warnings.push_back("duplicate stay id '" + stays[i].stay_id + "' ignored");
    if (!stays[i].times_ok) continue;
    auto [it, inserted] = first_in_admission.emplace(stays[i].hadm_id, i);
    if (!inserted && stays[i].intime < stays[it->second].intime) it->second = i;
  }

  // Tables are scanned concurrently and merged in declaration order.
  std::vector<std::future<TableScan>> futures;
  for (std::size_t t = 0; t < manifest.event_tables.size(); ++t)
    futures.push_back(std::async(std::launch::async, scan_table, std::cref(manifest), t, std::cref(stay_index),
                                 std::cref(stays), std::cref(descriptions), std::cref(rules)));
  std::vector<std::vector<ScannedEvent>> per_stay(stays.size());
  for (std::size_t t = 0; t < futures.size(); ++t) {
    TableScan scan = futures[t].get();
    if (scan.bad_timestamps)
      rep.warnings.push_back(manifest.event_tables[t].event_type_name + ": " + std::to_string(scan.bad_timestamps) +
                             " rows with unparseable timestamps dropped");
    if (scan.empty_events)
      rep.warnings.push_back(manifest.event_tables[t].event_type_name + ": " + std::to_string(scan.empty_events) +
                             " rows without feature values dropped");
    for (auto& e : scan.events) per_stay[e.stay_index].push_back(std::move(e));
  }

  std::vector<PatientSample> samples;
  for (std::size_t i = 0; i < stays.size(); ++i) {
    const StayRow& s = stays[i];
    if (stay_index.at(s.stay_id) != i) continue;
    auto reject = [&](const char* rule) { ++rep.samples_rejected_by_rule[rule]; };
    if (!s.times_ok) {
      reject("unparseable_time");
      continue;
    }
    if (!s.age || *s.age < rules.min_age_years) {
      reject("age");
      continue;
    }
    if (s.outtime - s.intime <= rules.min_stay_minutes) {
      reject("duration");
      continue;
    }
    if (first_in_admission.at(s.hadm_id) != i) {
      reject("not_first_stay");
      continue;
    }
    auto& events = per_stay[i];
    if (events.size() < rules.min_events) {
      reject("too_few_events");
      continue;
    }
    std::stable_sort(events.begin(), events.end(), [](const ScannedEvent& a, const ScannedEvent& b) {
      return std::tie(a.event.timestamp, a.table_index, a.row_index) <
             std::tie(b.event.timestamp, b.table_index, b.row_index);
    });
    PatientSample sample;
    sample.stay_id = s.stay_id;
    sample.hospital_admission_id = s.hadm_id;
    sample.source_dataset = manifest.dataset_name;
    sample.demographics = {*s.age, 0, s.outtime - s.intime, s.status, s.location};
    for (auto& e : events) sample.events.push_back(std::move(e.event));
    sample.intervals = compute_intervals(sample.events);
    samples.push_back(std::move(sample));
  }
  rep.samples_emitted = samples.size();
  return samples;
}

bool FeatureStats::is_integer_only(const EventType& type, const FeatureName& name) const {
  auto it = integer_only.find({type.text(), name.text()});
  return it != integer_only.end() && it->second;
}

bool FeatureStats::is_rare(const EventType& type, const Feature& f) const {
  if (f.value.kind == ValueKind::Numeric) {
    auto it = name_counts.find({type.text(), f.name.text()});
    return it == name_counts.end() || it->second < min_count;
  }
  auto it = value_counts.find({type.text(), f.name.text(), f.value.raw});
  return it == value_counts.end() || it->second < min_count;
}

bool FeatureStats::should_remove(const EventType& type, const Feature& f) const {
  return is_integer_only(type, f.name) || is_rare(type, f);
}

FeatureStats compute_feature_stats(const std::vector<PatientSample>& samples) {
  FeatureStats stats;
  for (const auto& s : samples)
    for (const auto& e : s.events)
      for (const auto& f : e.features) {
        FeatureStats::NameKey nk{e.event_type.text(), f.name.text()};
        ++stats.name_counts[nk];
        ++stats.value_counts[{nk.first, nk.second, f.value.raw}];
        // Coded columns are replaced by their descriptions, so they never count as integer-only.
        const bool integral = f.value.kind != ValueKind::Code && is_integer_literal(f.value.raw);
        auto [it, inserted] = stats.integer_only.emplace(nk, integral);
        if (!inserted) it->second = it->second && integral;
      }
  return stats;
}

std::vector<PatientSample> prune_features(std::vector<PatientSample> samples, const FeatureStats& stats,
                                          IngestionReport* report, const CohortRules& rules) {
  std::vector<PatientSample> out;
  out.reserve(samples.size());
  std::size_t pruned = 0, dropped = 0;
  for (auto& s : samples) {
    std::vector<MedicalEvent> kept;
    kept.reserve(s.events.size());
    for (auto& e : s.events) {
      const auto before = e.features.size();
      std::erase_if(e.features, [&](const Feature& f) { return stats.should_remove(e.event_type, f); });
      pruned += before - e.features.size();
      if (!e.features.empty()) kept.push_back(std::move(e));
    }
    s.events = std::move(kept);
    s.intervals = compute_intervals(s.events);
    if (s.events.size() < rules.min_events) {
      ++dropped;
      continue;
    }
    out.push_back(std::move(s));
  }
  if (report) {
    report->features_pruned += pruned;
    if (dropped) report->samples_rejected_by_rule["too_few_events_after_pruning"] += dropped;
    report->samples_emitted = out.size();
  }
  return out;
}

json LabelVocabulary::to_json() const {
  return {{"Fi_ac", final_acuity}, {"Im_disch", imminent_discharge}};
}

LabelVocabulary LabelVocabulary::from_json(const json& j) {
  LabelVocabulary v;
  v.final_acuity = j.at("Fi_ac").get<std::vector<std::string>>();
  v.imminent_discharge = j.at("Im_disch").get<std::vector<std::string>>();
  return v;
}

std::vector<PatientSample> attach_labels(std::vector<PatientSample> samples, const DatasetManifest& manifest,
                                         const std::optional<std::filesystem::path>& dx_class_map,
                                         LabelVocabulary* vocab_out, IngestionReport* report) {
  std::vector<std::string> warnings;
  const auto stays = read_stays(manifest, nullptr);
  std::map<std::string, std::vector<Minutes>> admission_intimes;
  for (const auto& s : stays)
    if (s.times_ok) admission_intimes[s.hadm_id].push_back(s.intime);
  std::unordered_map<std::string, Minutes> stay_intime;
  for (const auto& s : stays)
    if (s.times_ok) stay_intime.emplace(s.stay_id, s.intime);

  // Diagnosis codes per admission, mapped to classes.
  std::map<std::string, std::vector<std::uint8_t>> dx_by_admission;
  if (manifest.diagnoses_table && dx_class_map) {
    std::map<std::string, int> code_class;
    const CsvTable map = read_csv(*dx_class_map);
    const auto c_code = map.column("code"), c_class = map.column("class_index");
    if (!c_code || !c_class) throw ConfigError("dx class map needs 'code' and 'class_index' columns");
    for (const auto& row : map.rows) {
      const int k = std::stoi(row[*c_class]);
      if (k < 0 || k >= kDxClasses) throw ConfigError("dx class index out of range: " + row[*c_class]);
      code_class[normalize_text(row[*c_code])] = k;
    }
    const auto& spec = *manifest.diagnoses_table;
    const CsvTable dx = read_csv(manifest.resolve(spec.file_path));
    const std::size_t c_hadm = *dx.column(spec.hospital_admission_id_column);
    const std::size_t c_dx = *dx.column(spec.code_column);
    std::size_t unmapped = 0;
    for (const auto& row : dx.rows) {
      auto it = code_class.find(normalize_text(row[c_dx]));
      if (it == code_class.end()) {
        ++unmapped;
        continue;
      }
      auto& v = dx_by_admission[normalize_text(row[c_hadm])];
      v.resize(kDxClasses, 0);
      v[static_cast<std::size_t>(it->second)] = 1;
    }
    if (unmapped) warnings.push_back(std::to_string(unmapped) + " diagnosis codes without a class mapping ignored");
  } else {
    warnings.push_back("no diagnoses table or dx class map; Dx labels are all-zero");
  }

  std::size_t missing_status = 0;
  std::vector<PatientSample> kept;
  for (auto& s : samples) {
    if (normalize_text(s.demographics.discharge_status).empty()) {
      ++missing_status;
      continue;
    }
    kept.push_back(std::move(s));
  }
  if (missing_status) {
    warnings.push_back(std::to_string(missing_status) + " samples without discharge status dropped");
    if (report) report->samples_rejected_by_rule["missing_discharge_status"] += missing_status;
  }

  std::set<std::string> survivor_locations, all_locations;
  for (const auto& s : kept) {
    const auto& loc = s.demographics.discharge_location;
    if (loc.empty()) continue;
    all_locations.insert(loc);
    if (!is_expired(s.demographics.discharge_status)) survivor_locations.insert(loc);
  }
  LabelVocabulary vocab;
  vocab.final_acuity.push_back("death");
  for (const auto& l : survivor_locations)
    if (l != "death") vocab.final_acuity.push_back(l);
  vocab.imminent_discharge.push_back("no discharge");
  for (const auto& l : all_locations)
    if (l != "no discharge") vocab.imminent_discharge.push_back(l);
  auto index_of = [](const std::vector<std::string>& v, const std::string& x) {
    auto it = std::find(v.begin(), v.end(), x);
    return it == v.end() ? -1 : static_cast<int>(it - v.begin());
  };

  const Minutes window_end = CohortRules{}.observation_window + kPredictionWindow;
  for (auto& s : kept) {
    const Minutes duration = s.duration();
    const bool expired = is_expired(s.demographics.discharge_status);
    const auto& loc = s.demographics.discharge_location;
    auto set = [&](Task t, auto value) { s.labels[t] = Label{t, value}; };
    set(Task::Mort, expired && duration <= window_end ? 1 : 0);
    set(Task::LOS3, duration > kLos3Minutes ? 1 : 0);
    set(Task::LOS7, duration > kLos7Minutes ? 1 : 0);
    int readm = 0;
    auto it = stay_intime.find(s.stay_id);
    if (it != stay_intime.end())
      for (Minutes other : admission_intimes[s.hospital_admission_id])
        if (other > it->second) readm = 1;
    set(Task::Readm, readm);
    int fi = expired ? 0 : index_of(vocab.final_acuity, loc);
    set(Task::FiAc, fi < 0 ? 0 : fi);
    int im = 0;
    if (duration <= window_end && !loc.empty()) im = std::max(0, index_of(vocab.imminent_discharge, loc));
    set(Task::ImDisch, im);
    auto dx = dx_by_admission[s.hospital_admission_id];
    dx.resize(kDxClasses, 0);
    set(Task::Dx, dx);
  }
  if (vocab_out) *vocab_out = vocab;
  if (report) {
    report->samples_emitted = kept.size();
    for (auto& w : warnings) report->warnings.push_back(std::move(w));
  }
  return kept;
}

}  // namespace ehrtext::ingest
