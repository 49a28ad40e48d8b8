#include "ehrtext/synth/generator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "ehrtext/core/errors.hpp"
#include "ehrtext/core/random.hpp"
#include "ehrtext/experiments/metrics.hpp"
#include "ehrtext/ingest/csv.hpp"
#include "ehrtext/ingest/manifest.hpp"

namespace ehrtext::synth {

using nlohmann::json;

namespace {

constexpr std::uint64_t kLexiconSeed = 0x1e71c0;
constexpr int kDxClassCount = 18;
constexpr int kDxCodesPerClass = 3;
constexpr double kDriverWeight = 3.0;
constexpr int kMaxAttempts = 10;
constexpr int kObservationMinutes = 720;
constexpr int kEventHorizonMinutes = 1440;

struct DrugAgent {
  const char* name;
  const char* unit;
  double dose;
};

const DrugAgent kDrugs[] = {
    {"vancomycin", "mg", 1000},      {"heparin", "units", 5000},     {"furosemide", "mg", 40},
    {"insulin", "units", 10},        {"metoprolol", "mg", 25},       {"pantoprazole", "mg", 40},
    {"acetaminophen", "mg", 650},    {"ondansetron", "mg", 4},       {"ceftriaxone", "g", 1},
    {"piperacillin", "g", 4.5},      {"cefazolin", "g", 2},          {"meropenem", "g", 1},
    {"morphine", "mg", 2},           {"fentanyl", "mcg", 50},        {"hydromorphone", "mg", 0.5},
    {"lorazepam", "mg", 1},          {"midazolam", "mg", 2},         {"propofol", "mg", 100},
    {"dexmedetomidine", "mcg", 200}, {"haloperidol", "mg", 2.5},     {"quetiapine", "mg", 25},
    {"amiodarone", "mg", 200},       {"diltiazem", "mg", 30},        {"labetalol", "mg", 10},
    {"hydralazine", "mg", 10},       {"lisinopril", "mg", 10},       {"amlodipine", "mg", 5},
    {"aspirin", "mg", 81},           {"clopidogrel", "mg", 75},      {"atorvastatin", "mg", 40},
    {"enoxaparin", "mg", 40},        {"warfarin", "mg", 5},          {"potassium chloride", "meq", 20},
    {"magnesium sulfate", "g", 2},   {"calcium gluconate", "g", 1},  {"sodium bicarbonate", "meq", 50},
    {"albuterol", "mg", 2.5},        {"ipratropium", "mg", 0.5},     {"prednisone", "mg", 20},
    {"methylprednisolone", "mg", 40}, {"hydrocortisone", "mg", 50},  {"levothyroxine", "mcg", 50},
    {"docusate", "mg", 100},         {"senna", "mg", 8.6},           {"bisacodyl", "mg", 10},
    {"polyethylene glycol", "g", 17}, {"lactulose", "ml", 30},       {"rifaximin", "mg", 550},
    {"famotidine", "mg", 20},        {"metronidazole", "mg", 500},   {"ciprofloxacin", "mg", 400},
    {"levofloxacin", "mg", 750},     {"azithromycin", "mg", 500},    {"fluconazole", "mg", 200},
    {"acyclovir", "mg", 400},        {"gabapentin", "mg", 300},      {"levetiracetam", "mg", 500},
    {"phenytoin", "mg", 100},        {"thiamine", "mg", 100},        {"folic acid", "mg", 1},
};

const char* const kDrugForms[] = {"hcl",      "in ivpb",       "sodium",       "oral tablet", "injection",
                                  "in ns",    "extended release", "oral solution", "in d5w",   "prefilled syringe"};
const char* const kDrugFormRoute[] = {"iv", "iv", "iv", "po", "iv", "iv", "po", "po", "iv", "sc"};

struct LabAnalyte {
  const char* name;
  const char* unit;
  double mean;
  double sd;
};

const LabAnalyte kLabs[] = {
    {"sodium", "meq/l", 139, 4},           {"potassium", "meq/l", 4.1, 0.5},     {"chloride", "meq/l", 103, 5},
    {"bicarbonate", "meq/l", 24, 4},       {"urea nitrogen", "mg/dl", 22, 12},   {"creatinine", "mg/dl", 1.2, 0.8},
    {"glucose", "mg/dl", 130, 40},         {"calcium", "mg/dl", 8.6, 0.6},       {"magnesium", "mg/dl", 2.0, 0.3},
    {"phosphate", "mg/dl", 3.5, 0.9},      {"hemoglobin", "g/dl", 10.5, 2},      {"hematocrit", "%", 31, 6},
    {"platelet count", "k/ul", 210, 90},   {"white blood cells", "k/ul", 10.5, 5}, {"inr", "ratio", 1.3, 0.4},
    {"ptt", "sec", 35, 10},                {"lactate", "mmol/l", 2.0, 1.2},      {"albumin", "g/dl", 3.2, 0.6},
    {"bilirubin total", "mg/dl", 1.1, 1.0}, {"alanine aminotransferase", "iu/l", 45, 40},
    {"aspartate aminotransferase", "iu/l", 50, 45}, {"alkaline phosphatase", "iu/l", 95, 50},
    {"troponin t", "ng/ml", 0.05, 0.1},    {"creatine kinase", "iu/l", 180, 150}, {"ph", "units", 7.38, 0.06},
    {"pco2", "mm hg", 41, 8},              {"po2", "mm hg", 110, 40},            {"base excess", "meq/l", 0, 3},
    {"anion gap", "meq/l", 13, 3},         {"lipase", "iu/l", 40, 30},           {"amylase", "iu/l", 60, 40},
    {"lactate dehydrogenase", "iu/l", 240, 90}, {"fibrinogen", "mg/dl", 320, 100}, {"d dimer", "ug/ml", 1.2, 1.0},
    {"ferritin", "ng/ml", 300, 250},       {"c reactive protein", "mg/l", 60, 50}, {"procalcitonin", "ng/ml", 0.8, 1.2},
    {"natriuretic peptide", "pg/ml", 400, 350}, {"osmolality", "mosm/kg", 290, 10},
    {"ionized calcium", "mmol/l", 1.12, 0.08},
};

const char* const kLabSpecimens[] = {"blood", "serum", "plasma", "arterial blood"};

struct InfusionAgent {
  const char* name;
  const char* unit;
  double amount;
};

const InfusionAgent kInfusions[] = {
    {"norepinephrine", "mg", 4},   {"epinephrine", "mg", 1},       {"vasopressin", "units", 20},
    {"phenylephrine", "mg", 10},   {"dopamine", "mg", 400},        {"dobutamine", "mg", 250},
    {"milrinone", "mg", 20},       {"nitroglycerin", "mg", 50},    {"nitroprusside", "mg", 50},
    {"esmolol", "mg", 2500},       {"nicardipine", "mg", 25},      {"insulin regular", "units", 100},
    {"heparin sodium", "units", 25000}, {"bivalirudin", "mg", 250}, {"argatroban", "mg", 50},
    {"propofol", "mg", 1000},      {"midazolam", "mg", 100},       {"fentanyl citrate", "mcg", 2500},
    {"hydromorphone", "mg", 20},   {"ketamine", "mg", 500},        {"cisatracurium", "mg", 200},
    {"vecuronium", "mg", 100},     {"furosemide", "mg", 100},      {"bumetanide", "mg", 2.5},
    {"octreotide", "mcg", 500},    {"pantoprazole", "mg", 80},     {"amiodarone", "mg", 900},
    {"diltiazem", "mg", 125},      {"sodium bicarbonate", "meq", 150}, {"potassium phosphate", "mmol", 30},
};

const char* const kInfusionCarriers[] = {"infusion", "drip", "premix", "continuous"};

std::vector<LatentConcept> build_lexicon() {
  std::vector<LatentConcept> out;
  auto push = [&](ConceptCategory cat, std::string desc, std::string unit, double mean, double sd) {
    LatentConcept c;
    c.concept_id = static_cast<int>(out.size());
    c.category = cat;
    c.description = std::move(desc);
    c.unit = std::move(unit);
    c.value_mean = mean;
    c.value_sd = sd;
    out.push_back(std::move(c));
  };
  int a = 0;
  for (const auto& d : kDrugs) {
    for (int k = 0; k < 4; ++k) {
      const int form = (a + 3 * k) % 10;
      push(ConceptCategory::Drug, std::string(d.name) + " " + kDrugForms[form], d.unit, d.dose, 0.0);
    }
    ++a;
  }
  a = 0;
  for (const auto& l : kLabs) {
    for (int k = 0; k < 3; ++k)
      push(ConceptCategory::Lab, std::string(l.name) + " " + kLabSpecimens[(a + k) % 4], l.unit, l.mean, l.sd);
    ++a;
  }
  for (const auto& inf : kInfusions)
    for (const char* carrier : kInfusionCarriers)
      push(ConceptCategory::Infusion, std::string(inf.name) + " " + carrier, inf.unit, inf.amount, 0.0);
  return out;
}

std::string drug_route(const LatentConcept& c) {
  for (int f = 0; f < 10; ++f) {
    const std::string suffix = std::string(" ") + kDrugForms[f];
    if (c.description.size() > suffix.size() &&
        c.description.compare(c.description.size() - suffix.size(), suffix.size(), suffix) == 0)
      return kDrugFormRoute[f];
  }
  return "iv";
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string decimal_1(double v) { return fmt("%.1f", v); }
std::string decimal_2(double v) { return fmt("%.2f", v); }

std::string render_name(const std::vector<std::string>& words, NameStyle style, SchemaStyle schema) {
  if (style == NameStyle::Native) style = schema == SchemaStyle::MimicLike ? NameStyle::UpperSnake : NameStyle::Native;
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    std::string w = words[i];
    switch (style) {
      case NameStyle::Native:
        out += w;
        break;
      case NameStyle::UpperSnake:
        for (char& ch : w) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        out += (i ? "_" : "") + w;
        break;
      case NameStyle::LowerSnake:
        out += (i ? "_" : "") + w;
        break;
      case NameStyle::Camel:
        if (i) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
        out += w;
        break;
      case NameStyle::Kebab:
        out += (i ? "-" : "") + w;
        break;
    }
  }
  return out;
}

/// "YYYY-MM-DD HH:MM:SS" for minutes since 1970-01-01.
std::string format_datetime(std::int64_t minutes) {
  std::int64_t days = minutes / 1440;
  const std::int64_t rem = minutes % 1440;
  days += 719468;
  const std::int64_t era = days / 146097;
  const std::int64_t doe = days - era * 146097;
  const std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  std::int64_t y = yoe + era * 400;
  const std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const std::int64_t mp = (5 * doy + 2) / 153;
  const std::int64_t d = doy - (153 * mp + 2) / 5 + 1;
  const std::int64_t m = mp < 10 ? mp + 3 : mp - 9;
  if (m <= 2) ++y;
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04lld-%02lld-%02lld %02lld:%02lld:00", static_cast<long long>(y),
                static_cast<long long>(m), static_cast<long long>(d), static_cast<long long>(rem / 60),
                static_cast<long long>(rem % 60));
  return buf;
}

double logistic_sample(Rng& rng) {
  double u;
  do {
    u = rng.uniform();
  } while (u <= 0.0);
  return std::log(u / (1.0 - u));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Weights {
  std::vector<double> mortality;
  std::vector<double> los;
};

Weights concept_weights(std::uint64_t risk_model_seed, std::size_t n) {
  Rng rng(risk_model_seed ^ 0x7157c0deULL);
  Weights w{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    const double m_pos = rng.normal(1.4, 0.4), m_neg = rng.normal(1.0, 0.3);
    if (u < 0.15)
      w.mortality[i] = m_pos;
    else if (u < 0.25)
      w.mortality[i] = -m_neg;
    const double v = rng.uniform(), l = rng.normal(0.0, 0.5);
    if (v < 0.25) w.los[i] = l;
  }
  return w;
}

/// Reference pool order shared by all hospitals.
std::vector<int> reference_order() {
  std::vector<int> order(lexicon().size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(kLexiconSeed);
  rng.shuffle(order);
  return order;
}

struct Event {
  int minute = 0;
  int concept_id = 0;
  double value = 0.0;
  double value2 = 0.0;
};

struct Stay {
  long long stay_id = 0;
  long long subject_id = 0;
  long long hadm_id = 0;
  std::int64_t intime = 0;
  std::int64_t duration = 0;
  int age = 0;
  bool expired = false;
  std::string location;
  bool eligible = false;
  double mortality_score = 0.0;
  int mortality_label = 0;
  std::vector<Event> events;
  std::vector<int> dx_classes;
};

struct Hospital {
  std::vector<int> pool;
  std::set<int> shared;
  std::vector<int> drivers;
  std::vector<Stay> stays;
  double threshold = 0.0;
  double oracle = 0.0;
  double prevalence = 0.0;
};

Hospital simulate(const HospitalConfig& cfg, std::uint64_t seed, const Weights& w) {
  const auto& lex = lexicon();
  Hospital h;
  const auto order = reference_order();
  const int pool_size = cfg.concept_pool_size;
  const int n_shared = static_cast<int>(std::lround(cfg.vocab_overlap * pool_size));
  for (int i = 0; i < n_shared; ++i) {
    h.pool.push_back(order[static_cast<std::size_t>(i)]);
    h.shared.insert(order[static_cast<std::size_t>(i)]);
  }
  Rng rng(seed);
  std::vector<int> rest(order.begin() + pool_size, order.end());
  rng.shuffle(rest);
  for (int i = 0; i < pool_size - n_shared; ++i) h.pool.push_back(rest[static_cast<std::size_t>(i)]);
  for (int i = 0; i < cfg.mortality_drivers; ++i) h.drivers.push_back(order[static_cast<std::size_t>(i)]);
  const std::set<int> driver_set(h.drivers.begin(), h.drivers.end());

  auto mortality_weight = [&](int c) {
    if (cfg.mortality_drivers > 0) return driver_set.count(c) ? kDriverWeight : 0.0;
    return w.mortality[static_cast<std::size_t>(c)];
  };

  const long long stay_base = cfg.schema_style == SchemaStyle::MimicLike ? 200000 : 140000;
  const std::int64_t epoch_2150 = 65379LL * 1440;
  long long next_subject = 10000, next_hadm = 100000;
  std::vector<double> noisy;
  while (static_cast<int>(h.stays.size()) < cfg.n_stays) {
    const long long subject = next_subject++, hadm = next_hadm++;
    const std::int64_t admit = cfg.schema_style == SchemaStyle::MimicLike
                                   ? epoch_2150 + static_cast<std::int64_t>(rng.below(3650)) * 1440 +
                                         static_cast<std::int64_t>(rng.below(1440))
                                   : static_cast<std::int64_t>(rng.below(600));
    const int age = rng.uniform() < 0.008 ? 1 + static_cast<int>(rng.below(17)) : 18 + static_cast<int>(rng.below(73));
    const bool short_stay = rng.uniform() < 0.008;
    const double readmit_draw = rng.uniform();
    int stays_in_admission = 1;
    std::int64_t intime = admit;
    for (int k = 0; k < stays_in_admission && static_cast<int>(h.stays.size()) < cfg.n_stays; ++k) {
      Stay s;
      s.stay_id = stay_base + static_cast<long long>(h.stays.size()) * 7 + 3;
      s.subject_id = subject;
      s.hadm_id = hadm;
      s.intime = intime;
      s.age = age;
      const bool is_short = k == 0 && short_stay;
      const std::int64_t horizon = is_short ? 300 + static_cast<std::int64_t>(rng.below(1100)) : kEventHorizonMinutes;

      const int n_active = 4 + rng.poisson(6.0);
      std::vector<int> candidates = h.pool;
      std::vector<int> active;
      for (int i = 0; i < n_active && !candidates.empty(); ++i) {
        const auto j = static_cast<std::size_t>(rng.below(candidates.size()));
        active.push_back(candidates[j]);
        candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(j));
      }
      double t = rng.exponential(cfg.event_rate / 60.0);
      while (t < static_cast<double>(horizon)) {
        Event e;
        e.minute = static_cast<int>(t);
        e.concept_id = active[static_cast<std::size_t>(rng.below(active.size()))];
        const auto& c = lex[static_cast<std::size_t>(e.concept_id)];
        switch (c.category) {
          case ConceptCategory::Drug: {
            static const double kScale[] = {0.5, 1.0, 1.0, 2.0};
            e.value = c.value_mean * kScale[rng.below(4)];
            break;
          }
          case ConceptCategory::Lab:
            e.value = c.value_mean + c.value_sd * rng.normal();
            break;
          case ConceptCategory::Infusion:
            e.value = c.value_mean * rng.uniform(0.5, 1.5);
            e.value2 = rng.uniform(0.5, 20.0);
            break;
        }
        s.events.push_back(e);
        t += rng.exponential(cfg.event_rate / 60.0);
      }

      std::set<int> present;
      for (const auto& e : s.events)
        if (e.minute <= kObservationMinutes) present.insert(e.concept_id);
      double los_score = 0.0;
      for (int c : present) {
        s.mortality_score += mortality_weight(c);
        los_score += w.los[static_cast<std::size_t>(c)];
      }
      const double noise = cfg.label_noise > 0 ? cfg.label_noise * logistic_sample(rng) : 0.0;
      s.eligible = k == 0 && !is_short && age >= 18 && present.size() >= 5;
      if (s.eligible) noisy.push_back(s.mortality_score + noise);
      s.duration = is_short ? horizon + static_cast<std::int64_t>(rng.below(40))
                            : 1441 + static_cast<std::int64_t>(std::exp(rng.normal(7.9 + 0.6 * los_score, 0.7)));
      s.dx_classes.push_back(present.empty() ? 0 : *present.begin() % kDxClassCount);
      const int extra = static_cast<int>(rng.below(3));
      for (int i = 0; i < extra; ++i) s.dx_classes.push_back(static_cast<int>(rng.below(kDxClassCount)));
      h.stays.push_back(std::move(s));
      if (k == 0 && readmit_draw < sigmoid(-4.0 + 0.4 * h.stays.back().mortality_score)) stays_in_admission = 2;
      intime = h.stays.back().intime + h.stays.back().duration + 600 + static_cast<std::int64_t>(rng.below(2880));
    }
  }

  // Threshold on the noisy risk so the eligible cohort hits the target prevalence.
  if (cfg.mortality_drivers > 0) {
    h.threshold = 0.5 * kDriverWeight;
  } else {
    std::vector<double> sorted = noisy;
    std::sort(sorted.begin(), sorted.end());
    const auto idx = static_cast<std::size_t>(
        std::clamp<double>(std::floor((1.0 - cfg.mortality_prevalence) * static_cast<double>(sorted.size())), 0.0,
                           static_cast<double>(sorted.size() - 1)));
    h.threshold = sorted.empty() ? 0.0 : sorted[idx];
  }

  static const char* const kLocations[] = {"home", "skilled nursing facility", "rehab", "other hospital", "hospice"};
  std::size_t n_eligible = 0;
  std::vector<double> scores;
  std::vector<int> labels;
  for (auto& s : h.stays) {
    if (s.eligible) {
      s.mortality_label = noisy[n_eligible++] > h.threshold ? 1 : 0;
      scores.push_back(s.mortality_score);
      labels.push_back(s.mortality_label);
    }
    if (s.mortality_label) {
      s.expired = true;
      s.location = "death";
      s.duration = 1500 + static_cast<std::int64_t>(rng.below(2090));
      continue;
    }
    const double r = s.mortality_score;
    const double weights[] = {std::exp(1.0 - 0.5 * r), std::exp(0.2 + 0.3 * r), 1.0, std::exp(-0.5 + 0.2 * r),
                              std::exp(-1.5 + 0.6 * r)};
    double total = 0.0;
    for (double x : weights) total += x;
    double u = rng.uniform() * total;
    int k = 0;
    while (k < 4 && u >= weights[k]) u -= weights[k++];
    s.location = kLocations[k];
  }
  h.prevalence = labels.empty() ? 0.0
                                : static_cast<double>(std::count(labels.begin(), labels.end(), 1)) /
                                      static_cast<double>(labels.size());
  try {
    h.oracle = exp::auprc(scores, labels);
  } catch (const MetricUndefined&) {
    h.oracle = h.prevalence;
  }
  return h;
}

struct CodeBook {
  int ns;
  std::string drug(int c) const { return std::to_string((ns + 1) * 100000000LL + 1011 + c * 37LL); }
  std::string lab(int c) const { return std::to_string((ns + 1) * 1000000LL + 50000 + c); }
  std::string infusion(int c) const { return std::to_string((ns + 1) * 1000000LL + 220000 + c); }
  std::string dx(int cls, int j) const { return std::to_string((ns + 1) * 10000LL + cls * 100 + j); }
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << text;
}

struct TableColumns {
  std::string file;
  std::string event_type;
  std::vector<std::string> header;
  std::string stay_col, time_col, code_col;
  std::vector<std::string> excluded;
  std::vector<std::string> selected;
  bool coded = false;
};

void write_hospital(const HospitalConfig& cfg, const Hospital& h, const std::filesystem::path& dir) {
  const auto& lex = lexicon();
  const bool mimic = cfg.schema_style == SchemaStyle::MimicLike;
  const bool coded = cfg.code_style == CodeStyle::CodedWithDescriptions;
  const CodeBook codes{cfg.code_namespace};
  auto name = [&](std::vector<std::string> words) { return render_name(words, cfg.name_style, cfg.schema_style); };
  auto time_text = [&](std::int64_t minutes) { return mimic ? format_datetime(minutes) : std::to_string(minutes); };

  ingest::DatasetManifest m;
  m.dataset_name = cfg.name;

  // Stays table.
  ingest::CsvTable stays;
  auto& st = m.stays_table;
  if (mimic) {
    stays.header = {"ICUSTAY_ID", "SUBJECT_ID", "HADM_ID", "INTIME", "OUTTIME", "AGE", "DISCHARGE_STATUS",
                    "DISCHARGE_LOCATION"};
    st = {"ICUSTAYS.csv", "ICUSTAY_ID", "SUBJECT_ID", "HADM_ID", "INTIME", "OUTTIME", "AGE", "DISCHARGE_STATUS",
          "DISCHARGE_LOCATION"};
  } else {
    stays.header = {"patientunitstayid",  "uniquepid", "patienthealthsystemstayid", "unitadmitoffset",
                    "unitdischargeoffset", "age",      "unitdischargestatus",       "unitdischargelocation"};
    st = {"patient.csv",         "patientunitstayid", "uniquepid",           "patienthealthsystemstayid",
          "unitadmitoffset",     "unitdischargeoffset", "age", "unitdischargestatus", "unitdischargelocation"};
  }
  for (const auto& s : h.stays) {
    std::string status = s.expired ? "expired" : "alive";
    if (!mimic) status[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(status[0])));
    stays.rows.push_back({std::to_string(s.stay_id), std::to_string(s.subject_id), std::to_string(s.hadm_id),
                          time_text(s.intime), time_text(s.intime + s.duration), std::to_string(s.age), status,
                          s.location});
  }
  ingest::write_csv(dir / st.file_path, stays);

  // Event tables: drug, lab, infusion in that order.
  TableColumns drug, lab, inf;
  if (mimic) {
    drug.file = "PRESCRIPTIONS.csv";
    drug.event_type = "prescriptions";
    drug.coded = coded;
    drug.header = {name({"row", "id"}), name({"subject", "id"}), name({"hadm", "id"}), name({"icustay", "id"}),
                   name({"startdate"}), coded ? name({"ndc"}) : name({"drug"}), name({"dose", "val", "rx"}),
                   name({"dose", "unit", "rx"}), name({"route"})};
    lab.file = "LABEVENTS.csv";
    lab.event_type = "labevents";
    lab.coded = coded;
    lab.header = {name({"row", "id"}), name({"subject", "id"}), name({"hadm", "id"}), name({"icustay", "id"}),
                  name({"charttime"}), coded ? name({"itemid"}) : name({"label"}), name({"valuenum"}),
                  name({"valueuom"}), name({"flag"})};
    inf.file = "INPUTEVENTS.csv";
    inf.event_type = "inputevents";
    inf.coded = coded;
    inf.header = {name({"row", "id"}), name({"subject", "id"}), name({"icustay", "id"}), name({"starttime"}),
                  coded ? name({"itemid"}) : name({"label"}), name({"amount"}), name({"amountuom"}), name({"rate"}),
                  name({"rateuom"})};
    for (auto* t : {&drug, &lab, &inf}) t->excluded = {t->header[0]};
  } else {
    drug.file = "medication.csv";
    drug.event_type = "medication";
    drug.coded = false;
    drug.header = {name({"medicationid"}), name({"patientunitstayid"}), name({"drugstartoffset"}),
                   name({"drugname"}), name({"dosage"}), name({"doseunit"}), name({"routeadmin"})};
    lab.file = "lab.csv";
    lab.event_type = "lab";
    lab.coded = coded;
    lab.header = {name({"labid"}), name({"patientunitstayid"}), name({"labresultoffset"}),
                  coded ? name({"labcode"}) : name({"labname"}), name({"labresult"}), name({"labmeasurename"}),
                  name({"labflag"})};
    inf.file = "infusiondrug.csv";
    inf.event_type = "infusiondrug";
    inf.coded = coded;
    inf.header = {name({"infusiondrugid"}), name({"patientunitstayid"}), name({"infusionoffset"}),
                  coded ? name({"infusioncode"}) : name({"drugname"}), name({"drugamount"}), name({"amountunit"}),
                  name({"drugrate"}), name({"rateunit"})};
  }
  const std::size_t stay_pos = mimic ? 3 : 1, time_pos = mimic ? 4 : 2;
  for (auto* t : {&drug, &lab}) {
    t->stay_col = t->header[stay_pos];
    t->time_col = t->header[time_pos];
    t->code_col = t->header[time_pos + 1];
  }
  inf.stay_col = inf.header[mimic ? 2 : 1];
  inf.time_col = inf.header[mimic ? 3 : 2];
  inf.code_col = inf.header[mimic ? 4 : 3];
  drug.selected = {drug.code_col, drug.header[time_pos + 2]};
  lab.selected = {lab.code_col, lab.header[time_pos + 2]};
  inf.selected = {inf.code_col, inf.header[mimic ? 5 : 4]};

  ingest::CsvTable drug_rows, lab_rows, inf_rows;
  drug_rows.header = drug.header;
  lab_rows.header = lab.header;
  inf_rows.header = inf.header;
  long long row_id = 1;
  std::set<int> used_drugs, used_labs, used_infusions;
  for (const auto& s : h.stays) {
    for (const auto& e : s.events) {
      const auto& c = lex[static_cast<std::size_t>(e.concept_id)];
      const std::string rid = std::to_string(row_id++);
      const std::string stay = std::to_string(s.stay_id);
      const std::string when = time_text(s.intime + e.minute);
      switch (c.category) {
        case ConceptCategory::Drug: {
          used_drugs.insert(c.concept_id);
          const std::string code = drug.coded ? codes.drug(c.concept_id) : c.description;
          if (mimic)
            drug_rows.rows.push_back({rid, std::to_string(s.subject_id), std::to_string(s.hadm_id), stay, when, code,
                                      decimal_1(e.value), c.unit, drug_route(c)});
          else
            drug_rows.rows.push_back({rid, stay, when, code, decimal_1(e.value), c.unit, drug_route(c)});
          break;
        }
        case ConceptCategory::Lab: {
          used_labs.insert(c.concept_id);
          const std::string code = lab.coded ? codes.lab(c.concept_id) : c.description;
          const std::string value = c.value_sd < 0.5 ? decimal_2(e.value) : decimal_1(e.value);
          const std::string flag = std::abs(e.value - c.value_mean) > 1.5 * c.value_sd ? "abnormal" : "";
          if (mimic)
            lab_rows.rows.push_back({rid, std::to_string(s.subject_id), std::to_string(s.hadm_id), stay, when, code,
                                     value, c.unit, flag});
          else
            lab_rows.rows.push_back({rid, stay, when, code, value, c.unit, flag});
          break;
        }
        case ConceptCategory::Infusion: {
          used_infusions.insert(c.concept_id);
          const std::string code = inf.coded ? codes.infusion(c.concept_id) : c.description;
          if (mimic)
            inf_rows.rows.push_back({rid, std::to_string(s.subject_id), stay, when, code, decimal_1(e.value), c.unit,
                                     decimal_2(e.value2), "ml/hr"});
          else
            inf_rows.rows.push_back({rid, stay, when, code, decimal_1(e.value), c.unit, decimal_2(e.value2), "ml/hr"});
          break;
        }
      }
    }
  }
  ingest::write_csv(dir / drug.file, drug_rows);
  ingest::write_csv(dir / lab.file, lab_rows);
  ingest::write_csv(dir / inf.file, inf_rows);

  auto add_map = [&](const TableColumns& t, const std::string& file, const std::string& code_header,
                     const std::string& text_header, const std::set<int>& used, auto code_of) {
    if (!t.coded) return;
    ingest::CsvTable map;
    map.header = {code_header, text_header};
    for (int c : used) map.rows.push_back({code_of(c), lex[static_cast<std::size_t>(c)].description});
    ingest::write_csv(dir / file, map);
    m.description_maps.push_back({file, code_header, text_header, {t.event_type + ":" + t.code_col}});
  };
  if (mimic) {
    add_map(drug, "D_NDC.csv", "NDC", "DRUG", used_drugs, [&](int c) { return codes.drug(c); });
    add_map(lab, "D_LABITEMS.csv", "ITEMID", "LABEL", used_labs, [&](int c) { return codes.lab(c); });
    add_map(inf, "D_ITEMS.csv", "ITEMID", "LABEL", used_infusions, [&](int c) { return codes.infusion(c); });
  } else {
    add_map(lab, "lab_codes.csv", "labcode", "labname", used_labs, [&](int c) { return codes.lab(c); });
    add_map(inf, "infusion_codes.csv", "infusioncode", "drugname", used_infusions,
            [&](int c) { return codes.infusion(c); });
  }
  for (const auto* t : {&drug, &lab, &inf})
    m.event_tables.push_back({t->file, t->event_type, t->stay_col, t->time_col, t->excluded, t->code_col});

  // Diagnoses and the 18-class map.
  ingest::CsvTable dx, dx_map;
  const std::string dx_hadm = mimic ? "HADM_ID" : "patienthealthsystemstayid";
  const std::string dx_code = mimic ? "ICD9_CODE" : "icd9code";
  dx.header = {dx_hadm, dx_code};
  std::set<long long> admissions;
  for (const auto& s : h.stays) {
    if (!admissions.insert(s.hadm_id).second) continue;
    std::set<int> seen;
    for (int cls : s.dx_classes)
      if (seen.insert(cls).second)
        dx.rows.push_back({std::to_string(s.hadm_id), codes.dx(cls, static_cast<int>(s.stay_id % kDxCodesPerClass))});
  }
  ingest::write_csv(dir / (mimic ? "DIAGNOSES_ICD.csv" : "diagnosis.csv"), dx);
  m.diagnoses_table = ingest::DiagnosesTableSpec{mimic ? "DIAGNOSES_ICD.csv" : "diagnosis.csv", dx_hadm, dx_code};
  dx_map.header = {"code", "class_index"};
  for (int cls = 0; cls < kDxClassCount; ++cls)
    for (int j = 0; j < kDxCodesPerClass; ++j) dx_map.rows.push_back({codes.dx(cls, j), std::to_string(cls)});
  ingest::write_csv(dir / "dx_class_map.csv", dx_map);

  write_text(dir / "manifest.json", ingest::manifest_to_json(m).dump(2) + "\n");

  json selection = json::object();
  for (const auto* t : {&drug, &lab, &inf}) selection[t->event_type] = t->selected;
  write_text(dir / "feature_selection.json", selection.dump(2) + "\n");
}

json ground_truth_json(const HospitalConfig& cfg, const Hospital& h, const Weights& w, int attempts) {
  const auto& lex = lexicon();
  json j;
  j["config"] = cfg.to_json();
  j["attempts"] = attempts;
  j["oracle_auprc"] = h.oracle;
  j["prevalence"] = h.prevalence;
  j["signal_check_passed"] = h.oracle - h.prevalence >= 0.2;
  j["threshold"] = h.threshold;
  const std::set<int> drivers(h.drivers.begin(), h.drivers.end());
  j["concepts"] = json::array();
  for (int c : h.pool) {
    const auto& lc = lex[static_cast<std::size_t>(c)];
    const double mw = cfg.mortality_drivers > 0 ? (drivers.count(c) ? kDriverWeight : 0.0)
                                                : w.mortality[static_cast<std::size_t>(c)];
    j["concepts"].push_back({{"concept_id", c},
                             {"category", to_string(lc.category)},
                             {"description", lc.description},
                             {"weights", {{"Mort", mw}, {"LOS", w.los[static_cast<std::size_t>(c)]}}},
                             {"shared", h.shared.count(c) > 0},
                             {"driver", drivers.count(c) > 0}});
  }
  j["drivers"] = json::array();
  for (int c : h.drivers) j["drivers"].push_back(lex[static_cast<std::size_t>(c)].description);
  j["stays"] = json::array();
  for (const auto& s : h.stays)
    j["stays"].push_back({{"stay_id", std::to_string(s.stay_id)},
                          {"eligible", s.eligible},
                          {"mortality_score", s.mortality_score},
                          {"mortality_label", s.mortality_label}});
  return j;
}

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, E>> options, const char* what) {
  for (const auto& [text, value] : options)
    if (s == text) return value;
  throw ConfigError(std::string("unknown ") + what + " '" + s + "'");
}

}  // namespace

std::string to_string(SchemaStyle s) { return s == SchemaStyle::MimicLike ? "mimic_like" : "eicu_like"; }
std::string to_string(CodeStyle s) {
  return s == CodeStyle::CodedWithDescriptions ? "coded_with_descriptions" : "raw_text";
}
std::string to_string(NameStyle s) {
  switch (s) {
    case NameStyle::Native: return "native";
    case NameStyle::UpperSnake: return "upper_snake";
    case NameStyle::LowerSnake: return "lower_snake";
    case NameStyle::Camel: return "camel";
    case NameStyle::Kebab: return "kebab";
  }
  return "native";
}
std::string to_string(ConceptCategory c) {
  switch (c) {
    case ConceptCategory::Drug: return "drug";
    case ConceptCategory::Lab: return "lab";
    case ConceptCategory::Infusion: return "infusion";
  }
  return "drug";
}

SchemaStyle schema_style_from_string(const std::string& s) {
  return parse_enum<SchemaStyle>(s, {{"mimic_like", SchemaStyle::MimicLike}, {"eicu_like", SchemaStyle::EicuLike}},
                                 "schema_style");
}
CodeStyle code_style_from_string(const std::string& s) {
  return parse_enum<CodeStyle>(
      s, {{"coded_with_descriptions", CodeStyle::CodedWithDescriptions}, {"raw_text", CodeStyle::RawText}},
      "code_style");
}
NameStyle name_style_from_string(const std::string& s) {
  return parse_enum<NameStyle>(s,
                               {{"native", NameStyle::Native},
                                {"upper_snake", NameStyle::UpperSnake},
                                {"lower_snake", NameStyle::LowerSnake},
                                {"camel", NameStyle::Camel},
                                {"kebab", NameStyle::Kebab}},
                               "name_style");
}

void HospitalConfig::validate() const {
  if (name.empty()) throw ConfigError("hospital name must be non-empty");
  if (n_stays < 50) throw ConfigError("n_stays must be at least 50, got " + std::to_string(n_stays));
  if (!(vocab_overlap >= 0.0 && vocab_overlap <= 1.0)) throw ConfigError("vocab_overlap must lie in [0, 1]");
  if (!(event_rate > 0.0) || !std::isfinite(event_rate)) throw ConfigError("event_rate must be positive");
  if (code_namespace < 0 || code_namespace > 8) throw ConfigError("code_namespace must lie in [0, 8]");
  if (concept_pool_size < 10 || concept_pool_size > static_cast<int>(lexicon().size()) / 2)
    throw ConfigError("concept_pool_size must lie in [10, " + std::to_string(lexicon().size() / 2) + "]");
  if (!(label_noise >= 0.0) || !std::isfinite(label_noise)) throw ConfigError("label_noise must be >= 0");
  if (!(mortality_prevalence > 0.0 && mortality_prevalence < 1.0))
    throw ConfigError("mortality_prevalence must lie in (0, 1)");
  if (mortality_drivers < 0) throw ConfigError("mortality_drivers must be >= 0");
  if (mortality_drivers > static_cast<int>(std::lround(vocab_overlap * concept_pool_size)))
    throw ConfigError("mortality_drivers exceeds the number of shared concepts");
}

json HospitalConfig::to_json() const {
  return {{"name", name},
          {"n_stays", n_stays},
          {"schema_style", to_string(schema_style)},
          {"code_style", to_string(code_style)},
          {"name_style", to_string(name_style)},
          {"vocab_overlap", vocab_overlap},
          {"event_rate", event_rate},
          {"risk_model_seed", risk_model_seed},
          {"seed", seed},
          {"code_namespace", code_namespace},
          {"concept_pool_size", concept_pool_size},
          {"label_noise", label_noise},
          {"mortality_prevalence", mortality_prevalence},
          {"mortality_drivers", mortality_drivers}};
}

HospitalConfig HospitalConfig::from_json(const json& j) {
  static const std::set<std::string> kKeys = {"name",           "n_stays",           "schema_style",
                                              "code_style",     "name_style",        "vocab_overlap",
                                              "event_rate",     "risk_model_seed",   "seed",
                                              "code_namespace", "concept_pool_size", "label_noise",
                                              "mortality_prevalence", "mortality_drivers"};
  if (!j.is_object()) throw ConfigError("hospital config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!kKeys.count(k)) throw ConfigError("unknown hospital config key '" + k + "'");
  HospitalConfig c;
  try {
    c.name = j.value("name", c.name);
    c.n_stays = j.value("n_stays", c.n_stays);
    if (j.contains("schema_style")) c.schema_style = schema_style_from_string(j.at("schema_style"));
    if (j.contains("code_style")) c.code_style = code_style_from_string(j.at("code_style"));
    if (j.contains("name_style")) c.name_style = name_style_from_string(j.at("name_style"));
    c.vocab_overlap = j.value("vocab_overlap", c.vocab_overlap);
    c.event_rate = j.value("event_rate", c.event_rate);
    c.risk_model_seed = j.value("risk_model_seed", c.risk_model_seed);
    c.seed = j.value("seed", c.seed);
    c.code_namespace = j.value("code_namespace", c.code_namespace);
    c.concept_pool_size = j.value("concept_pool_size", c.concept_pool_size);
    c.label_noise = j.value("label_noise", c.label_noise);
    c.mortality_prevalence = j.value("mortality_prevalence", c.mortality_prevalence);
    c.mortality_drivers = j.value("mortality_drivers", c.mortality_drivers);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad hospital config: ") + e.what());
  }
  c.validate();
  return c;
}

const std::vector<LatentConcept>& lexicon() {
  static const std::vector<LatentConcept> kLexicon = build_lexicon();
  return kLexicon;
}

GenerationResult generate_hospital(const HospitalConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  const Weights w = concept_weights(cfg.risk_model_seed, lexicon().size());
  Hospital h;
  int attempt = 0;
  for (; attempt < kMaxAttempts; ++attempt) {
    const std::uint64_t seed = splitmix64(cfg.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(attempt) +
                                          static_cast<std::uint64_t>(cfg.code_namespace) * 0x51ed27ULL);
    h = simulate(cfg, seed, w);
    if (h.oracle - h.prevalence >= 0.2) break;
  }
  const int attempts = std::min(attempt + 1, kMaxAttempts);
  std::filesystem::create_directories(out_dir);
  write_hospital(cfg, h, out_dir);
  write_text(out_dir / "ground_truth.json", ground_truth_json(cfg, h, w, attempts).dump(2) + "\n");

  GenerationResult r;
  r.directory = out_dir;
  r.manifest = out_dir / "manifest.json";
  r.ground_truth = out_dir / "ground_truth.json";
  r.feature_selection = out_dir / "feature_selection.json";
  r.dx_class_map = out_dir / "dx_class_map.csv";
  r.oracle_auprc = h.oracle;
  r.prevalence = h.prevalence;
  r.attempts = attempts;
  return r;
}

double verify_separability(const std::filesystem::path& dataset_dir, bool shuffle_labels, std::uint64_t shuffle_seed) {
  const auto path = std::filesystem::is_directory(dataset_dir) ? dataset_dir / "ground_truth.json" : dataset_dir;
  std::ifstream f(path);
  if (!f) throw ConfigError("ground truth not found: " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw FormatError("bad ground truth JSON: " + std::string(e.what()));
  }
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& s : j.at("stays")) {
    if (!s.at("eligible").get<bool>()) continue;
    scores.push_back(s.at("mortality_score").get<double>());
    labels.push_back(s.at("mortality_label").get<int>());
  }
  if (shuffle_labels) {
    Rng rng(shuffle_seed);
    rng.shuffle(labels);
  }
  return exp::auprc(scores, labels);
}

}  // namespace ehrtext::synth
