#include "ehrtext/experiments/split.hpp"

#include <cmath>

#include "ehrtext/core/errors.hpp"
#include "ehrtext/core/random.hpp"

namespace ehrtext::exp {

const char* to_string(Part p) {
  switch (p) {
    case Part::Train: return "train";
    case Part::Valid: return "valid";
    case Part::Test: return "test";
  }
  return "?";
}

std::vector<std::size_t> SplitAssignment::indices(const std::vector<PatientSample>& samples, Part part) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto it = assignment.find(samples[i].stay_id);
    if (it != assignment.end() && it->second == part) out.push_back(i);
  }
  return out;
}

nlohmann::json SplitAssignment::to_json() const {
  nlohmann::json a = nlohmann::json::object();
  for (const auto& [id, p] : assignment) a[id] = to_string(p);
  return {{"seed", seed}, {"assignment", a}, {"warnings", warnings}};
}

std::vector<int> strata(const std::vector<PatientSample>& samples, Task task) {
  std::vector<int> keys;
  keys.reserve(samples.size());
  const auto label_of = [&](const PatientSample& s) -> const Label& {
    auto it = s.labels.find(task);
    if (it == s.labels.end()) throw LabelError("stay " + s.stay_id + " has no " + to_string(task) + " label");
    return it->second;
  };
  if (task_kind(task) != TaskKind::Multilabel) {
    for (const auto& s : samples) keys.push_back(label_of(s).as_int());
    return keys;
  }
  std::vector<std::size_t> freq(kDxClasses, 0);
  for (const auto& s : samples) {
    const auto& hot = label_of(s).as_multi_hot();
    for (std::size_t c = 0; c < hot.size() && c < freq.size(); ++c) freq[c] += hot[c];
  }
  for (const auto& s : samples) {
    const auto& hot = label_of(s).as_multi_hot();
    int best = -1;
    for (std::size_t c = 0; c < hot.size() && c < freq.size(); ++c)
      if (hot[c] && (best < 0 || freq[c] > freq[static_cast<std::size_t>(best)])) best = static_cast<int>(c);
    keys.push_back(best);
  }
  return keys;
}

SplitAssignment stratified_split(const std::vector<PatientSample>& samples, Task task, std::uint64_t seed) {
  const auto keys = strata(samples, task);
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) groups[keys[i]].push_back(i);
  SplitAssignment out;
  out.seed = seed;
  Rng rng(seed);
  for (auto& [key, members] : groups) {
    if (members.size() < 10)
      out.warnings.push_back("stratum " + std::to_string(key) + " has " + std::to_string(members.size()) +
                             " samples; 8:1:1 ratio is best-effort");
    rng.shuffle(members);
    const auto n = members.size();
    const auto n_valid = static_cast<std::size_t>(std::lround(0.1 * static_cast<double>(n)));
    const auto n_test = std::min(n - n_valid, static_cast<std::size_t>(std::lround(0.1 * static_cast<double>(n))));
    for (std::size_t k = 0; k < n; ++k) {
      const Part p = k < n_valid ? Part::Valid : (k < n_valid + n_test ? Part::Test : Part::Train);
      if (!out.assignment.emplace(samples[members[k]].stay_id, p).second)
        throw ConfigError("duplicate stay id " + samples[members[k]].stay_id);
    }
  }
  return out;
}

}  // namespace ehrtext::exp
