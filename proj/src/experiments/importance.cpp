#include "ehrtext/experiments/importance.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <variant>

#include "ehrtext/core/errors.hpp"

namespace ehrtext::exp {

namespace {

std::string main_feature_text(const MedicalEvent& e, const ingest::Dataset& ds) {
  auto it = ds.main_features.find(e.event_type.text());
  if (it != ds.main_features.end()) {
    for (const auto& f : e.features) {
      if (f.name.text() != it->second) continue;
      if (f.value.kind == ValueKind::Code)
        if (auto d = ds.descriptions.lookup(e.event_type, f.name, f.value.raw)) return *d;
      return f.value.raw;
    }
  }
  return e.event_type.text();
}

}  // namespace

std::vector<ImportanceEntry> feature_importance(const TrainedModel& model, const ingest::Dataset& ds,
                                                const std::vector<std::size_t>& indices, Task task,
                                                const ser::FeatureSelection* selection, int batch) {
  if (!models::is_hierarchical(model.spec.family) || !models::uses_subword_tokens(model.spec.family))
    throw ConfigError("feature importance needs a hierarchical sub-word model");
  if (batch < 1) throw ConfigError("batch must be positive");
  Featurizer fz(model, ds, selection);
  auto predictor = model.predictor();
  std::map<std::string, ImportanceEntry> tally;
  for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch)) {
    const auto end = std::min(indices.size(), start + static_cast<std::size_t>(batch));
    std::vector<models::ModelInput> inputs;
    std::vector<PatientSample> views;
    std::vector<const Label*> labels;
    for (std::size_t k = start; k < end; ++k) {
      const auto& s = ds.samples.at(indices[k]);
      auto it = s.labels.find(task);
      if (it == s.labels.end()) throw ConfigError("stay " + s.stay_id + " lacks the task label");
      views.push_back(fz.view(s));
      inputs.push_back(fz(s));
      labels.push_back(&it->second);
    }
    std::vector<const models::ModelInput*> ptrs;
    for (const auto& in : inputs) ptrs.push_back(&in);
    nn::Graph<float> g;
    auto fw = predictor.forward(g, ptrs);
    auto loss = predictor.loss(g, fw.logits, labels);
    g.backward(loss);
    const auto& grad = g.grad(fw.f_input);
    std::size_t event = 0;
    for (std::size_t b = 0; b < views.size(); ++b) {
      const auto& h = std::get<ser::HierarchicalInput>(inputs[b]);
      const auto& events = views[b].events;
      const std::size_t first = events.size() - h.event_sequences.size();
      for (std::size_t e = 0; e < h.event_sequences.size(); ++e, ++event) {
        double score = 0.0;
        if (grad.size() != 0)
          for (int r = fw.event_offsets[event]; r < fw.event_offsets[event + 1]; ++r)
            score += static_cast<double>(grad.row(r).norm());
        auto& entry = tally[main_feature_text(events[first + e], ds)];
        entry.score += score * static_cast<double>(labels.size());
        ++entry.events;
      }
    }
  }
  std::vector<ImportanceEntry> out;
  for (auto& [key, entry] : tally) {
    entry.feature = key;
    out.push_back(entry);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  return out;
}

std::size_t top_k_overlap(const std::vector<ImportanceEntry>& a, const std::vector<ImportanceEntry>& b, std::size_t k) {
  std::set<std::string> top;
  for (std::size_t i = 0; i < std::min(k, a.size()); ++i) top.insert(a[i].feature);
  std::size_t n = 0;
  for (std::size_t i = 0; i < std::min(k, b.size()); ++i) n += top.count(b[i].feature);
  return n;
}

nlohmann::json to_json(const std::vector<ImportanceEntry>& ranking, std::size_t top_k) {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < std::min(top_k, ranking.size()); ++i)
    arr.push_back({{"feature", ranking[i].feature}, {"score", ranking[i].score}, {"events", ranking[i].events}});
  return arr;
}

}  // namespace ehrtext::exp
