#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ehrtext/experiments/runner.hpp"

namespace ehrtext::exp {

struct ImportanceEntry {
  std::string feature;
  double score = 0.0;
  std::size_t events = 0;
};

/// Gradient importance for hierarchical text models: for every event, the
/// L2 norms of the loss gradient at each of its event-encoder input rows are
/// summed, then tallied under the event's main feature text (the event type
/// when the table declares none). Sorted by descending score.
std::vector<ImportanceEntry> feature_importance(const TrainedModel& model, const ingest::Dataset& ds,
                                                const std::vector<std::size_t>& indices, Task task,
                                                const ser::FeatureSelection* selection = nullptr, int batch = 32);

/// Number of features shared by the top-k of two rankings.
std::size_t top_k_overlap(const std::vector<ImportanceEntry>& a, const std::vector<ImportanceEntry>& b, std::size_t k);

nlohmann::json to_json(const std::vector<ImportanceEntry>& ranking, std::size_t top_k);

}  // namespace ehrtext::exp
