#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "ehrtext/core/types.hpp"

namespace ehrtext::exp {

/// Average precision: positives are visited in descending score order and
/// each tied block contributes (positives in block) x (precision at the end
/// of the block). Throws MetricUndefined without both classes.
double auprc(const std::vector<double>& scores, const std::vector<int>& labels);

struct MacroResult {
  double value = 0.0;
  int classes_used = 0;
  int classes_skipped = 0;
};

/// One-vs-rest average precision per column of `scores`, averaged over the
/// columns where it is defined. Throws MetricUndefined when none is.
MacroResult macro_auprc(const std::vector<std::vector<double>>& scores,
                        const std::vector<std::vector<std::uint8_t>>& labels);

/// Task-aware AUPRC over model probabilities and labels.
MacroResult task_auprc(TaskKind kind, const std::vector<std::vector<double>>& probs,
                       const std::vector<const Label*>& labels);

/// Fraction of positives (binary), mean per-class frequency otherwise.
double prevalence(TaskKind kind, const std::vector<const Label*>& labels, int num_outputs);

struct MetricReport {
  std::vector<double> per_seed;
  double mean = 0.0;
  /// Sample standard deviation / sqrt(#seeds); 0 with a single seed.
  double se = 0.0;

  static MetricReport from_values(std::vector<double> values);
  nlohmann::json to_json() const;
};

}  // namespace ehrtext::exp
