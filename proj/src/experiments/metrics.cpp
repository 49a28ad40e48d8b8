#include "ehrtext/experiments/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ehrtext/core/errors.hpp"

namespace ehrtext::exp {

double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("auprc: scores and labels differ in length");
  std::size_t positives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw LabelError("auprc labels must be 0 or 1");
    positives += static_cast<std::size_t>(y);
  }
  if (positives == 0 || positives == labels.size()) throw MetricUndefined("auprc needs both classes");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t block_pos = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) block_pos += static_cast<std::size_t>(labels[order[j++]]);
    tp += block_pos;
    if (block_pos) sum += static_cast<double>(block_pos) * (static_cast<double>(tp) / static_cast<double>(j));
    i = j;
  }
  return sum / static_cast<double>(positives);
}

MacroResult macro_auprc(const std::vector<std::vector<double>>& scores,
                        const std::vector<std::vector<std::uint8_t>>& labels) {
  if (scores.size() != labels.size() || scores.empty()) throw ShapeError("macro_auprc: size mismatch");
  const std::size_t classes = scores[0].size();
  MacroResult r;
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<double> s(scores.size());
    std::vector<int> y(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      s[i] = scores[i].at(c);
      y[i] = labels[i].at(c);
    }
    try {
      total += auprc(s, y);
      ++r.classes_used;
    } catch (const MetricUndefined&) {
      ++r.classes_skipped;
    }
  }
  if (r.classes_used == 0) throw MetricUndefined("no class has both positives and negatives");
  r.value = total / r.classes_used;
  return r;
}

MacroResult task_auprc(TaskKind kind, const std::vector<std::vector<double>>& probs,
                       const std::vector<const Label*>& labels) {
  if (probs.size() != labels.size()) throw ShapeError("task_auprc: size mismatch");
  if (kind == TaskKind::Binary) {
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      s.push_back(probs[i].at(0));
      y.push_back(labels[i]->as_int());
    }
    return {auprc(s, y), 1, 0};
  }
  std::vector<std::vector<std::uint8_t>> hot;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (kind == TaskKind::Multilabel) {
      hot.push_back(labels[i]->as_multi_hot());
    } else {
      std::vector<std::uint8_t> row(probs[i].size(), 0);
      row.at(static_cast<std::size_t>(labels[i]->as_int())) = 1;
      hot.push_back(std::move(row));
    }
  }
  return macro_auprc(probs, hot);
}

double prevalence(TaskKind kind, const std::vector<const Label*>& labels, int num_outputs) {
  if (labels.empty()) return 0.0;
  double total = 0.0;
  for (const auto* l : labels) {
    if (kind == TaskKind::Binary) total += l->as_int();
    else if (kind == TaskKind::Multiclass) total += 1.0 / num_outputs;
    else total += std::accumulate(l->as_multi_hot().begin(), l->as_multi_hot().end(), 0.0) / num_outputs;
  }
  return total / static_cast<double>(labels.size());
}

MetricReport MetricReport::from_values(std::vector<double> values) {
  MetricReport r;
  r.per_seed = std::move(values);
  const auto n = static_cast<double>(r.per_seed.size());
  if (r.per_seed.empty()) return r;
  r.mean = std::accumulate(r.per_seed.begin(), r.per_seed.end(), 0.0) / n;
  if (r.per_seed.size() > 1) {
    double ss = 0.0;
    for (double v : r.per_seed) ss += (v - r.mean) * (v - r.mean);
    r.se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return r;
}

nlohmann::json MetricReport::to_json() const { return {{"per_seed", per_seed}, {"mean", mean}, {"se", se}}; }

}  // namespace ehrtext::exp
