#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace ehrtext::exp {

struct Bar {
  std::string label;
  double mean = 0.0;
  double se = 0.0;
};

/// One bar per (report, evaluated dataset): "<family> <mode> <dataset>".
std::vector<Bar> bars_from_reports(const std::vector<nlohmann::json>& reports);

/// Vertical bar chart with standard-error whiskers as a standalone SVG.
std::string bar_chart_svg(const std::vector<Bar>& bars, const std::string& title, const std::string& y_label = "AUPRC");

/// CSV rows "label,mean,se".
std::string bars_to_csv(const std::vector<Bar>& bars);

}  // namespace ehrtext::exp
