#include "ehrtext/experiments/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ehrtext/core/errors.hpp"
#include "ehrtext/ingest/csv.hpp"

namespace ehrtext::exp {

namespace {

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::vector<Bar> bars_from_reports(const std::vector<nlohmann::json>& reports) {
  std::vector<Bar> bars;
  for (const auto& r : reports) {
    try {
      const auto& cfg = r.at("config");
      const std::string prefix = cfg.at("family").get<std::string>() + " " + cfg.at("mode").get<std::string>();
      for (const auto& [name, res] : r.at("results").items())
        bars.push_back({prefix + " " + name, res.at("mean").get<double>(), res.at("se").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("not an experiment report: ") + e.what());
    }
  }
  return bars;
}

std::string bar_chart_svg(const std::vector<Bar>& bars, const std::string& title, const std::string& y_label) {
  const double bar_w = 36, gap = 24, left = 70, top = 40, plot_h = 260, bottom = 150;
  const double width = left + gap + static_cast<double>(bars.size()) * (bar_w + gap) + 20;
  const double height = top + plot_h + bottom;
  double y_max = 0.0;
  for (const auto& b : bars) y_max = std::max(y_max, b.mean + b.se);
  y_max = y_max <= 0.0 ? 1.0 : std::min(1.0, std::ceil(y_max * 10.0) / 10.0);
  const auto y_of = [&](double v) { return top + plot_h * (1.0 - std::clamp(v / y_max, 0.0, 1.0)); };
  static const char* palette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"};

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << num(width / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape_xml(title)
      << "</text>\n";
  svg << "<text transform=\"translate(16," << num(top + plot_h / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape_xml(y_label) << "</text>\n";
  for (int t = 0; t <= 5; ++t) {
    const double v = y_max * t / 5.0;
    const double y = y_of(v);
    svg << "<line x1=\"" << num(left) << "\" x2=\"" << num(width - 20) << "\" y1=\"" << num(y) << "\" y2=\"" << num(y)
        << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << num(left - 6) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">" << num(v)
        << "</text>\n";
  }
  svg << "<line x1=\"" << num(left) << "\" x2=\"" << num(left) << "\" y1=\"" << num(top) << "\" y2=\""
      << num(top + plot_h) << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const auto& b = bars[i];
    const double x = left + gap + static_cast<double>(i) * (bar_w + gap);
    const double y = y_of(b.mean);
    svg << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(bar_w) << "\" height=\""
        << num(top + plot_h - y) << "\" fill=\"" << palette[i % 6] << "\"/>\n";
    const double cx = x + bar_w / 2;
    const double y_hi = y_of(b.mean + b.se), y_lo = y_of(b.mean - b.se);
    svg << "<line x1=\"" << num(cx) << "\" x2=\"" << num(cx) << "\" y1=\"" << num(y_hi) << "\" y2=\"" << num(y_lo)
        << "\" stroke=\"black\"/>\n";
    for (double yy : {y_hi, y_lo})
      svg << "<line x1=\"" << num(cx - 6) << "\" x2=\"" << num(cx + 6) << "\" y1=\"" << num(yy) << "\" y2=\""
          << num(yy) << "\" stroke=\"black\"/>\n";
    svg << "<text transform=\"translate(" << num(cx + 4) << "," << num(top + plot_h + 8)
        << ") rotate(60)\" text-anchor=\"start\">" << escape_xml(b.label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string bars_to_csv(const std::vector<Bar>& bars) {
  std::string out = "label,mean,se\n";
  for (const auto& b : bars) {
    char buf[64];
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f\n", b.mean, b.se);
    out += ingest::format_csv_field(b.label) + buf;
  }
  return out;
}

}  // namespace ehrtext::exp
