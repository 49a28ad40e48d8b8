#include "ehrtext/tokenize/description_map.hpp"

#include "ehrtext/core/errors.hpp"
#include "ehrtext/core/text.hpp"

namespace ehrtext::tok {

namespace {
constexpr char kSep = '\x1f';
std::string key(const std::string& t, const std::string& c, std::string_view code) {
  return t + kSep + c + kSep + std::string(code);
}
}  // namespace

void DescriptionMap::add(const EventType& table, const FeatureName& column, std::string_view code,
                         std::string_view description) {
  columns_.emplace(table.text(), column.text());
  const std::string norm_code = normalize_text(code);
  const std::string norm_desc = normalize_text(description);
  if (norm_code.empty() || norm_desc.empty()) return;
  entries_.emplace(key(table.text(), column.text(), norm_code), norm_desc);
}

std::optional<std::string> DescriptionMap::lookup(const EventType& table, const FeatureName& column,
                                                  std::string_view code) const {
  auto it = entries_.find(key(table.text(), column.text(), normalize_text(code)));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

bool DescriptionMap::covers(const EventType& table, const FeatureName& column) const {
  return columns_.count({table.text(), column.text()}) > 0;
}

nlohmann::json DescriptionMap::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& [t, c] : columns_) cols.push_back({t, c});
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [k, v] : entries_) {
    auto parts = split(k, kSep);
    entries.push_back({parts[0], parts[1], parts[2], v});
  }
  return {{"columns", cols}, {"entries", entries}};
}

DescriptionMap DescriptionMap::from_json(const nlohmann::json& j) {
  DescriptionMap m;
  try {
    for (const auto& c : j.at("columns")) m.columns_.emplace(c.at(0).get<std::string>(), c.at(1).get<std::string>());
    for (const auto& e : j.at("entries"))
      m.entries_.emplace(key(e.at(0).get<std::string>(), e.at(1).get<std::string>(), e.at(2).get<std::string>()),
                         e.at(3).get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("description map: ") + e.what());
  }
  return m;
}

}  // namespace ehrtext::tok
