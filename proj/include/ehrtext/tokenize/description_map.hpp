#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>

#include <json.hpp>

#include "ehrtext/core/types.hpp"

namespace ehrtext::tok {

/// (event type, feature name, code) -> human-readable description. Keys use
/// normalized identifiers; codes are whitespace-normalized.
class DescriptionMap {
 public:
  void add(const EventType& table, const FeatureName& column, std::string_view code, std::string_view description);
  std::optional<std::string> lookup(const EventType& table, const FeatureName& column, std::string_view code) const;
  bool covers(const EventType& table, const FeatureName& column) const;
  std::size_t size() const { return entries_.size(); }

  nlohmann::json to_json() const;
  static DescriptionMap from_json(const nlohmann::json& j);
  bool operator==(const DescriptionMap&) const = default;

 private:
  std::map<std::string, std::string> entries_;
  std::set<std::pair<std::string, std::string>> columns_;
};

}  // namespace ehrtext::tok
