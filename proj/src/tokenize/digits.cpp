#include <algorithm>

#include "ehrtext/core/text.hpp"
#include "ehrtext/tokenize/tokenizer.hpp"

namespace ehrtext::tok {

std::vector<int> digit_place_tokens(std::string_view numeric) {
  auto plain = to_plain_decimal(normalize_text(numeric));
  if (!plain) return {};
  std::string_view s = *plain;
  std::vector<int> out;
  if (!s.empty() && s[0] == '-') {
    out.push_back(special::kMinus);
    s.remove_prefix(1);
  }
  const auto dot = s.find('.');
  std::string_view int_part = s.substr(0, dot);
  std::string_view frac_part = dot == std::string_view::npos ? std::string_view() : s.substr(dot + 1);
  while (int_part.size() > 1 && int_part[0] == '0') int_part.remove_prefix(1);
  if (int_part.empty()) int_part = "0";
  const int n = static_cast<int>(int_part.size());
  for (int i = 0; i < n; ++i) {
    const int place = std::min(n - 1 - i, special::kMaxPlace);
    out.push_back(special::digit_place(place, int_part[static_cast<std::size_t>(i)] - '0'));
  }
  for (std::size_t i = 0; i < frac_part.size(); ++i) {
    const int place = std::max(-static_cast<int>(i) - 1, special::kMinPlace);
    out.push_back(special::digit_place(place, frac_part[i] - '0'));
  }
  return out;
}

Textualized textualize(const Feature& feature, const DescriptionMap& descriptions, const EventType& table) {
  switch (feature.value.kind) {
    case ValueKind::Numeric: {
      auto ids = digit_place_tokens(feature.value.raw);
      if (!ids.empty()) return ids;
      return feature.value.raw;
    }
    case ValueKind::Code:
      if (auto d = descriptions.lookup(table, feature.name, feature.value.raw)) return *d;
      return feature.value.raw;
    case ValueKind::Text: break;
  }
  return feature.value.raw;
}

}  // namespace ehrtext::tok
