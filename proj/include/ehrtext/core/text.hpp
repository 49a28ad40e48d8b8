#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ehrtext {

/// Unicode NFC followed by whitespace collapse (runs of whitespace become one
/// ASCII space, leading/trailing whitespace removed). Invalid UTF-8 is passed
/// through byte-wise and only whitespace-collapsed.
std::string normalize_text(std::string_view s);

/// Schema-identifier normalization used for feature names and event types:
/// camelCase boundaries and `_`, `-`, `.` become word breaks, ASCII is
/// lowercased, then whitespace is collapsed. "DOSE_VAL_RX", "Dose-Val-Rx"
/// and "dose val rx" all normalize to "dose val rx".
std::string normalize_identifier(std::string_view s);

std::string to_lower_ascii(std::string_view s);

/// Optional sign, digits, optional fraction, optional exponent.
bool is_decimal_literal(std::string_view s);

/// Optional sign followed by digits only ("7" yes, "7.0" no).
bool is_integer_literal(std::string_view s);

/// Rewrites a decimal literal (possibly in scientific notation) into plain
/// positional form: "1.5e3" -> "1500", "-2.5E-2" -> "-0.025". Returns nullopt
/// for non-decimals.
std::optional<std::string> to_plain_decimal(std::string_view s);

std::vector<std::string> split(std::string_view s, char delim);

}  // namespace ehrtext
