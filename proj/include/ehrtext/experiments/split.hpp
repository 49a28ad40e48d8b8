#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ehrtext/core/types.hpp"

namespace ehrtext::exp {

enum class Part : std::uint8_t { Train, Valid, Test };

const char* to_string(Part p);

struct SplitAssignment {
  std::map<std::string, Part> assignment;  // stay id -> part
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;

  /// Indices into `samples` assigned to `part`, in sample order.
  std::vector<std::size_t> indices(const std::vector<PatientSample>& samples, Part part) const;
  nlohmann::json to_json() const;
  bool operator==(const SplitAssignment&) const = default;
};

/// Stratum of a sample: the label for binary and multiclass tasks; for Dx
/// the most frequent (dataset-wide) of the sample's positive classes, or -1.
std::vector<int> strata(const std::vector<PatientSample>& samples, Task task);

/// Within each stratum (ascending key): seeded shuffle, then
/// valid = round(n / 10), test = round(n / 10), train = the rest.
SplitAssignment stratified_split(const std::vector<PatientSample>& samples, Task task, std::uint64_t seed);

}  // namespace ehrtext::exp
