#pragma once

#include <stdexcept>
#include <string>

namespace ehrtext {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid manifest; `field()` names the offending manifest field.
class ManifestError : public Error {
 public:
  ManifestError(std::string field, const std::string& detail)
      : Error("ManifestError(" + field + "): " + detail), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("ConfigError: " + what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("ShapeError: " + what) {}
};

class LabelError : public Error {
 public:
  explicit LabelError(const std::string& what) : Error("LabelError: " + what) {}
};

class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error("StateError: " + what) {}
};

class NumericsError : public Error {
 public:
  explicit NumericsError(const std::string& what) : Error("NumericsError: " + what) {}
};

class MetricUndefined : public Error {
 public:
  explicit MetricUndefined(const std::string& what) : Error("MetricUndefined: " + what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error("FormatError: " + what) {}
};

}  // namespace ehrtext
