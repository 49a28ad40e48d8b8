#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ehrtext/core/random.hpp"

namespace ehrtext::nn {

/// Dense row-major matrix; every tensor in the engine is 2-D.
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct Parameter {
  std::string name;
  Mat<T> value;
  Mat<T> grad;
  /// Vocabulary lookup table (token, value, name or type embeddings).
  bool input_table = false;

  std::size_t size() const { return static_cast<std::size_t>(value.size()); }
};

enum class Init { Zeros, Ones, Normal };

/// Named parameters in declaration order.
template <typename T>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore& other) { *this = other; }
  ParameterStore& operator=(const ParameterStore& other);
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  /// Throws ConfigError on a duplicate name.
  Parameter<T>& add(const std::string& name, int rows, int cols, Init init, Rng& rng, double scale = 0.02,
                    bool input_table = false);
  Parameter<T>& get(const std::string& name);
  const Parameter<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::vector<Parameter<T>*> all();
  std::vector<const Parameter<T>*> all() const;
  std::size_t count() const;
  std::size_t count_excluding_input_tables() const;

  void zero_grad();

  /// Same names, shapes and values in another precision.
  template <typename U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& p : params_) {
      auto& q = out.emplace(p->name, p->value.template cast<U>(), p->input_table);
      (void)q;
    }
    return out;
  }
  Parameter<T>& emplace(const std::string& name, Mat<T> value, bool input_table);

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace ehrtext::nn
