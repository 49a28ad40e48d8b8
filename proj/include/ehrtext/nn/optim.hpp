#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "ehrtext/nn/tensor.hpp"

namespace ehrtext::nn {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  /// Throw NumericsError on a non-finite gradient instead of stepping.
  bool checked = true;
};

/// Adam with decoupled weight decay; moments are keyed by parameter name.
template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = AdamWConfig()) : cfg_(cfg) {}

  void step(ParameterStore<T>& store);
  std::int64_t steps() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  struct Moments {
    Mat<T> m;
    Mat<T> v;
  };
  AdamWConfig cfg_;
  std::int64_t t_ = 0;
  std::map<std::string, Moments> state_;
};

/// Scales all gradients so their global L2 norm is at most `max_norm`;
/// returns the norm before scaling. No-op when max_norm <= 0.
template <typename T>
double clip_grad_norm(ParameterStore<T>& store, double max_norm);

}  // namespace ehrtext::nn
