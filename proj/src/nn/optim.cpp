#include "ehrtext/nn/optim.hpp"

#include <cmath>

#include "ehrtext/core/errors.hpp"

namespace ehrtext::nn {

template <typename T>
void AdamW<T>::step(ParameterStore<T>& store) {
  if (cfg_.checked)
    for (const auto* p : store.all())
      if (!p->grad.allFinite()) throw NumericsError("non-finite gradient in " + p->name);
  ++t_;
  const T b1 = static_cast<T>(cfg_.beta1);
  const T b2 = static_cast<T>(cfg_.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
  const T c2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
  const T lr = static_cast<T>(cfg_.lr);
  const T eps = static_cast<T>(cfg_.eps);
  const T decay = static_cast<T>(1.0 - cfg_.lr * cfg_.weight_decay);
  for (auto* p : store.all()) {
    auto [it, fresh] = state_.try_emplace(p->name);
    auto& s = it->second;
    if (fresh) {
      s.m = Mat<T>::Zero(p->value.rows(), p->value.cols());
      s.v = Mat<T>::Zero(p->value.rows(), p->value.cols());
    }
    if (s.m.rows() != p->value.rows() || s.m.cols() != p->value.cols())
      throw ShapeError("optimizer state shape mismatch for " + p->name);
    s.m = b1 * s.m + (T(1) - b1) * p->grad;
    s.v = b2 * s.v + (T(1) - b2) * p->grad.cwiseAbs2();
    if (cfg_.weight_decay != 0.0) p->value *= decay;
    p->value.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps);
  }
}

template <typename T>
double clip_grad_norm(ParameterStore<T>& store, double max_norm) {
  double sq = 0.0;
  for (const auto* p : store.all()) sq += static_cast<double>(p->grad.squaredNorm());
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto* p : store.all()) p->grad *= scale;
  }
  return norm;
}

template class AdamW<float>;
template class AdamW<double>;
template double clip_grad_norm<float>(ParameterStore<float>&, double);
template double clip_grad_norm<double>(ParameterStore<double>&, double);

}  // namespace ehrtext::nn
