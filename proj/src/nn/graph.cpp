#include "ehrtext/nn/graph.hpp"

#include <cmath>

#include "ehrtext/core/errors.hpp"

namespace ehrtext::nn {

template <typename T>
ParameterStore<T>& ParameterStore<T>::operator=(const ParameterStore& other) {
  if (this == &other) return *this;
  params_.clear();
  index_ = other.index_;
  for (const auto& p : other.params_) params_.push_back(std::make_unique<Parameter<T>>(*p));
  return *this;
}

template <typename T>
Parameter<T>& ParameterStore<T>::emplace(const std::string& name, Mat<T> value, bool input_table) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name " + name);
  auto p = std::make_unique<Parameter<T>>();
  p->name = name;
  p->grad = Mat<T>::Zero(value.rows(), value.cols());
  p->value = std::move(value);
  p->input_table = input_table;
  index_.emplace(name, params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

template <typename T>
Parameter<T>& ParameterStore<T>::add(const std::string& name, int rows, int cols, Init init, Rng& rng, double scale,
                                     bool input_table) {
  if (rows <= 0 || cols <= 0) throw ShapeError("parameter " + name + " needs positive dimensions");
  Mat<T> v(rows, cols);
  switch (init) {
    case Init::Zeros: v.setZero(); break;
    case Init::Ones: v.setOnes(); break;
    case Init::Normal:
      for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = static_cast<T>(rng.normal(0.0, scale));
      break;
  }
  return emplace(name, std::move(v), input_table);
}

template <typename T>
Parameter<T>& ParameterStore<T>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return *params_[it->second];
}

template <typename T>
const Parameter<T>& ParameterStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return *params_[it->second];
}

template <typename T>
std::vector<Parameter<T>*> ParameterStore<T>::all() {
  std::vector<Parameter<T>*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> ParameterStore<T>::all() const {
  std::vector<const Parameter<T>*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

template <typename T>
std::size_t ParameterStore<T>::count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->size();
  return n;
}

template <typename T>
std::size_t ParameterStore<T>::count_excluding_input_tables() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (!p->input_table) n += p->size();
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

namespace {

template <typename T>
T softplus(T x) {
  return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename T>
T sigmoid(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

void check_offsets(const std::vector<int>& offsets, Eigen::Index rows, const char* op) {
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != rows)
    throw ShapeError(std::string(op) + ": offsets must start at 0 and end at the row count");
  for (std::size_t i = 1; i < offsets.size(); ++i)
    if (offsets[i] < offsets[i - 1]) throw ShapeError(std::string(op) + ": offsets must be non-decreasing");
}

}  // namespace

template <typename T>
Var Graph<T>::push(Mat<T> value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Mat<T>& Graph<T>::grad_ref(int id) {
  auto& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) n.grad = Mat<T>::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

template <typename T>
void Graph<T>::check(int id, const char* op) {
  if (!options_.checked) return;
  if (!nodes_[static_cast<std::size_t>(id)].value.allFinite())
    throw NumericsError(std::string("non-finite output from ") + op);
}

template <typename T>
const Mat<T>& Graph<T>::value(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) throw StateError("unknown graph node");
  return nodes_[static_cast<std::size_t>(v.id)].value;
}

template <typename T>
const Mat<T>& Graph<T>::grad(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) throw StateError("unknown graph node");
  if (!backward_done_) throw StateError("gradient requested before backward");
  return nodes_[static_cast<std::size_t>(v.id)].grad;
}

template <typename T>
Var Graph<T>::input(Mat<T> value) {
  return push(std::move(value));
}

template <typename T>
Var Graph<T>::embedding(Parameter<T>& table, const std::vector<int>& ids) {
  const auto rows = static_cast<Eigen::Index>(ids.size());
  Mat<T> out(rows, table.value.cols());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const int id = ids[static_cast<std::size_t>(r)];
    if (id < -1 || id >= table.value.rows())
      throw ShapeError("embedding id " + std::to_string(id) + " outside table " + table.name);
    if (id < 0)
      out.row(r).setZero();
    else
      out.row(r) = table.value.row(id);
  }
  Var v = push(std::move(out));
  Parameter<T>* p = &table;
  const int self = v.id;
  nodes_[static_cast<std::size_t>(self)].backward = [this, self, p, ids] {
    const auto& g = nodes_[static_cast<std::size_t>(self)].grad;
    for (std::size_t r = 0; r < ids.size(); ++r)
      if (ids[r] >= 0) p->grad.row(ids[r]) += g.row(static_cast<Eigen::Index>(r));
  };
  check(self, "embedding");
  return v;
}

template <typename T>
Var Graph<T>::add(Var a, Var b) {
  const auto& va = value(a);
  const auto& vb = value(b);
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) throw ShapeError("add: shape mismatch");
  Var v = push(va + vb);
  const int self = v.id;
  nodes_[static_cast<std::size_t>(self)].backward = [this, self, a, b] {
    const auto& g = nodes_[static_cast<std::size_t>(self)].grad;
    grad_ref(a.id) += g;
    grad_ref(b.id) += g;
  };
  check(self, "add");
  return v;
}

template <typename T>
Var Graph<T>::linear(Var x, Parameter<T>& W, Parameter<T>& b) {
  const auto& vx = value(x);
  if (vx.cols() != W.value.rows() || b.value.rows() != 1 || b.value.cols() != W.value.cols())
    throw ShapeError("linear: " + W.name + " expects " + std::to_string(W.value.rows()) + " input columns, got " +
                     std::to_string(vx.cols()));
  Mat<T> out = vx * W.value;
  out.rowwise() += b.value.row(0);
  Var v = push(std::move(out));
  const int self = v.id;
  Parameter<T>* pW = &W;
  Parameter<T>* pb = &b;
  nodes_[static_cast<std::size_t>(self)].backward = [this, self, x, pW, pb] {
    const auto& g = nodes_[static_cast<std::size_t>(self)].grad;
    const auto& vx = nodes_[static_cast<std::size_t>(x.id)].value;
    pW->grad.noalias() += vx.transpose() * g;
    pb->grad.row(0) += g.colwise().sum();
    grad_ref(x.id).noalias() += g * pW->value.transpose();
  };
  check(self, "linear");
  return v;
}

template <typename T>
Var Graph<T>::layer_norm(Var x, Parameter<T>& gain, Parameter<T>& bias, T eps) {
  const auto& vx = value(x);
  const auto cols = vx.cols();
  if (gain.value.rows() != 1 || gain.value.cols() != cols || bias.value.cols() != cols)
    throw ShapeError("layer_norm: " + gain.name + " width mismatch");
  Mat<T> xhat(vx.rows(), cols);
  Mat<T> inv(vx.rows(), 1);
  for (Eigen::Index r = 0; r < vx.rows(); ++r) {
    const T mean = vx.row(r).mean();
    const T var = (vx.row(r).array() - mean).square().mean();
    inv(r, 0) = T(1) / std::sqrt(var + eps);
    xhat.row(r) = (vx.row(r).array() - mean) * inv(r, 0);
  }
  Mat<T> out = (xhat.array().rowwise() * gain.value.row(0).array()).rowwise() + bias.value.row(0).array();
  Var v = push(std::move(out));
  const int self = v.id;
  auto& node = nodes_[static_cast<std::size_t>(self)];
  node.saved = {std::move(xhat), std::move(inv)};
  Parameter<T>* pg = &gain;
  Parameter<T>* pb = &bias;
  node.backward = [this, self, x, pg, pb] {
    auto& n = nodes_[static_cast<std::size_t>(self)];
    const auto& g = n.grad;
    const auto& xh = n.saved[0];
    const auto& iv = n.saved[1];
    pg->grad.row(0) += (g.array() * xh.array()).colwise().sum().matrix();
    pb->grad.row(0) += g.colwise().sum();
    const T c = static_cast<T>(g.cols());
    Mat<T> dxhat = g.array().rowwise() * pg->value.row(0).array();
    auto& gx = grad_ref(x.id);
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const T s1 = dxhat.row(r).sum();
      const T s2 = dxhat.row(r).dot(xh.row(r));
      gx.row(r).array() += iv(r, 0) / c * (c * dxhat.row(r).array() - s1 - xh.row(r).array() * s2);
    }
  };
  check(self, "layer_norm");
  return v;
}

template <typename T>
Var Graph<T>::gelu(Var x) {
  const auto& vx = value(x);
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  Mat<T> out = vx.unaryExpr([inv_sqrt2](T u) { return T(0.5) * u * (T(1) + std::erf(u * inv_sqrt2)); });
  Var v = push(std::move(out));
  const int self = v.id;
  nodes_[static_cast<std::size_t>(self)].backward = [this, self, x, inv_sqrt2] {
    const auto& g = nodes_[static_cast<std::size_t>(self)].grad;
    const auto& vx = nodes_[static_cast<std::size_t>(x.id)].value;
    const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * T(M_PI));
    Mat<T> d = vx.unaryExpr([inv_sqrt2, inv_sqrt_2pi](T u) {
      return T(0.5) * (T(1) + std::erf(u * inv_sqrt2)) + u * inv_sqrt_2pi * std::exp(T(-0.5) * u * u);
    });
    grad_ref(x.id).array() += g.array() * d.array();
  };
  check(self, "gelu");
  return v;
}

template <typename T>
Var Graph<T>::dropout(Var x, double rate) {
  if (!options_.training || rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout rate must be below 1");
  const auto& vx = value(x);
  const std::uint64_t key = splitmix64(options_.dropout_seed ^ (0x5851f42d4c957f2dULL * (nodes_.size() + 1)));
  Mat<T> mask(vx.rows(), vx.cols());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < mask.size(); ++i)
    mask.data()[i] = counter_uniform(key, static_cast<std::uint64_t>(i)) >= rate ? keep_scale : T(0);
  Var v = push(vx.cwiseProduct(mask));
  const int self = v.id;
  auto& node = nodes_[static_cast<std::size_t>(self)];
  node.saved = {std::move(mask)};
  node.backward = [this, self, x] {
    auto& n = nodes_[static_cast<std::size_t>(self)];
    grad_ref(x.id) += n.grad.cwiseProduct(n.saved[0]);
  };
  return v;
}

template <typename T>
Var Graph<T>::attention(Var qkv, const std::vector<int>& offsets, int heads) {
  const auto& in = value(qkv);
  if (heads <= 0 || in.cols() % (3 * heads) != 0) throw ShapeError("attention: width not divisible by 3 * heads");
  check_offsets(offsets, in.rows(), "attention");
  const Eigen::Index d = in.cols() / 3;
  const Eigen::Index dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  Mat<T> out = Mat<T>::Zero(in.rows(), d);
  std::vector<Mat<T>> probs;
  probs.reserve((offsets.size() - 1) * static_cast<std::size_t>(heads));
  for (std::size_t b = 0; b + 1 < offsets.size(); ++b) {
    const Eigen::Index s = offsets[b];
    const Eigen::Index n = offsets[b + 1] - offsets[b];
    for (int h = 0; h < heads; ++h) {
      if (n == 0) {
        probs.emplace_back();
        continue;
      }
      const auto Q = in.block(s, h * dh, n, dh);
      const auto K = in.block(s, d + h * dh, n, dh);
      const auto V = in.block(s, 2 * d + h * dh, n, dh);
      Mat<T> A = (Q * K.transpose()) * scale;
      for (Eigen::Index r = 0; r < n; ++r) {
        const T m = A.row(r).maxCoeff();
        A.row(r) = (A.row(r).array() - m).exp();
        A.row(r) /= A.row(r).sum();
      }
      out.block(s, h * dh, n, dh).noalias() = A * V;
      probs.push_back(std::move(A));
    }
  }
  Var v = push(std::move(out));
  const int self = v.id;
  auto& node = nodes_[static_cast<std::size_t>(self)];
  node.saved = std::move(probs);
  node.offsets = offsets;
  node.heads = heads;
  node.backward = [this, self, qkv, d, dh, scale] {
    auto& n = nodes_[static_cast<std::size_t>(self)];
    const auto& g = n.grad;
    const auto& in = nodes_[static_cast<std::size_t>(qkv.id)].value;
    auto& gin = grad_ref(qkv.id);
    for (std::size_t b = 0; b + 1 < n.offsets.size(); ++b) {
      const Eigen::Index s = n.offsets[b];
      const Eigen::Index len = n.offsets[b + 1] - n.offsets[b];
      if (len == 0) continue;
      for (int h = 0; h < n.heads; ++h) {
        const auto& A = n.saved[b * static_cast<std::size_t>(n.heads) + static_cast<std::size_t>(h)];
        const auto Q = in.block(s, h * dh, len, dh);
        const auto K = in.block(s, d + h * dh, len, dh);
        const auto V = in.block(s, 2 * d + h * dh, len, dh);
        const auto dO = g.block(s, h * dh, len, dh);
        Mat<T> dA = dO * V.transpose();
        gin.block(s, 2 * d + h * dh, len, dh).noalias() += A.transpose() * dO;
        Mat<T> dS(len, len);
        for (Eigen::Index r = 0; r < len; ++r) {
          const T dot = dA.row(r).dot(A.row(r));
          dS.row(r) = A.row(r).array() * (dA.row(r).array() - dot);
        }
        gin.block(s, h * dh, len, dh).noalias() += (dS * K) * scale;
        gin.block(s, d + h * dh, len, dh).noalias() += (dS.transpose() * Q) * scale;
      }
    }
  };
  check(self, "attention");
  return v;
}

template <typename T>
Mat<T> Graph<T>::attention_weights(Var attn, int block, int head) const {
  const auto& n = nodes_.at(static_cast<std::size_t>(attn.id));
  if (n.heads == 0) throw StateError("node is not an attention node");
  return n.saved.at(static_cast<std::size_t>(block) * static_cast<std::size_t>(n.heads) +
                    static_cast<std::size_t>(head));
}

template <typename T>
Var Graph<T>::gather_rows(Var x, const std::vector<int>& rows) {
  const auto& vx = value(x);
  Mat<T> out(static_cast<Eigen::Index>(rows.size()), vx.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= vx.rows()) throw ShapeError("gather_rows: row out of range");
    out.row(static_cast<Eigen::Index>(i)) = vx.row(rows[i]);
  }
  Var v = push(std::move(out));
  const int self = v.id;
  nodes_[static_cast<std::size_t>(self)].backward = [this, self, x, rows] {
    const auto& g = nodes_[static_cast<std::size_t>(self)].grad;
    auto& gx = grad_ref(x.id);
    for (std::size_t i = 0; i < rows.size(); ++i) gx.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
  };
  return v;
}

template <typename T>
Var Graph<T>::segment_sum(Var x, const std::vector<int>& offsets) {
  const auto& vx = value(x);
  check_offsets(offsets, vx.rows(), "segment_sum");
  const auto segs = static_cast<Eigen::Index>(offsets.size() - 1);
  Mat<T> out = Mat<T>::Zero(segs, vx.cols());
  for (Eigen::Index s = 0; s < segs; ++s)
    for (int r = offsets[static_cast<std::size_t>(s)]; r < offsets[static_cast<std::size_t>(s) + 1]; ++r)
      out.row(s) += vx.row(r);
  Var v = push(std::move(out));
  const int self = v.id;
  nodes_[static_cast<std::size_t>(self)].backward = [this, self, x, offsets] {
    const auto& g = nodes_[static_cast<std::size_t>(self)].grad;
    auto& gx = grad_ref(x.id);
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s)
      for (int r = offsets[s]; r < offsets[s + 1]; ++r) gx.row(r) += g.row(static_cast<Eigen::Index>(s));
  };
  return v;
}

template <typename T>
Var Graph<T>::segment_mean(Var x, const std::vector<int>& offsets) {
  const auto& vx = value(x);
  check_offsets(offsets, vx.rows(), "segment_mean");
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s)
    if (offsets[s + 1] == offsets[s]) throw ShapeError("segment_mean: empty segment");
  const auto segs = static_cast<Eigen::Index>(offsets.size() - 1);
  Mat<T> out = Mat<T>::Zero(segs, vx.cols());
  for (Eigen::Index s = 0; s < segs; ++s) {
    const int lo = offsets[static_cast<std::size_t>(s)], hi = offsets[static_cast<std::size_t>(s) + 1];
    for (int r = lo; r < hi; ++r) out.row(s) += vx.row(r);
    out.row(s) /= static_cast<T>(hi - lo);
  }
  Var v = push(std::move(out));
  const int self = v.id;
  nodes_[static_cast<std::size_t>(self)].backward = [this, self, x, offsets] {
    const auto& g = nodes_[static_cast<std::size_t>(self)].grad;
    auto& gx = grad_ref(x.id);
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
      const T w = T(1) / static_cast<T>(offsets[s + 1] - offsets[s]);
      for (int r = offsets[s]; r < offsets[s + 1]; ++r) gx.row(r) += g.row(static_cast<Eigen::Index>(s)) * w;
    }
  };
  return v;
}

template <typename T>
Var Graph<T>::bce_loss(Var logits, const std::vector<int>& labels, double pos_weight) {
  const auto& z = value(logits);
  if (z.cols() != 1 || z.rows() != static_cast<Eigen::Index>(labels.size()) || labels.empty())
    throw ShapeError("bce_loss: logits must be (n, 1) with n labels");
  for (int y : labels)
    if (y != 0 && y != 1) throw LabelError("binary label must be 0 or 1, got " + std::to_string(y));
  const T w = static_cast<T>(pos_weight);
  const T n = static_cast<T>(labels.size());
  T total = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const T zi = z(static_cast<Eigen::Index>(i), 0);
    total += labels[i] ? w * softplus(-zi) : softplus(zi);
  }
  Mat<T> out(1, 1);
  out(0, 0) = total / n;
  Var v = push(std::move(out));
  const int self = v.id;
  nodes_[static_cast<std::size_t>(self)].backward = [this, self, logits, labels, w, n] {
    const T g = nodes_[static_cast<std::size_t>(self)].grad(0, 0);
    const auto& z = nodes_[static_cast<std::size_t>(logits.id)].value;
    auto& gz = grad_ref(logits.id);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      const T s = sigmoid(z(r, 0));
      gz(r, 0) += g * (labels[i] ? w * (s - T(1)) : s) / n;
    }
  };
  check(self, "bce_loss");
  return v;
}

template <typename T>
Var Graph<T>::softmax_ce_loss(Var logits, const std::vector<int>& labels) {
  const auto& z = value(logits);
  if (z.rows() != static_cast<Eigen::Index>(labels.size()) || labels.empty())
    throw ShapeError("softmax_ce_loss: logits rows must match labels");
  for (int y : labels)
    if (y < 0 || y >= z.cols())
      throw LabelError("class label " + std::to_string(y) + " outside [0, " + std::to_string(z.cols()) + ")");
  Mat<T> probs(z.rows(), z.cols());
  T total = 0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const T m = z.row(r).maxCoeff();
    probs.row(r) = (z.row(r).array() - m).exp();
    const T sum = probs.row(r).sum();
    probs.row(r) /= sum;
    total += m + std::log(sum) - z(r, labels[static_cast<std::size_t>(r)]);
  }
  const T n = static_cast<T>(labels.size());
  Mat<T> out(1, 1);
  out(0, 0) = total / n;
  Var v = push(std::move(out));
  const int self = v.id;
  auto& node = nodes_[static_cast<std::size_t>(self)];
  node.saved = {std::move(probs)};
  node.backward = [this, self, logits, labels, n] {
    auto& nd = nodes_[static_cast<std::size_t>(self)];
    const T g = nd.grad(0, 0);
    Mat<T> d = nd.saved[0];
    for (std::size_t i = 0; i < labels.size(); ++i) d(static_cast<Eigen::Index>(i), labels[i]) -= T(1);
    grad_ref(logits.id) += d * (g / n);
  };
  check(self, "softmax_ce_loss");
  return v;
}

template <typename T>
Var Graph<T>::multilabel_bce_loss(Var logits, const std::vector<std::vector<std::uint8_t>>& labels) {
  const auto& z = value(logits);
  if (z.rows() != static_cast<Eigen::Index>(labels.size()) || labels.empty())
    throw ShapeError("multilabel_bce_loss: logits rows must match labels");
  Mat<T> y(z.rows(), z.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (static_cast<Eigen::Index>(labels[i].size()) != z.cols())
      throw LabelError("multi-hot label width " + std::to_string(labels[i].size()) + " != " +
                       std::to_string(z.cols()));
    for (std::size_t c = 0; c < labels[i].size(); ++c) {
      if (labels[i][c] > 1) throw LabelError("multi-hot entries must be 0 or 1");
      y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = labels[i][c];
    }
  }
  T total = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i)
    total += y.data()[i] > 0 ? softplus(-z.data()[i]) : softplus(z.data()[i]);
  const T n = static_cast<T>(z.size());
  Mat<T> out(1, 1);
  out(0, 0) = total / n;
  Var v = push(std::move(out));
  const int self = v.id;
  auto& node = nodes_[static_cast<std::size_t>(self)];
  node.saved = {std::move(y)};
  node.backward = [this, self, logits, n] {
    auto& nd = nodes_[static_cast<std::size_t>(self)];
    const T g = nd.grad(0, 0);
    const auto& z = nodes_[static_cast<std::size_t>(logits.id)].value;
    Mat<T> d = z.unaryExpr([](T u) { return sigmoid(u); }) - nd.saved[0];
    grad_ref(logits.id) += d * (g / n);
  };
  check(self, "multilabel_bce_loss");
  return v;
}

template <typename T>
Var Graph<T>::weighted_sum(Var x, const Mat<T>& weights) {
  const auto& vx = value(x);
  if (vx.rows() != weights.rows() || vx.cols() != weights.cols()) throw ShapeError("weighted_sum: shape mismatch");
  Mat<T> out(1, 1);
  out(0, 0) = vx.cwiseProduct(weights).sum();
  Var v = push(std::move(out));
  const int self = v.id;
  nodes_[static_cast<std::size_t>(self)].backward = [this, self, x, weights] {
    grad_ref(x.id) += weights * nodes_[static_cast<std::size_t>(self)].grad(0, 0);
  };
  return v;
}

template <typename T>
void Graph<T>::backward(Var loss) {
  if (nodes_.empty() || loss.id < 0 || loss.id >= static_cast<int>(nodes_.size()))
    throw StateError("backward called before a forward pass");
  auto& top = nodes_[static_cast<std::size_t>(loss.id)];
  if (top.value.rows() != 1 || top.value.cols() != 1) throw StateError("backward needs a scalar loss");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  top.grad = Mat<T>::Ones(1, 1);
  for (int i = loss.id; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0 || !n.backward) continue;
    n.backward();
  }
  backward_done_ = true;
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template class Graph<float>;
template class Graph<double>;

}  // namespace ehrtext::nn
