#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ehrtext/nn/tensor.hpp"

namespace ehrtext::nn {

/// Handle to a node of a Graph.
struct Var {
  int id = -1;
};

/// Tape-based reverse-mode differentiation over 2-D tensors. Ops that read a
/// Parameter accumulate its gradient into Parameter::grad during backward.
template <typename T>
class Graph {
 public:
  struct Options {
    bool training = false;
    std::uint64_t dropout_seed = 0;
    /// Throw NumericsError as soon as any op produces NaN or Inf.
    bool checked = false;
  };

  Graph() = default;
  explicit Graph(Options options) : options_(options) {}

  bool training() const { return options_.training; }

  /// Differentiable leaf (its gradient is readable after backward).
  Var input(Mat<T> value);

  /// Rows of `table` selected by `ids`; id -1 yields a zero row.
  Var embedding(Parameter<T>& table, const std::vector<int>& ids);
  Var add(Var a, Var b);
  /// x W + b with W of shape (in, out) and b of shape (1, out).
  Var linear(Var x, Parameter<T>& W, Parameter<T>& b);
  /// Per-row normalization with gain and bias of shape (1, cols).
  Var layer_norm(Var x, Parameter<T>& gain, Parameter<T>& bias, T eps = T(1e-5));
  /// Exact (erf-based) GELU.
  Var gelu(Var x);
  /// Inverted dropout with a counter-based mask; identity outside training.
  Var dropout(Var x, double rate);
  /// Multi-head self-attention over `qkv` = [Q | K | V] (rows, 3 d). Rows
  /// offsets[b] .. offsets[b+1] form block b; rows attend only within their block.
  Var attention(Var qkv, const std::vector<int>& offsets, int heads);
  Var gather_rows(Var x, const std::vector<int>& rows);
  /// Mean / sum of each row block given by `offsets` (size blocks + 1).
  Var segment_mean(Var x, const std::vector<int>& offsets);
  Var segment_sum(Var x, const std::vector<int>& offsets);

  /// Mean binary cross-entropy over logits (n, 1); labels in {0, 1}.
  Var bce_loss(Var logits, const std::vector<int>& labels, double pos_weight = 1.0);
  /// Mean softmax cross-entropy over logits (n, C); labels in [0, C).
  Var softmax_ce_loss(Var logits, const std::vector<int>& labels);
  /// Mean over all (n, C) entries of per-label binary cross-entropy.
  Var multilabel_bce_loss(Var logits, const std::vector<std::vector<std::uint8_t>>& labels);
  /// sum(x * weights); used to probe gradients.
  Var weighted_sum(Var x, const Mat<T>& weights);

  /// Reverse pass from a scalar node. Throws StateError when the node is not
  /// a 1x1 result of this graph.
  void backward(Var loss);

  const Mat<T>& value(Var v) const;
  /// Gradient of the last backward pass; zero-sized when the node was not reached.
  const Mat<T>& grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  /// Attention probabilities of an attention node for one block and head.
  Mat<T> attention_weights(Var attn, int block, int head) const;

 private:
  struct Node {
    Mat<T> value;
    Mat<T> grad;
    std::function<void()> backward;
    // attention probabilities, or layer-norm statistics, kept for backward
    std::vector<Mat<T>> saved;
    std::vector<int> offsets;
    int heads = 0;
  };

  Var push(Mat<T> value);
  Mat<T>& grad_ref(int id);
  void check(int id, const char* op);

  Options options_;
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

extern template class Graph<float>;
extern template class Graph<double>;
extern template class ParameterStore<float>;
extern template class ParameterStore<double>;

}  // namespace ehrtext::nn
