#include <doctest.h>

#include <cmath>
#include <functional>

#include "ehrtext/core/errors.hpp"
#include "ehrtext/nn/graph.hpp"
#include "support/support.hpp"

using namespace ehrtext;
using namespace ehrtext::nn;

namespace {

using G = Graph<double>;
using M = Mat<double>;
using Build = std::function<Var(G&, const std::vector<Var>&)>;

struct FdResult {
  double worst = 0.0;
  std::string where;
};

double evaluate(const std::vector<M>& inputs, const Build& f, G::Options opt) {
  G g(opt);
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(g.input(x));
  return g.value(f(g, vars))(0, 0);
}

/// Compares reverse-mode gradients of every input and parameter against
/// central differences; reports the worst norm-wise relative error.
FdResult finite_difference(std::vector<M> inputs, ParameterStore<double>& ps, const Build& f,
                           G::Options opt = {}) {
  G g(opt);
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(g.input(x));
  ps.zero_grad();
  const Var loss = f(g, vars);
  g.backward(loss);

  const double h = 1e-6;
  FdResult r;
  auto compare = [&](const M& analytic, M& value, const std::string& name) {
    M numeric(value.rows(), value.cols());
    for (int i = 0; i < value.size(); ++i) {
      const double keep = value.data()[i];
      value.data()[i] = keep + h;
      const double up = evaluate(inputs, f, opt);
      value.data()[i] = keep - h;
      const double down = evaluate(inputs, f, opt);
      value.data()[i] = keep;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    const M a = analytic.size() == 0 ? M::Zero(value.rows(), value.cols()) : analytic;
    const double e = testing::relative_error(a, numeric);
    if (e > r.worst) r = {e, name};
  };
  for (std::size_t k = 0; k < inputs.size(); ++k) compare(g.grad(vars[k]), inputs[k], "input " + std::to_string(k));
  for (auto* p : ps.all()) compare(M(p->grad), p->value, p->name);
  return r;
}

M probe(Rng& rng, int r, int c) { return testing::random_mat(rng, r, c); }

}  // namespace

TEST_CASE("finite differences: every op in double precision") {
  Rng rng(101);
  const double tol = 1e-5;

  SUBCASE("linear + add + weighted_sum") {
    ParameterStore<double> ps;
    auto& W = ps.add("W", 4, 3, Init::Normal, rng, 0.5);
    auto& b = ps.add("b", 1, 3, Init::Normal, rng, 0.5);
    const M w = probe(rng, 5, 3);
    const auto r = finite_difference({probe(rng, 5, 4), probe(rng, 5, 3)}, ps, [&](G& g, const std::vector<Var>& v) {
      return g.weighted_sum(g.add(g.linear(v[0], W, b), v[1]), w);
    });
    CHECK_MESSAGE(r.worst < tol, r.where);
  }
  SUBCASE("embedding with a padding id") {
    ParameterStore<double> ps;
    auto& E = ps.add("E", 6, 3, Init::Normal, rng, 1.0, true);
    const M w = probe(rng, 5, 3);
    const auto r = finite_difference({}, ps, [&](G& g, const std::vector<Var>&) {
      return g.weighted_sum(g.embedding(E, {2, 0, -1, 2, 5}), w);
    });
    CHECK_MESSAGE(r.worst < tol, r.where);
  }
  SUBCASE("layer_norm") {
    ParameterStore<double> ps;
    auto& gain = ps.add("gain", 1, 6, Init::Normal, rng, 1.0);
    auto& bias = ps.add("bias", 1, 6, Init::Normal, rng, 1.0);
    const M w = probe(rng, 4, 6);
    const auto r = finite_difference({probe(rng, 4, 6)}, ps, [&](G& g, const std::vector<Var>& v) {
      return g.weighted_sum(g.layer_norm(v[0], gain, bias), w);
    });
    CHECK_MESSAGE(r.worst < tol, r.where);
  }
  SUBCASE("gelu") {
    ParameterStore<double> ps;
    const M w = probe(rng, 3, 7);
    const auto r = finite_difference({probe(rng, 3, 7) * 2.0}, ps, [&](G& g, const std::vector<Var>& v) {
      return g.weighted_sum(g.gelu(v[0]), w);
    });
    CHECK_MESSAGE(r.worst < tol, r.where);
  }
  SUBCASE("dropout in training mode") {
    ParameterStore<double> ps;
    const M w = probe(rng, 4, 5);
    G::Options opt;
    opt.training = true;
    opt.dropout_seed = 9;
    const auto r = finite_difference(
        {probe(rng, 4, 5)}, ps,
        [&](G& g, const std::vector<Var>& v) { return g.weighted_sum(g.dropout(v[0], 0.3), w); }, opt);
    CHECK_MESSAGE(r.worst < tol, r.where);
  }
  SUBCASE("attention over ragged blocks") {
    ParameterStore<double> ps;
    const M w = probe(rng, 7, 4);
    const auto r = finite_difference({probe(rng, 7, 12)}, ps, [&](G& g, const std::vector<Var>& v) {
      return g.weighted_sum(g.attention(v[0], {0, 3, 4, 7}, 2), w);
    });
    CHECK_MESSAGE(r.worst < tol, r.where);
  }
  SUBCASE("gather_rows with repeats, segment_mean, segment_sum") {
    ParameterStore<double> ps;
    const M w1 = probe(rng, 2, 3), w2 = probe(rng, 3, 3);
    const auto r = finite_difference({probe(rng, 6, 3)}, ps, [&](G& g, const std::vector<Var>& v) {
      const Var a = g.segment_mean(v[0], {0, 2, 6});
      const Var b = g.segment_sum(g.gather_rows(v[0], {5, 1, 1, 0}), {0, 1, 3, 4});
      return g.add(g.weighted_sum(a, w1), g.weighted_sum(b, w2));
    });
    CHECK_MESSAGE(r.worst < tol, r.where);
  }
  SUBCASE("losses") {
    ParameterStore<double> ps;
    const auto bce = finite_difference({probe(rng, 5, 1) * 3.0}, ps, [&](G& g, const std::vector<Var>& v) {
      return g.bce_loss(v[0], {1, 0, 0, 1, 0}, 2.5);
    });
    CHECK_MESSAGE(bce.worst < tol, bce.where);
    const auto ce = finite_difference({probe(rng, 4, 5) * 3.0}, ps, [&](G& g, const std::vector<Var>& v) {
      return g.softmax_ce_loss(v[0], {0, 4, 2, 2});
    });
    CHECK_MESSAGE(ce.worst < tol, ce.where);
    const auto ml = finite_difference({probe(rng, 2, 3) * 3.0}, ps, [&](G& g, const std::vector<Var>& v) {
      return g.multilabel_bce_loss(v[0], {{1, 0, 1}, {0, 0, 1}});
    });
    CHECK_MESSAGE(ml.worst < tol, ml.worst);
  }
  SUBCASE("composed transformer block") {
    ParameterStore<double> ps;
    auto& Wqkv = ps.add("Wqkv", 4, 12, Init::Normal, rng, 0.5);
    auto& bqkv = ps.add("bqkv", 1, 12, Init::Normal, rng, 0.1);
    auto& Wo = ps.add("Wo", 4, 4, Init::Normal, rng, 0.5);
    auto& bo = ps.add("bo", 1, 4, Init::Zeros, rng);
    auto& gain = ps.add("gain", 1, 4, Init::Ones, rng);
    auto& bias = ps.add("bias", 1, 4, Init::Zeros, rng);
    auto& Wh = ps.add("Wh", 4, 1, Init::Normal, rng, 0.5);
    auto& bh = ps.add("bh", 1, 1, Init::Zeros, rng);
    const auto r = finite_difference({probe(rng, 5, 4)}, ps, [&](G& g, const std::vector<Var>& v) {
      const Var a = g.attention(g.linear(v[0], Wqkv, bqkv), {0, 2, 5}, 2);
      const Var x = g.layer_norm(g.add(v[0], g.linear(g.gelu(a), Wo, bo)), gain, bias);
      return g.bce_loss(g.linear(g.segment_mean(x, {0, 2, 5}), Wh, bh), {1, 0});
    });
    CHECK_MESSAGE(r.worst < tol, r.where);
  }
}

TEST_CASE("analytic loss values") {
  G g;
  const Var z = g.input(M::Zero(3, 1));
  CHECK(g.value(g.bce_loss(z, {0, 1, 0}))(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(g.value(g.bce_loss(z, {0, 0, 0}, 4.0))(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const Var u = g.input(M::Constant(2, 5, 1.7));
  CHECK(g.value(g.softmax_ce_loss(u, {0, 3}))(0, 0) == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  M big(1, 2);
  big << 1000.0, -1000.0;
  const Var bl = g.input(big);
  CHECK(g.value(g.softmax_ce_loss(bl, {0}))(0, 0) == doctest::Approx(0.0));
  CHECK(g.value(g.softmax_ce_loss(bl, {1}))(0, 0) == doctest::Approx(2000.0));
  CHECK(std::isfinite(g.value(g.bce_loss(g.input(M::Constant(1, 1, 800.0)), {0}))(0, 0)));
  CHECK_THROWS_AS(g.bce_loss(z, {0, 2, 1}), LabelError);
  CHECK_THROWS_AS(g.softmax_ce_loss(u, {0, 5}), LabelError);
  CHECK_THROWS_AS(g.multilabel_bce_loss(u, {{1, 0}, {0, 1}}), LabelError);
}

TEST_CASE("layer norm of a constant row returns the bias") {
  Rng rng(3);
  ParameterStore<double> ps;
  auto& gain = ps.add("gain", 1, 4, Init::Normal, rng, 1.0);
  auto& bias = ps.add("bias", 1, 4, Init::Normal, rng, 1.0);
  G g;
  const Var x = g.input(M::Constant(2, 4, 3.25));
  const Var y = g.layer_norm(x, gain, bias);
  CHECK(testing::relative_error(M(g.value(y).row(0)), M(bias.value)) < 1e-12);
  g.backward(g.weighted_sum(y, M::Ones(2, 4)));
  CHECK(g.grad(x).allFinite());
}

TEST_CASE("attention probabilities and block masking") {
  Rng rng(5);
  const M qkv = testing::random_mat(rng, 6, 12);
  const std::vector<int> offsets{0, 2, 6};
  G g;
  const Var a = g.attention(g.input(qkv), offsets, 2);
  for (int b = 0; b < 2; ++b)
    for (int h = 0; h < 2; ++h) {
      const M p = g.attention_weights(a, b, h);
      CHECK(p.rows() == offsets[b + 1] - offsets[b]);
      for (int i = 0; i < p.rows(); ++i) CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
  M changed = qkv;
  changed.bottomRows(4) = testing::random_mat(rng, 4, 12);
  G g2;
  const Var a2 = g2.attention(g2.input(changed), offsets, 2);
  CHECK(testing::relative_error(M(g.value(a).topRows(2)), M(g2.value(a2).topRows(2))) == 0.0);
  CHECK_THROWS_AS(g.attention_weights(g.input(qkv), 0, 0), StateError);
  CHECK_THROWS_AS(g.attention(g.input(qkv), {0, 7}, 2), ShapeError);
  CHECK_THROWS_AS(g.attention(g.input(qkv), offsets, 5), ShapeError);
}

TEST_CASE("dropout semantics") {
  Rng rng(8);
  const M x = testing::random_mat(rng, 20, 20);
  G eval;
  CHECK(eval.value(eval.dropout(eval.input(x), 0.5)) == x);
  G::Options opt;
  opt.training = true;
  opt.dropout_seed = 4;
  G t1(opt), t2(opt);
  const M y1 = t1.value(t1.dropout(t1.input(x), 0.5));
  const M y2 = t2.value(t2.dropout(t2.input(x), 0.5));
  CHECK(y1 == y2);
  int kept = 0;
  for (int i = 0; i < x.size(); ++i) {
    const double v = y1.data()[i];
    CHECK((v == 0.0 || std::abs(v - 2.0 * x.data()[i]) < 1e-12));
    kept += v != 0.0;
  }
  CHECK(kept > 150);
  CHECK(kept < 250);
}

TEST_CASE("graph state errors") {
  G empty;
  CHECK_THROWS_AS(empty.backward(Var{0}), StateError);
  G g;
  const Var x = g.input(M::Ones(2, 2));
  CHECK_THROWS_AS(g.grad(x), StateError);
  CHECK_THROWS_AS(g.backward(x), StateError);
  CHECK_THROWS_AS(g.value(Var{42}), StateError);
  const Var s = g.weighted_sum(x, M::Ones(2, 2));
  g.backward(s);
  CHECK(g.grad(x) == M::Ones(2, 2));
}

TEST_CASE("checked graphs reject non-finite values") {
  G::Options opt;
  opt.checked = true;
  G g(opt);
  M bad = M::Ones(2, 2);
  bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(g.gelu(g.input(bad)), NumericsError);
}

TEST_CASE("parameter store") {
  Rng rng(1);
  ParameterStore<double> ps;
  ps.add("a", 2, 3, Init::Normal, rng);
  ps.add("t", 10, 3, Init::Normal, rng, 0.02, true);
  CHECK_THROWS_AS(ps.add("a", 1, 1, Init::Zeros, rng), ConfigError);
  CHECK_THROWS_AS(ps.get("nope"), ConfigError);
  CHECK(ps.count() == 36);
  CHECK(ps.count_excluding_input_tables() == 6);
  const auto f = ps.cast<float>();
  CHECK(f.get("t").value.cast<double>().isApprox(ps.get("t").value, 1e-6));
  ParameterStore<double> copy = ps;
  copy.get("a").value.setZero();
  CHECK(ps.get("a").value.norm() > 0);
}
