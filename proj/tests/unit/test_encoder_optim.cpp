#include <doctest.h>

#include <cmath>

#include "ehrtext/core/errors.hpp"
#include "ehrtext/nn/checkpoint.hpp"
#include "ehrtext/nn/encoder.hpp"
#include "ehrtext/nn/optim.hpp"
#include "support/support.hpp"

using namespace ehrtext;
using namespace ehrtext::nn;

namespace {

using M = Mat<double>;

EncoderConfig small_config() {
  EncoderConfig c;
  c.layers = 2;
  c.model_dim = 8;
  c.heads = 2;
  c.ffn_dim = 16;
  c.dropout = 0.0;
  c.max_len = 6;
  return c;
}

}  // namespace

TEST_CASE("encoder with zeroed residual branches is the identity") {
  Rng rng(2);
  const auto cfg = small_config();
  ParameterStore<double> ps;
  declare_encoder(ps, "enc", cfg, rng);
  for (auto* p : ps.all())
    if (p->name == "enc.pos" || p->name.find(".out.") != std::string::npos) p->value.setZero();
  const M x = testing::random_mat(rng, 7, 8);
  Graph<double> g;
  const auto out = encoder_forward(g, ps, "enc", cfg, g.input(x), {0, 4, 7});
  CHECK(g.value(out.hidden) == x);
  CHECK(out.attention.size() == 2);
}

TEST_CASE("encoding a batch equals encoding each sequence alone") {
  Rng rng(3);
  const auto cfg = small_config();
  ParameterStore<double> ps;
  declare_encoder(ps, "enc", cfg, rng);
  const M a = testing::random_mat(rng, 3, 8), b = testing::random_mat(rng, 5, 8);
  M ab(8, 8);
  ab << a, b;
  Graph<double> g;
  const M both = g.value(encoder_forward(g, ps, "enc", cfg, g.input(ab), {0, 3, 8}).hidden);
  Graph<double> ga, gb;
  const M only_a = ga.value(encoder_forward(ga, ps, "enc", cfg, ga.input(a), {0, 3}).hidden);
  const M only_b = gb.value(encoder_forward(gb, ps, "enc", cfg, gb.input(b), {0, 5}).hidden);
  CHECK(testing::relative_error(M(both.topRows(3)), only_a) < 1e-12);
  CHECK(testing::relative_error(M(both.bottomRows(5)), only_b) < 1e-12);
}

TEST_CASE("encoder gradients match finite differences") {
  Rng rng(4);
  auto cfg = small_config();
  cfg.layers = 1;
  ParameterStore<double> ps;
  declare_encoder(ps, "enc", cfg, rng);
  for (auto* p : ps.all()) p->value = testing::random_mat(rng, static_cast<int>(p->value.rows()), static_cast<int>(p->value.cols()), 0.4);
  const M x = testing::random_mat(rng, 5, 8);
  const M w = testing::random_mat(rng, 5, 8);
  auto loss = [&](Graph<double>& g) {
    return g.weighted_sum(encoder_forward(g, ps, "enc", cfg, g.input(x), {0, 2, 5}).hidden, w);
  };
  Graph<double> g;
  ps.zero_grad();
  g.backward(loss(g));
  const double h = 1e-6;
  for (auto* p : ps.all()) {
    M numeric(p->value.rows(), p->value.cols());
    for (int i = 0; i < p->value.size(); ++i) {
      const double keep = p->value.data()[i];
      p->value.data()[i] = keep + h;
      Graph<double> gu;
      const double up = gu.value(loss(gu))(0, 0);
      p->value.data()[i] = keep - h;
      Graph<double> gd;
      const double down = gd.value(loss(gd))(0, 0);
      p->value.data()[i] = keep;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    // Rows of the position table beyond the longest block never receive gradient.
    CHECK_MESSAGE(testing::relative_error(M(p->grad), numeric) < 1e-5, p->name);
  }
}

TEST_CASE("encoder shape and config errors") {
  Rng rng(5);
  const auto cfg = small_config();
  ParameterStore<double> ps;
  declare_encoder(ps, "enc", cfg, rng);
  Graph<double> g;
  CHECK_THROWS_AS(encoder_forward(g, ps, "enc", cfg, g.input(M::Ones(7, 8)), {0, 7}), ShapeError);
  CHECK_THROWS_AS(encoder_forward(g, ps, "enc", cfg, g.input(M::Ones(3, 6)), {0, 3}), ShapeError);
  auto bad = cfg;
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.layers = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(EncoderConfig::from_json(cfg.to_json()) == cfg);
}

TEST_CASE("AdamW matches the reference update") {
  Rng rng(6);
  ParameterStore<double> ps;
  auto& p = ps.add("p", 3, 2, Init::Normal, rng, 1.0);
  AdamWConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.1;
  AdamW<double> opt(cfg);
  M value = p.value, m = M::Zero(3, 2), v = M::Zero(3, 2);
  for (int t = 1; t <= 3; ++t) {
    p.grad = testing::random_mat(rng, 3, 2);
    m = 0.9 * m + 0.1 * p.grad;
    v = 0.999 * v + 0.001 * M(p.grad.cwiseAbs2());
    const M mhat = m / (1 - std::pow(0.9, t));
    const M vhat = v / (1 - std::pow(0.999, t));
    value *= 1 - cfg.lr * cfg.weight_decay;
    value.array() -= cfg.lr * mhat.array() / (vhat.array().sqrt() + cfg.eps);
    opt.step(ps);
    CHECK(testing::relative_error(p.value, value) < 1e-14);
  }
  CHECK(opt.steps() == 3);
}

TEST_CASE("AdamW first step moves each weight by about lr") {
  Rng rng(7);
  ParameterStore<double> ps;
  auto& p = ps.add("p", 4, 4, Init::Normal, rng, 1.0);
  const M before = p.value;
  p.grad = testing::random_mat(rng, 4, 4);
  AdamW<double> opt(AdamWConfig{0.05});
  opt.step(ps);
  for (int i = 0; i < p.value.size(); ++i)
    CHECK(before.data()[i] - p.value.data()[i] == doctest::Approx(0.05 * (p.grad.data()[i] > 0 ? 1 : -1)).epsilon(1e-6));
}

TEST_CASE("non-finite gradients are rejected before any update") {
  Rng rng(8);
  ParameterStore<double> ps;
  auto& a = ps.add("a", 2, 2, Init::Normal, rng);
  auto& b = ps.add("b", 2, 2, Init::Normal, rng);
  a.grad.setOnes();
  b.grad.setOnes();
  b.grad(0, 1) = std::numeric_limits<double>::infinity();
  const M a0 = a.value;
  AdamW<double> opt;
  CHECK_THROWS_AS(opt.step(ps), NumericsError);
  CHECK(a.value == a0);
  CHECK(opt.steps() == 0);
}

TEST_CASE("global gradient clipping") {
  Rng rng(9);
  ParameterStore<double> ps;
  auto& a = ps.add("a", 1, 2, Init::Zeros, rng);
  auto& b = ps.add("b", 1, 1, Init::Zeros, rng);
  a.grad = M(1, 2);
  a.grad << 3.0, 0.0;
  b.grad = M::Constant(1, 1, 4.0);
  CHECK(clip_grad_norm(ps, 10.0) == doctest::Approx(5.0));
  CHECK(a.grad(0, 0) == 3.0);
  CHECK(clip_grad_norm(ps, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad(0, 0) == doctest::Approx(0.6));
  CHECK(b.grad(0, 0) == doctest::Approx(0.8));
  CHECK(clip_grad_norm(ps, 0.0) == doctest::Approx(1.0));
}

TEST_CASE("checkpoint bytes round-trip exactly") {
  Rng rng(10);
  ParameterStore<float> ps;
  ps.add("w", 3, 5, Init::Normal, rng, 1.0);
  ps.add("emb", 7, 5, Init::Normal, rng, 1.0, true);
  const nlohmann::json cfg = {{"family", "UniHPF"}, {"dim", 5}};
  const std::string bytes = checkpoint_to_bytes(cfg, ps);
  CHECK(bytes.substr(0, 8) == "EHRCKPT1");
  const auto back = checkpoint_from_bytes(bytes);
  CHECK(back.config == cfg);
  CHECK(back.params.get("w").value == ps.get("w").value);
  CHECK(back.params.get("emb").input_table);
  CHECK(checkpoint_to_bytes(back.config, back.params) == bytes);
  CHECK(checkpoint_hash(cfg, ps) == checkpoint_hash(back.config, back.params));
  ps.get("w").value(0, 0) += 1e-3f;
  CHECK(checkpoint_hash(cfg, ps) != checkpoint_hash(back.config, back.params));

  testing::TempDir dir("ckpt");
  save_checkpoint(dir / "m.ckpt", cfg, back.params);
  CHECK(testing::read_file(dir / "m.ckpt") == bytes);
  CHECK_THROWS_AS(checkpoint_from_bytes(bytes.substr(0, bytes.size() - 3)), FormatError);
  CHECK_THROWS_AS(checkpoint_from_bytes("NOTACKPT" + bytes.substr(8)), FormatError);
}
