#include <doctest.h>

#include "ehrtext/core/errors.hpp"
#include "ehrtext/experiments/trainer.hpp"
#include "ehrtext/nn/checkpoint.hpp"
#include "ehrtext/serialize/sequences.hpp"
#include "support/support.hpp"

using namespace ehrtext;
using namespace ehrtext::exp;

namespace {

/// Stays labeled positive exactly when heparin was given.
struct Toy {
  std::vector<PatientSample> samples;
  std::vector<models::ModelInput> inputs;
  std::vector<Label> labels;
  tok::DescriptionMap descriptions;
  tok::Tokenizer tokenizer;

  explicit Toy(int n) {
    Rng rng(61);
    for (int i = 0; i < n; ++i) samples.push_back(testing::random_sample(rng, 4, "t" + std::to_string(i)));
    tokenizer = tok::Tokenizer::train(ser::tokenizer_corpus(samples, descriptions), 420);
    const ser::TextEncoder enc(tokenizer, descriptions);
    for (const auto& s : samples) {
      int y = 0;
      for (const auto& e : s.events)
        for (const auto& f : e.features) y |= f.value.raw == "heparin sodium";
      labels.push_back(Label{Task::Mort, y});
      inputs.emplace_back(ser::serialize_patient_hierarchical(s, enc, 24, 8));
    }
  }

  LabeledSet range(std::size_t lo, std::size_t hi) const {
    LabeledSet set;
    for (std::size_t i = lo; i < hi; ++i) {
      set.inputs.push_back(&inputs[i]);
      set.labels.push_back(&labels[i]);
    }
    return set;
  }

  models::PredictorSpec spec() const {
    auto s = models::PredictorSpec::defaults(models::Family::UniHPF, Task::Mort, 1, {24, 8, 256});
    for (auto* e : {&s.f, &s.g, &s.h}) {
      e->layers = 1;
      e->model_dim = 16;
      e->heads = 2;
      e->ffn_dim = 32;
    }
    s.token_vocab = tokenizer.size();
    return s;
  }
};

TrainerConfig quick_config() {
  TrainerConfig c;
  c.lr = 3e-3;
  c.batch = 16;
  c.max_epochs = 12;
  c.patience = 4;
  return c;
}

}  // namespace

TEST_CASE("early stopping counts epochs without improvement") {
  EarlyStopping es(2);
  CHECK(es.update(0.3));
  CHECK_FALSE(es.update(0.3));
  CHECK_FALSE(es.should_stop());
  CHECK(es.update(0.5));
  CHECK_FALSE(es.update(0.4));
  CHECK_FALSE(es.update(0.45));
  CHECK(es.should_stop());
  CHECK(es.best() == 0.5);
  CHECK(es.best_epoch() == 3);
}

TEST_CASE("trainer config validation") {
  auto c = quick_config();
  CHECK_NOTHROW(c.validate());
  c.patience = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = quick_config();
  c.lr = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = quick_config();
  CHECK(TrainerConfig::from_json(c.to_json()).to_json() == c.to_json());
}

TEST_CASE("training learns a separable task and keeps the best weights") {
  Toy toy(240);
  const auto train = toy.range(0, 160), valid = toy.range(160, 200), test = toy.range(200, 240);
  models::Predictor<float> model(toy.spec(), 3);
  const double before = evaluate(model, test, 32).value;
  const auto result = train_model(model, train, valid, quick_config(), 5);
  CHECK(result.epochs_run >= 1);
  CHECK(result.valid_history.size() == static_cast<std::size_t>(result.epochs_run));
  CHECK(result.best_valid == *std::max_element(result.valid_history.begin(), result.valid_history.end()));
  CHECK(result.best_valid == doctest::Approx(result.valid_history[static_cast<std::size_t>(result.best_epoch - 1)]));
  CHECK(evaluate(model, valid, 32).value == doctest::Approx(result.best_valid).epsilon(1e-9));
  CHECK(nn::checkpoint_hash({}, model.params()) == nn::checkpoint_hash({}, result.best_params));
  const double after = evaluate(model, test, 32).value;
  CHECK(after > 0.9);
  CHECK(after > before);
}

TEST_CASE("training is deterministic and checkpoints round-trip byte-identically") {
  Toy toy(120);
  const auto train = toy.range(0, 80), valid = toy.range(80, 120);
  auto cfg = quick_config();
  cfg.max_epochs = 3;
  models::Predictor<float> a(toy.spec(), 7), b(toy.spec(), 7);
  train_model(a, train, valid, cfg, 9);
  train_model(b, train, valid, cfg, 9);
  const auto config = toy.spec().to_json();
  const std::string bytes = nn::checkpoint_to_bytes(config, a.params());
  CHECK(nn::checkpoint_to_bytes(config, b.params()) == bytes);

  testing::TempDir dir("trainer");
  nn::save_checkpoint(dir / "a.ckpt", config, a.params());
  const auto back = nn::load_checkpoint(dir / "a.ckpt");
  models::Predictor<float> restored(models::PredictorSpec::from_json(back.config), back.params);
  CHECK(nn::checkpoint_to_bytes(back.config, restored.params()) == bytes);
  const auto pa = predict_all(a, valid.inputs, 16);
  const auto pr = predict_all(restored, valid.inputs, 7);
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i][0] == pr[i][0]);

  models::Predictor<float> c(toy.spec(), 7);
  train_model(c, train, valid, cfg, 10);
  CHECK(nn::checkpoint_to_bytes(config, c.params()) != bytes);
}
