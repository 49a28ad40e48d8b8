// Acceptance harness: one PASS/FAIL line per criterion.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "ehrtext/core/errors.hpp"
#include "ehrtext/experiments/importance.hpp"
#include "ehrtext/experiments/metrics.hpp"
#include "ehrtext/experiments/runner.hpp"
#include "ehrtext/experiments/split.hpp"
#include "ehrtext/ingest/cohort.hpp"
#include "ehrtext/ingest/dataset_io.hpp"
#include "ehrtext/models/predictor.hpp"
#include "ehrtext/nn/checkpoint.hpp"
#include "ehrtext/serialize/conventional.hpp"
#include "ehrtext/serialize/sequences.hpp"
#include "ehrtext/synth/generator.hpp"
#include "support/support.hpp"

using namespace ehrtext;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Shared experiment fixtures

struct Options {
  fs::path work;
  int seeds = 5;
  int threads = 1;
};

exp::TrainerConfig desk_trainer() {
  exp::TrainerConfig t;
  t.lr = 1e-3;
  t.batch = 32;
  t.max_epochs = 25;
  t.patience = 5;
  t.eval_batch = 128;
  return t;
}

exp::ModelConfig desk_model() {
  exp::ModelConfig m;
  m.dim = 32;
  m.heads = 2;
  m.ffn = 64;
  m.dropout = 0.1;
  m.f_layers = 1;
  m.g_layers = 1;
  m.h_layers = 2;
  return m;
}

exp::ExperimentConfig desk_config(const Options& o) {
  exp::ExperimentConfig c;
  c.task = Task::Mort;
  c.datasets = {{"hospA", (o.work / "hospA").string()}, {"hospB", (o.work / "hospB").string()}};
  c.feature_selection = {{"hospA", (o.work / "hospA" / "feature_selection.json").string()},
                         {"hospB", (o.work / "hospB" / "feature_selection.json").string()}};
  c.trainer = desk_trainer();
  c.model = desk_model();
  c.serialize = {48, 48, 1024};
  c.vocab_size = 600;
  c.threads = o.threads;
  c.seeds.clear();
  for (int s = 0; s < o.seeds; ++s) c.seeds.push_back(static_cast<std::uint64_t>(s));
  return c;
}

struct Hospital {
  synth::GenerationResult gen;
  std::shared_ptr<const ingest::Dataset> dataset;
  ser::FeatureSelection selection;
};

Hospital make_hospital(const synth::HospitalConfig& cfg, const fs::path& dir) {
  Hospital h;
  h.gen = synth::generate_hospital(cfg, dir);
  h.dataset = std::make_shared<const ingest::Dataset>(ingest::ingest(h.gen.manifest, h.gen.dx_class_map));
  h.selection = ser::FeatureSelection::load(h.gen.feature_selection);
  return h;
}

/// Two hospitals with disjoint code namespaces and 0.9 description overlap.
struct TransferWorld {
  fs::path work;
  Hospital a, b;
  exp::ExperimentData data;
  exp::RunCache cache;
};

TransferWorld& transfer_world(const Options& o) {
  static std::unique_ptr<TransferWorld> world;
  if (world) return *world;
  world = std::make_unique<TransferWorld>();
  world->work = o.work;
  synth::HospitalConfig a;
  a.name = "hospA";
  a.schema_style = synth::SchemaStyle::MimicLike;
  a.code_namespace = 1;
  a.vocab_overlap = 0.9;
  a.concept_pool_size = 200;
  a.seed = 11;
  synth::HospitalConfig b = a;
  b.name = "hospB";
  b.schema_style = synth::SchemaStyle::EicuLike;
  b.code_namespace = 2;
  b.seed = 12;
  world->a = make_hospital(a, o.work / "hospA");
  world->b = make_hospital(b, o.work / "hospB");
  world->data.datasets = {{"hospA", world->a.dataset}, {"hospB", world->b.dataset}};
  world->data.selections = {{"hospA", world->a.selection}, {"hospB", world->b.selection}};
  return *world;
}

// Runs an experiment on the shared pair and keeps its report under work/reports.
json run(const exp::ExperimentConfig& cfg, TransferWorld& w) {
  json r = exp::run_experiment(cfg, w.data, &w.cache);
  fs::create_directories(w.work / "reports");
  std::string name = std::string(exp::to_string(cfg.mode)) + "_" + std::string(models::to_string(cfg.family)) + ".json";
  std::replace(name.begin(), name.end(), '*', '_');
  std::ofstream(w.work / "reports" / name) << r.dump(2) << "\n";
  return r;
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness

using M = nn::Mat<double>;
using G = nn::Graph<double>;
constexpr double kFdStep = 1e-5;

/// Worst norm-wise relative error between reverse-mode and central-difference
/// gradients over the given inputs and parameters. `probe` limits the number
/// of perturbed entries per tensor (0 = all).
double fd_error(std::vector<M> inputs, nn::ParameterStore<double>& ps,
                const std::function<nn::Var(G&, const std::vector<nn::Var>&)>& f, int probe, Rng& rng) {
  auto eval = [&]() {
    G g;
    std::vector<nn::Var> v;
    for (const auto& x : inputs) v.push_back(g.input(x));
    return g.value(f(g, v))(0, 0);
  };
  G g;
  std::vector<nn::Var> vars;
  for (const auto& x : inputs) vars.push_back(g.input(x));
  ps.zero_grad();
  g.backward(f(g, vars));
  double worst = 0.0;
  auto compare = [&](const M& analytic_full, M& value) {
    const M grad = analytic_full.size() ? analytic_full : M::Zero(value.rows(), value.cols());
    std::vector<int> idx;
    if (probe <= 0 || value.size() <= probe) {
      for (int i = 0; i < value.size(); ++i) idx.push_back(i);
    } else {
      int arg = 0;
      grad.cwiseAbs().reshaped<Eigen::RowMajor>().maxCoeff(&arg);
      idx.push_back(arg);
      while (static_cast<int>(idx.size()) < probe) idx.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(value.size()))));
    }
    Eigen::VectorXd a(static_cast<Eigen::Index>(idx.size())), n(a.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      double& x = value.data()[idx[k]];
      const double keep = x;
      x = keep + kFdStep;
      const double up = eval();
      x = keep - kFdStep;
      const double down = eval();
      x = keep;
      n(static_cast<Eigen::Index>(k)) = (up - down) / (2 * kFdStep);
      a(static_cast<Eigen::Index>(k)) = grad.data()[idx[k]];
    }
    worst = std::max(worst, testing::relative_error(a, n));
  };
  for (std::size_t k = 0; k < inputs.size(); ++k) compare(g.grad(vars[k]), inputs[k]);
  for (auto* p : ps.all()) compare(M(p->grad), p->value);
  return worst;
}

int rand_in(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }

std::vector<int> random_offsets(Rng& rng, int rows) {
  std::vector<int> off{0};
  while (off.back() < rows) off.push_back(std::min(rows, off.back() + rand_in(rng, 1, 16)));
  return off;
}

Outcome criterion_gradients() {
  Rng rng(1001);
  std::map<std::string, double> worst;
  auto note = [&](const std::string& op, double e) { worst[op] = std::max(worst[op], e); };
  for (int trial = 0; trial < 3; ++trial) {
    const int rows = rand_in(rng, 2, 64), dim = 2 * rand_in(rng, 1, 16), out = rand_in(rng, 1, 32);
    auto mat = [&](int r, int c) { return testing::random_mat(rng, r, c); };
    {
      nn::ParameterStore<double> ps;
      auto& W = ps.add("W", dim, out, nn::Init::Normal, rng, 0.5);
      auto& b = ps.add("b", 1, out, nn::Init::Normal, rng, 0.5);
      const M w = mat(rows, out);
      note("linear", fd_error({mat(rows, dim)}, ps, [&](G& g, const auto& v) { return g.weighted_sum(g.linear(v[0], W, b), w); }, 0, rng));
    }
    {
      nn::ParameterStore<double> ps;
      const M w = mat(rows, dim);
      note("add", fd_error({mat(rows, dim), mat(rows, dim)}, ps, [&](G& g, const auto& v) { return g.weighted_sum(g.add(v[0], v[1]), w); }, 0, rng));
      note("gelu", fd_error({mat(rows, dim) * 2.0}, ps, [&](G& g, const auto& v) { return g.weighted_sum(g.gelu(v[0]), w); }, 0, rng));
    }
    {
      nn::ParameterStore<double> ps;
      auto& E = ps.add("E", 40, dim, nn::Init::Normal, rng, 1.0, true);
      std::vector<int> ids;
      for (int i = 0; i < rows; ++i) ids.push_back(static_cast<int>(rng.below(41)) - 1);
      const M w = mat(rows, dim);
      note("embedding", fd_error({}, ps, [&](G& g, const auto&) { return g.weighted_sum(g.embedding(E, ids), w); }, 0, rng));
    }
    {
      nn::ParameterStore<double> ps;
      auto& gain = ps.add("g", 1, dim, nn::Init::Normal, rng, 1.0);
      auto& bias = ps.add("b", 1, dim, nn::Init::Normal, rng, 1.0);
      const M w = mat(rows, dim);
      note("layer_norm", fd_error({mat(rows, dim)}, ps, [&](G& g, const auto& v) { return g.weighted_sum(g.layer_norm(v[0], gain, bias), w); }, 0, rng));
    }
    {
      nn::ParameterStore<double> ps;
      const M w = mat(rows, dim);
      G::Options opt;
      opt.training = true;
      opt.dropout_seed = static_cast<std::uint64_t>(trial);
      // Dropout masks depend only on the seed, so finite differences see the same mask.
      const M x = mat(rows, dim);
      G g(opt);
      const nn::Var xv = g.input(x);
      g.backward(g.weighted_sum(g.dropout(xv, 0.25), w));
      M numeric(rows, dim);
      M xp = x;
      for (int i = 0; i < x.size(); ++i) {
        const double keep = xp.data()[i];
        xp.data()[i] = keep + kFdStep;
        G gu(opt);
        const double up = gu.value(gu.weighted_sum(gu.dropout(gu.input(xp), 0.25), w))(0, 0);
        xp.data()[i] = keep - kFdStep;
        G gd(opt);
        const double down = gd.value(gd.weighted_sum(gd.dropout(gd.input(xp), 0.25), w))(0, 0);
        xp.data()[i] = keep;
        numeric.data()[i] = (up - down) / (2 * kFdStep);
      }
      note("dropout", testing::relative_error(g.grad(xv), numeric));
    }
    {
      nn::ParameterStore<double> ps;
      const int heads = dim % 4 == 0 ? 2 : 1;
      const auto off = random_offsets(rng, rows);
      const M w = mat(rows, dim);
      note("attention", fd_error({mat(rows, 3 * dim)}, ps, [&](G& g, const auto& v) { return g.weighted_sum(g.attention(v[0], off, heads), w); }, 0, rng));
    }
    {
      nn::ParameterStore<double> ps;
      const auto off = random_offsets(rng, rows);
      const M w = mat(static_cast<int>(off.size()) - 1, dim);
      note("segment_mean", fd_error({mat(rows, dim)}, ps, [&](G& g, const auto& v) { return g.weighted_sum(g.segment_mean(v[0], off), w); }, 0, rng));
      note("segment_sum", fd_error({mat(rows, dim)}, ps, [&](G& g, const auto& v) { return g.weighted_sum(g.segment_sum(v[0], off), w); }, 0, rng));
      std::vector<int> pick;
      for (int i = 0; i < 2 * rows; ++i) pick.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(rows))));
      const M wg = mat(2 * rows, dim);
      note("gather_rows", fd_error({mat(rows, dim)}, ps, [&](G& g, const auto& v) { return g.weighted_sum(g.gather_rows(v[0], pick), wg); }, 0, rng));
    }
    {
      nn::ParameterStore<double> ps;
      std::vector<int> y, yc;
      std::vector<std::vector<std::uint8_t>> ym;
      for (int i = 0; i < rows; ++i) {
        y.push_back(static_cast<int>(rng.below(2)));
        yc.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(out + 1))));
        std::vector<std::uint8_t> m(static_cast<std::size_t>(out));
        for (auto& b : m) b = static_cast<std::uint8_t>(rng.below(2));
        ym.push_back(m);
      }
      note("bce_loss", fd_error({mat(rows, 1) * 3.0}, ps, [&](G& g, const auto& v) { return g.bce_loss(v[0], y, 1.7); }, 0, rng));
      note("softmax_ce_loss", fd_error({mat(rows, out + 1) * 3.0}, ps, [&](G& g, const auto& v) { return g.softmax_ce_loss(v[0], yc); }, 0, rng));
      note("multilabel_bce_loss", fd_error({mat(rows, out) * 3.0}, ps, [&](G& g, const auto& v) { return g.multilabel_bce_loss(v[0], ym); }, 0, rng));
    }
  }

  // Predictor families: up to 4 events x 16 tokens x dim 32.
  Rng srng(1002);
  std::vector<PatientSample> samples;
  for (int i = 0; i < 3; ++i) samples.push_back(testing::random_sample(srng, rand_in(srng, 1, 4), "g" + std::to_string(i)));
  std::vector<PatientSample> corpus_samples = samples;
  for (int i = 0; i < 10; ++i) corpus_samples.push_back(testing::random_sample(srng, 4, "c" + std::to_string(i)));
  const tok::DescriptionMap dm;
  const auto tokenizer = tok::Tokenizer::train(ser::tokenizer_corpus(corpus_samples, dm), 420);
  const auto vocab = ser::ConventionalVocab::build(corpus_samples, 4);
  ser::FeatureSelection sel;
  sel.features[EventType("labevents")] = {FeatureName("label"), FeatureName("valuenum")};
  sel.features[EventType("prescriptions")] = {FeatureName("drug")};
  const ser::TextEncoder enc(tokenizer, dm);
  std::vector<Label> labels;
  for (std::size_t i = 0; i < samples.size(); ++i) labels.push_back(Label{Task::Mort, static_cast<int>(i % 2)});
  std::vector<const Label*> lp;
  for (const auto& l : labels) lp.push_back(&l);

  using models::Family;
  for (Family fam : {Family::UniHPF, Family::DescEmbStar, Family::RajkomarStar, Family::SAnDStar, Family::UniHPFFlat}) {
    for (int dim : {16, 32}) {
      std::vector<models::ModelInput> inputs;
      for (const auto& s : samples) switch (fam) {
          case Family::UniHPF: inputs.emplace_back(ser::serialize_patient_hierarchical(s, enc, 16, 4)); break;
          case Family::DescEmbStar:
            inputs.emplace_back(ser::serialize_patient_hierarchical(ser::apply_selection(s, sel), enc, 16, 4));
            break;
          case Family::RajkomarStar:
            inputs.emplace_back(ser::serialize_conventional(s, nullptr, vocab, ser::ConventionalMode::FullHierarchical, 4, 8));
            break;
          case Family::SAnDStar:
            inputs.emplace_back(ser::serialize_conventional(s, &sel, vocab, ser::ConventionalMode::SelectedFlat, 4, 8));
            break;
          case Family::UniHPFFlat: inputs.emplace_back(ser::serialize_patient_flattened(s, enc, 64, 16)); break;
        }
      auto spec = models::PredictorSpec::defaults(fam, Task::Mort, 1, {16, 4, 64});
      for (auto* e : {&spec.f, &spec.g, &spec.h}) {
        e->layers = 1;
        e->model_dim = dim;
        e->heads = 2;
        e->ffn_dim = 2 * dim;
        e->dropout = 0.0;
      }
      if (models::uses_subword_tokens(fam)) {
        spec.token_vocab = tokenizer.size();
      } else {
        spec.value_vocab = vocab.value_count();
        spec.type_vocab = vocab.type_count();
        if (fam == Family::RajkomarStar) spec.name_vocab = vocab.name_count();
      }
      models::Predictor<double> model(spec, static_cast<std::uint64_t>(dim));
      for (auto* p : model.params().all())
        p->value = testing::random_mat(srng, static_cast<int>(p->value.rows()), static_cast<int>(p->value.cols()), 0.3);
      std::vector<const models::ModelInput*> batch;
      for (const auto& in : inputs) batch.push_back(&in);
      const double e = fd_error({}, model.params(), [&](G& g, const auto&) {
        return model.loss(g, model.forward(g, batch).logits, lp, 1.5);
      }, 12, srng);
      note(std::string("family ") + models::to_string(fam), e);
    }
  }
  double overall = 0.0;
  std::string where;
  for (const auto& [k, v] : worst)
    if (v >= overall) {
      overall = v;
      where = k;
    }
  return {overall < 1e-5, std::to_string(worst.size()) + " ops/families, worst relative error " + fmt("%.2e", overall) +
                              " (" + where + "), limit 1e-5"};
}

// ---------------------------------------------------------------------------
// 2. AUPRC oracle

double sweep_oracle(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::set<double, std::greater<>> thresholds(scores.begin(), scores.end());
  double positives = 0;
  for (int y : labels) positives += y;
  double ap = 0.0, last = 0.0;
  for (double t : thresholds) {
    double tp = 0, pred = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
      if (scores[i] >= t) {
        ++pred;
        tp += labels[i];
      }
    ap += (tp / positives - last) * (tp / pred);
    last = tp / positives;
  }
  return ap;
}

Outcome criterion_auprc() {
  Rng rng(2002);
  double worst = 0.0;
  int instances = 0;
  while (instances < 1000) {
    const int n = rand_in(rng, 2, 20);
    const int levels = rand_in(rng, 1, 25);
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[static_cast<std::size_t>(i)] = rng.uniform() < 0.5 ? static_cast<double>(rng.below(static_cast<std::uint64_t>(levels))) / levels
                                                           : rng.uniform();
      y[static_cast<std::size_t>(i)] = rng.uniform() < 0.4;
    }
    const int pos = std::accumulate(y.begin(), y.end(), 0);
    if (pos == 0 || pos == n) continue;
    worst = std::max(worst, std::abs(exp::auprc(s, y) - sweep_oracle(s, y)));
    ++instances;
  }
  return {worst < 1e-12, "1000 instances, max |auprc - oracle| = " + fmt("%.2e", worst) + ", limit 1e-12"};
}

// ---------------------------------------------------------------------------
// 3. Ingestion conformance

Outcome criterion_ingestion() {
  const fs::path fixture = fs::path(EHRTEXT_FIXTURE_DIR) / "ingest10";
  ingest::IngestionReport rep;
  const auto ds = ingest::ingest(fixture / "manifest.json", std::nullopt, &rep);
  std::vector<std::string> ids;
  for (const auto& s : ds.samples) ids.push_back(s.stay_id);
  std::vector<std::string> problems;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  };
  expect(ids == std::vector<std::string>{"S1", "S2", "S6", "S7", "S8", "S9", "S10"}, "surviving stays");
  expect(rep.samples_rejected_by_rule.at("age") == 1 && rep.samples_rejected_by_rule.at("duration") == 1 &&
             rep.samples_rejected_by_rule.at("not_first_stay") == 1,
         "rejection rule counts");
  expect(rep.features_pruned == 40, "pruned feature count " + std::to_string(rep.features_pruned) + " != 40");
  std::map<std::pair<std::string, std::string>, int> values;
  std::set<std::string> names;
  for (const auto& s : ds.samples) {
    expect(s.events.size() == 5, "events of " + s.stay_id);
    for (const auto& e : s.events)
      for (const auto& f : e.features) {
        ++values[{f.name.text(), f.value.raw}];
        names.insert(f.name.text());
      }
  }
  expect(!names.count("row id"), "integer-only row_id column kept");
  expect(names == std::set<std::string>{"batch", "flag", "itemid", "valuenum"}, "surviving columns");
  expect(values[{"itemid", "202"}] == 0, "rare code 202 kept");
  expect(values[{"flag", "critical"}] == 0, "rare flag value kept");
  expect(values[{"itemid", "101"}] == 20 && values[{"itemid", "303"}] == 12, "code counts");
  expect(values[{"flag", "abnormal"}] == 6, "flag counts");
  expect(values[{"batch", "7"}] == 34 && values[{"batch", "7.5"}] == 1, "mixed numeric column");
  std::string detail = "7 of 10 stays survive, 40 features pruned (row_id 35, code 202 x3, flag critical x2)";
  if (!problems.empty()) {
    detail = "mismatch:";
    for (const auto& p : problems) detail += " " + p + ";";
  }
  return {problems.empty(), detail};
}

// ---------------------------------------------------------------------------
// 4. Schema invariance

Outcome criterion_schema_invariance(const Options& o) {
  synth::HospitalConfig base;
  base.name = "spelling";
  base.n_stays = 300;
  base.code_namespace = 4;
  base.seed = 44;
  std::vector<synth::NameStyle> styles = {synth::NameStyle::Native, synth::NameStyle::Camel,
                                          synth::NameStyle::LowerSnake, synth::NameStyle::Kebab};
  struct Prepared {
    ingest::Dataset ds;
    tok::Tokenizer tokenizer;
    std::vector<models::ModelInput> inputs;
  };
  std::vector<Prepared> all;
  const ser::SerializeConfig sc{32, 48, 1024};
  for (auto style : styles) {
    auto cfg = base;
    cfg.name_style = style;
    const auto dir = o.work / ("spelling_" + synth::to_string(style));
    const auto gen = synth::generate_hospital(cfg, dir);
    Prepared p;
    p.ds = ingest::ingest(gen.manifest, gen.dx_class_map);
    p.tokenizer = tok::Tokenizer::train(ser::tokenizer_corpus(p.ds.samples, p.ds.descriptions), 600);
    all.push_back(std::move(p));
  }
  // Every spelling is serialized with the tokenizer of the first.
  const auto& tokenizer = all.front().tokenizer;
  for (auto& p : all) {
    const ser::TextEncoder enc(tokenizer, p.ds.descriptions);
    for (const auto& s : p.ds.samples) p.inputs.emplace_back(ser::serialize_patient_hierarchical(s, enc, sc.L_event, sc.N_max));
  }
  auto spec = models::PredictorSpec::defaults(models::Family::UniHPF, Task::Mort, 1, sc);
  for (auto* e : {&spec.f, &spec.g}) {
    e->layers = 1;
    e->model_dim = 32;
    e->heads = 2;
    e->ffn_dim = 64;
  }
  spec.token_vocab = tokenizer.size();
  const models::Predictor<float> init(spec, 4);
  const auto ckpt = o.work / "spelling.ckpt";
  nn::save_checkpoint(ckpt, spec.to_json(), init.params());
  const auto loaded = nn::load_checkpoint(ckpt);
  std::vector<std::vector<std::vector<double>>> preds;
  for (const auto& p : all) {
    models::Predictor<float> model(models::PredictorSpec::from_json(loaded.config), loaded.params);
    std::vector<const models::ModelInput*> batch;
    for (const auto& in : p.inputs) batch.push_back(&in);
    preds.push_back(model.predict(batch));
  }
  bool ok = true;
  std::string why;
  for (std::size_t k = 1; k < all.size(); ++k) {
    if (!(all[k].tokenizer == tokenizer)) ok = false, why += " tokenizer differs;";
    if (all[k].inputs != all.front().inputs) ok = false, why += " token sequences differ;";
    if (preds[k] != preds.front()) ok = false, why += " predictions differ;";
  }
  return {ok, std::to_string(styles.size()) + " spellings, " + std::to_string(all.front().inputs.size()) +
                  " stays: " + (ok ? "identical tokenizers, token sequences and predictions" : why)};
}

// ---------------------------------------------------------------------------
// 5-7. Transfer patterns

double mean_of(const json& report, const std::string& section, const std::string& name) {
  return report.at(section).at(name).at("mean").get<double>();
}

Outcome criterion_zero_shot(const Options& o) {
  auto& w = transfer_world(o);
  auto cfg = desk_config(o);
  cfg.mode = exp::Mode::ZeroShot;
  cfg.sources = {"hospA"};
  cfg.target = "hospB";
  cfg.compare_single = false;
  std::map<std::string, double> auprc;
  double prevalence = 0.0;
  bool unchanged = true;
  for (auto fam : {models::Family::UniHPF, models::Family::SAnDStar, models::Family::RajkomarStar}) {
    cfg.family = fam;
    const auto r = run(cfg, w);
    auprc[models::to_string(fam)] = mean_of(r, "results", "hospB");
    prevalence = r.at("results").at("hospB").at("prevalence").get<double>();
    unchanged = unchanged && r.at("parameters_unchanged").get<bool>();
  }
  const double u = auprc["UniHPF"], s = auprc["SAnD*"], k = auprc["Rajkomar*"];
  const bool ok = unchanged && u - prevalence >= 0.05 && std::abs(s - prevalence) <= 0.02 &&
                  std::abs(k - prevalence) <= 0.02;
  return {ok, "prevalence " + fmt("%.3f", prevalence) + "; UniHPF " + fmt("%.3f", u) + " (+" + fmt("%.3f", u - prevalence) +
                  ", need >= 0.05); SAnD* " + fmt("%.3f", s) + ", Rajkomar* " + fmt("%.3f", k) +
                  " (need within 0.02)" + (unchanged ? "" : "; source parameters changed")};
}

double pooled_delta(const json& r) {
  double sum = 0.0;
  int n = 0;
  for (const auto& [name, d] : r.at("delta_vs_single").items()) {
    sum += d.at("mean").get<double>();
    ++n;
  }
  return sum / n;
}

Outcome criterion_pooled(const Options& o) {
  auto& w = transfer_world(o);
  auto cfg = desk_config(o);
  cfg.mode = exp::Mode::Pooled;
  cfg.sources = {"hospA", "hospB"};
  cfg.compare_single = true;
  cfg.family = models::Family::UniHPF;
  const double u = pooled_delta(run(cfg, w));
  cfg.family = models::Family::SAnDStar;
  const double s = pooled_delta(run(cfg, w));
  const bool ok = u - s >= 0.02 && u >= 0.0;
  return {ok, "mean pooled - single: UniHPF " + fmt("%+.3f", u) + ", SAnD* " + fmt("%+.3f", s) + " (gap " +
                  fmt("%+.3f", u - s) + ", need >= 0.02 and UniHPF >= 0)"};
}

Outcome criterion_finetune(const Options& o) {
  auto& w = transfer_world(o);
  auto cfg = desk_config(o);
  cfg.mode = exp::Mode::FineTune;
  cfg.family = models::Family::UniHPF;
  cfg.sources = {"hospA"};
  cfg.target = "hospB";
  cfg.compare_single = true;
  const auto r = run(cfg, w);
  const double ft = mean_of(r, "results", "hospB"), single = mean_of(r, "single", "hospB");
  return {ft >= single - 0.01, "target AUPRC fine-tuned " + fmt("%.3f", ft) + " vs single " + fmt("%.3f", single) +
                                   " (need >= single - 0.01)"};
}

// ---------------------------------------------------------------------------
// 8. Feature importance

Outcome criterion_importance(const Options& o) {
  synth::HospitalConfig cfg;
  cfg.name = "drivers";
  cfg.code_namespace = 5;
  cfg.seed = 88;
  cfg.mortality_drivers = 3;
  Hospital h = make_hospital(cfg, o.work / "drivers");
  const auto gt = json::parse(testing::read_file(h.gen.ground_truth));
  std::vector<std::string> drivers = gt.at("drivers").get<std::vector<std::string>>();
  exp::ExperimentData data;
  data.datasets = {{"drivers", h.dataset}};
  auto ec = desk_config(o);
  ec.family = models::Family::UniHPF;
  ec.sources = {"drivers"};
  ec.datasets = {{"drivers", h.gen.manifest.string()}};
  int hits = 0;
  std::ostringstream per_seed;
  for (int seed = 0; seed < o.seeds; ++seed) {
    const auto model = exp::train_on_sources(ec, data, {"drivers"}, static_cast<std::uint64_t>(seed), nullptr);
    const auto split = exp::stratified_split(h.dataset->samples, Task::Mort, static_cast<std::uint64_t>(seed));
    const auto ranking = exp::feature_importance(*model, *h.dataset, split.indices(h.dataset->samples, exp::Part::Test), Task::Mort);
    std::set<std::string> top;
    for (std::size_t i = 0; i < std::min<std::size_t>(10, ranking.size()); ++i) top.insert(ranking[i].feature);
    int found = 0;
    for (const auto& d : drivers) found += static_cast<int>(top.count(d));
    hits += found == static_cast<int>(drivers.size());
    per_seed << (seed ? "," : "") << found;
  }
  return {hits >= 4, "all 3 drivers in top-10 in " + std::to_string(hits) + " of " + std::to_string(o.seeds) +
                         " seeds (drivers found per seed: " + per_seed.str() + "; need >= 4)"};
}

// ---------------------------------------------------------------------------
// 9. Determinism and formats

Outcome criterion_determinism(const Options& o) {
  synth::HospitalConfig cfg;
  cfg.name = "det";
  cfg.n_stays = 300;
  cfg.code_namespace = 6;
  cfg.seed = 99;
  Hospital h = make_hospital(cfg, o.work / "det");
  exp::ExperimentData data;
  data.datasets = {{"det", h.dataset}};
  data.selections = {{"det", h.selection}};
  auto ec = desk_config(o);
  ec.seeds = {0, 1};
  ec.trainer.max_epochs = 2;
  ec.sources = {"det"};
  ec.datasets = {{"det", h.gen.manifest.string()}};
  ec.feature_selection = {{"det", h.gen.feature_selection.string()}};
  std::vector<std::string> problems;
  for (auto fam : {models::Family::UniHPF, models::Family::SAnDStar}) {
    ec.family = fam;
    auto r1 = exp::run_experiment(ec, data);
    auto r2 = exp::run_experiment(ec, data);
    r1.erase("wallclock_seconds");
    r2.erase("wallclock_seconds");
    if (r1 != r2) problems.push_back(std::string("report differs for ") + models::to_string(fam));
  }
  ec.family = models::Family::UniHPF;
  const auto model = exp::train_on_sources(ec, data, {"det"}, 0, nullptr);
  const auto path = o.work / "det.ckpt", again = o.work / "det2.ckpt";
  nn::save_checkpoint(path, model->checkpoint_config(), model->params);
  const auto loaded = nn::load_checkpoint(path);
  nn::save_checkpoint(again, loaded.config, loaded.params);
  if (testing::read_file(path) != testing::read_file(again)) problems.push_back("checkpoint save/load/save differs");
  const auto& tok = *model->tokenizer;
  const auto back = tok::Tokenizer::from_json(json::parse(tok.to_json().dump()));
  if (!(back == tok) || back.to_json() != tok.to_json()) problems.push_back("tokenizer JSON round-trip differs");
  std::string detail = "identical reports (UniHPF, SAnD*), byte-identical checkpoint, tokenizer round-trip";
  if (!problems.empty()) {
    detail.clear();
    for (const auto& p : problems) detail += p + "; ";
  }
  return {problems.empty(), detail};
}

// ---------------------------------------------------------------------------
// 10. Parameter parity

Outcome criterion_parity() {
  using models::Family;
  std::map<std::string, models::ParameterReport> reports;
  for (Family fam : {Family::UniHPF, Family::DescEmbStar, Family::RajkomarStar, Family::SAnDStar}) {
    auto spec = models::PredictorSpec::defaults(fam, Task::Mort, 1);
    if (models::uses_subword_tokens(fam)) {
      spec.token_vocab = 2048;
    } else {
      spec.value_vocab = 5000;
      spec.type_vocab = 8;
      if (fam == Family::RajkomarStar) spec.name_vocab = 64;
    }
    reports[models::to_string(fam)] = models::Predictor<float>(spec, 0).parameter_report();
  }
  std::size_t lo = SIZE_MAX, hi = 0;
  std::ostringstream d;
  for (const auto& [name, r] : reports) {
    lo = std::min(lo, r.excluding_input_tables);
    hi = std::max(hi, r.excluding_input_tables);
    d << name << " " << r.excluding_input_tables << " (excluded";
    for (const auto& [t, n] : r.input_tables) d << " " << t << "=" << n;
    d << "); ";
  }
  const double spread = static_cast<double>(hi - lo) / static_cast<double>(lo);
  d << "spread " << fmt("%.2f%%", 100 * spread) << ", limit 5%";
  return {spread < 0.05, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  Options o;
  std::string work = (fs::temp_directory_path() / "ehrtext_acceptance").string();
  std::vector<int> only;
  app.add_option("--work", work, "Scratch directory for generated data");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--seeds", o.seeds, "Seeds for criteria 5-8")->check(CLI::Range(1, 10));
  app.add_option("--threads", o.threads, "Parallel seeds")->check(CLI::Range(1, 64));
  CLI11_PARSE(app, argc, argv);
  o.work = work;
  fs::create_directories(o.work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", criterion_gradients},
      {"AUPRC oracle equivalence", criterion_auprc},
      {"ingestion conformance", criterion_ingestion},
      {"schema invariance", [&] { return criterion_schema_invariance(o); }},
      {"zero-shot pattern", [&] { return criterion_zero_shot(o); }},
      {"pooled-learning pattern", [&] { return criterion_pooled(o); }},
      {"fine-tune non-regression", [&] { return criterion_finetune(o); }},
      {"feature-importance causality", [&] { return criterion_importance(o); }},
      {"determinism and formats", [&] { return criterion_determinism(o); }},
      {"parameter parity", criterion_parity},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !r.pass;
    std::cout << (r.pass ? "PASS" : "FAIL") << " [" << id << "] " << criteria[i].first << ": " << r.detail << " ("
              << fmt("%.1f", secs) << " s)" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
