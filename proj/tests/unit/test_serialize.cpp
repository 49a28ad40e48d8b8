#include <doctest.h>

#include "ehrtext/core/errors.hpp"
#include "ehrtext/serialize/conventional.hpp"
#include "ehrtext/serialize/sequences.hpp"
#include "ehrtext/tokenize/special_tokens.hpp"
#include "support/support.hpp"

using namespace ehrtext;
using namespace ehrtext::ser;
namespace sp = ehrtext::tok::special;

namespace {

struct Fixture {
  Rng rng{17};
  std::vector<PatientSample> samples;
  tok::DescriptionMap descriptions;
  tok::Tokenizer tokenizer;

  Fixture() {
    for (int i = 0; i < 20; ++i) samples.push_back(testing::random_sample(rng, 5 + i, "s" + std::to_string(i)));
    tokenizer = tok::Tokenizer::train(tokenizer_corpus(samples, descriptions), 450);
  }
};

/// Untruncated event layout assembled directly from the tokenizer.
TokenSequence reference_event(const MedicalEvent& e, IntervalBucket iv, const tok::Tokenizer& t) {
  TokenSequence s;
  auto put = [&](const std::vector<int>& ids, Segment seg) {
    for (int id : ids) {
      s.ids.push_back(id);
      s.segment.push_back(seg);
    }
  };
  put({sp::kCls}, Segment::Cls);
  put(t.encode(e.event_type.text()), Segment::EventType);
  for (const auto& f : e.features) {
    put(t.encode(f.name.text()), Segment::Name);
    if (f.value.kind == ValueKind::Numeric)
      put(tok::digit_place_tokens(f.value.raw), Segment::Value);
    else
      put(t.encode(f.value.raw), Segment::Value);
  }
  put({sp::interval(iv.id())}, Segment::Time);
  return s;
}

}  // namespace

TEST_CASE("event layout matches the reference when it fits") {
  Fixture fx;
  const TextEncoder enc(fx.tokenizer, fx.descriptions);
  for (const auto& s : fx.samples)
    for (std::size_t i = 0; i < s.events.size(); ++i) {
      const auto ref = reference_event(s.events[i], s.intervals[i], fx.tokenizer);
      const int L = static_cast<int>(ref.size()) + 3;
      const auto got = serialize_event(s.events[i], s.intervals[i], enc, L);
      got.validate();
      REQUIRE(got.size() == static_cast<std::size_t>(L));
      CHECK(got.content_length() == ref.size());
      CHECK(std::vector<int>(got.ids.begin(), got.ids.begin() + static_cast<long>(ref.size())) == ref.ids);
      for (std::size_t k = ref.size(); k < got.size(); ++k) {
        CHECK(got.ids[k] == sp::kPad);
        CHECK(got.segment[k] == Segment::Pad);
      }
    }
}

TEST_CASE("truncation keeps the interval token last") {
  Fixture fx;
  const TextEncoder enc(fx.tokenizer, fx.descriptions);
  const auto& s = fx.samples[3];
  const auto ref = reference_event(s.events[0], s.intervals[0], fx.tokenizer);
  REQUIRE(ref.size() > 10);
  for (int L = 8; L < static_cast<int>(ref.size()); ++L) {
    const auto got = serialize_event(s.events[0], s.intervals[0], enc, L);
    REQUIRE(got.size() == static_cast<std::size_t>(L));
    CHECK(got.content_length() == static_cast<std::size_t>(L));
    CHECK(got.ids.back() == sp::interval(s.intervals[0].id()));
    CHECK(got.segment.back() == Segment::Time);
    CHECK(std::equal(got.ids.begin(), got.ids.end() - 1, ref.ids.begin()));
  }
  CHECK_THROWS_AS(serialize_event(s.events[0], s.intervals[0], enc, 7), ConfigError);
}

TEST_CASE("hierarchical keeps the most recent N_max events") {
  Fixture fx;
  const TextEncoder enc(fx.tokenizer, fx.descriptions);
  const auto& s = fx.samples[10];  // 15 events
  const auto h = serialize_patient_hierarchical(s, enc, 64, 6);
  REQUIRE(h.event_sequences.size() == 6);
  for (std::size_t k = 0; k < 6; ++k) {
    const std::size_t i = s.events.size() - 6 + k;
    CHECK(h.event_sequences[k] == serialize_event(s.events[i], s.intervals[i], enc, 64));
    CHECK(h.interval_buckets[k] == s.intervals[i]);
  }
  CHECK(serialize_patient_hierarchical(fx.samples[0], enc, 64, 100).event_sequences.size() == 5);
}

TEST_CASE("flattened: one CLS, whole events, no PAD") {
  Fixture fx;
  const TextEncoder enc(fx.tokenizer, fx.descriptions);
  const auto& s = fx.samples[12];
  std::vector<std::vector<int>> bodies;
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    auto r = reference_event(s.events[i], s.intervals[i], fx.tokenizer).ids;
    bodies.emplace_back(r.begin() + 1, r.end());
  }
  std::size_t total = 1;
  for (const auto& b : bodies) total += b.size();
  const auto full = serialize_patient_flattened(s, enc, static_cast<int>(total) + 50, 512);
  CHECK(full.ids.size() == total);
  full.ids.validate();

  // Room for only the last three events.
  std::size_t tail = 1;
  for (std::size_t k = bodies.size() - 3; k < bodies.size(); ++k) tail += bodies[k].size();
  const auto cut = serialize_patient_flattened(s, enc, static_cast<int>(tail + bodies[bodies.size() - 4].size() - 1), 512);
  std::vector<int> expect{sp::kCls};
  for (std::size_t k = bodies.size() - 3; k < bodies.size(); ++k) expect.insert(expect.end(), bodies[k].begin(), bodies[k].end());
  CHECK(cut.ids.ids == expect);
  CHECK(std::count(cut.ids.ids.begin(), cut.ids.ids.end(), sp::kCls) == 1);
  CHECK(std::count(cut.ids.ids.begin(), cut.ids.ids.end(), sp::kPad) == 0);
}

TEST_CASE("token sequence validation") {
  TokenSequence ok{{sp::kCls, 200, sp::kPad}, {Segment::Cls, Segment::Name, Segment::Pad}};
  CHECK_NOTHROW(ok.validate());
  TokenSequence no_cls{{200, sp::kPad}, {Segment::Name, Segment::Pad}};
  CHECK_THROWS_AS(no_cls.validate(), ShapeError);
  TokenSequence after_pad{{sp::kCls, sp::kPad, 200}, {Segment::Cls, Segment::Pad, Segment::Name}};
  CHECK_THROWS_AS(after_pad.validate(), ShapeError);
  TokenSequence ragged{{sp::kCls, 200}, {Segment::Cls}};
  CHECK_THROWS_AS(ragged.validate(), ShapeError);
}

TEST_CASE("feature selection is validated against the schema") {
  Fixture fx;
  FeatureSelection sel;
  sel.features[EventType("labevents")] = {FeatureName("label")};
  CHECK_NOTHROW(validate_selection(sel, schema_of(fx.samples)));
  CHECK(FeatureSelection::from_json(sel.to_json()) == sel);
  sel.features[EventType("labevents")].push_back(FeatureName("no_such_feature"));
  try {
    validate_selection(sel, schema_of(fx.samples));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("no such feature") != std::string::npos);
  }
}

TEST_CASE("selection filter drops emptied events and keeps a placeholder") {
  Fixture fx;
  FeatureSelection sel;
  sel.features[EventType("labevents")] = {FeatureName("label")};
  const auto& s = fx.samples[5];
  const auto f = apply_selection(s, sel);
  std::size_t labs = 0;
  for (const auto& e : s.events) labs += e.event_type.text() == "labevents";
  CHECK(f.events.size() == std::max<std::size_t>(labs, 1));
  for (const auto& e : f.events)
    for (const auto& feat : e.features) CHECK(feat.name.text() == "label");

  FeatureSelection none;
  none.features[EventType("inputevents")] = {FeatureName("amount")};
  const auto g = apply_selection(s, none);
  REQUIRE(g.events.size() == 1);
  CHECK(g.events[0].features.empty());
  CHECK(g.events[0].timestamp == s.events.back().timestamp);
}

TEST_CASE("conventional vocab: OOV, quantile bins, extension") {
  Fixture fx;
  const std::vector<PatientSample> train(fx.samples.begin(), fx.samples.begin() + 10);
  auto vocab = ConventionalVocab::build(train, 4);
  const EventType lab("labevents");
  CHECK(vocab.type_id(lab) != ConventionalVocab::kOov);
  CHECK(vocab.type_id(EventType("nursing notes")) == ConventionalVocab::kOov);
  CHECK(vocab.name_id(lab, FeatureName("zzz")) == ConventionalVocab::kOov);
  const Feature unseen{FeatureName("label"), {"bilirubin total", ValueKind::Text}};
  CHECK(vocab.value_id(lab, unseen) == ConventionalVocab::kOov);

  // Numeric values share exactly `bins` ids per column.
  const Feature lo{FeatureName("valuenum"), {"0.1", ValueKind::Numeric}};
  const Feature hi{FeatureName("valuenum"), {"999.0", ValueKind::Numeric}};
  CHECK(vocab.value_id(lab, lo) != ConventionalVocab::kOov);
  CHECK(vocab.value_id(lab, lo) != vocab.value_id(lab, hi));
  std::set<int> ids;
  for (int v = 0; v < 200; ++v)
    ids.insert(vocab.value_id(lab, {FeatureName("valuenum"), {std::to_string(v) + ".5", ValueKind::Numeric}}));
  CHECK(ids.size() == 4);

  const int before = vocab.value_count();
  const int drug_id = vocab.value_id(EventType("prescriptions"), {FeatureName("route"), {"iv", ValueKind::Text}});
  PatientSample extra = fx.samples[0];
  extra.events[0] = testing::make_event("labevents", {{"label", "bilirubin total"}}, extra.events[0].timestamp);
  vocab.extend({&extra});
  CHECK(vocab.value_count() == before + 1);
  CHECK(vocab.value_id(lab, unseen) != ConventionalVocab::kOov);
  CHECK(vocab.value_id(EventType("prescriptions"), {FeatureName("route"), {"iv", ValueKind::Text}}) == drug_id);
  CHECK(ConventionalVocab::from_json(vocab.to_json()) == vocab);
}

TEST_CASE("conventional serialization modes") {
  Fixture fx;
  const auto vocab = ConventionalVocab::build(fx.samples);
  const auto& s = fx.samples[8];
  const auto full = serialize_conventional(s, nullptr, vocab, ConventionalMode::FullHierarchical, 100, 2);
  REQUIRE(full.events.size() == s.events.size());
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    CHECK(full.events[i].value_ids.size() == std::min<std::size_t>(2, s.events[i].features.size()));
    CHECK(full.events[i].interval == s.intervals[i]);
  }
  CHECK(serialize_conventional(s, nullptr, vocab, ConventionalMode::FullHierarchical, 4, 8).events.size() == 4);
  CHECK_THROWS_AS(serialize_conventional(s, nullptr, vocab, ConventionalMode::SelectedFlat, 4, 8), ConfigError);

  FeatureSelection none;
  none.features[EventType("inputevents")] = {FeatureName("amount")};
  const auto ph = serialize_conventional(s, &none, vocab, ConventionalMode::SelectedFlat, 100, 8);
  REQUIRE(ph.events.size() == 1);
  CHECK(ph.events[0].value_ids == std::vector<int>{ConventionalVocab::kOov});
  CHECK_THROWS_AS(serialize_conventional(fx.samples, &none, vocab, ConventionalMode::SelectedFlat, 100, 8),
                  ConfigError);
}
