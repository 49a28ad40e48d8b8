#include <doctest.h>

#include "ehrtext/core/errors.hpp"
#include "ehrtext/core/text.hpp"
#include "ehrtext/core/types.hpp"

using namespace ehrtext;

TEST_CASE("identifier spellings normalize to one feature name") {
  for (const char* raw : {"DOSE_VAL_RX", "doseValRx", "dose-val-rx", "Dose.Val.Rx", "  dose   val rx "})
    CHECK(normalize_identifier(raw) == "dose val rx");
  CHECK(FeatureName("ITEMID").text() == "itemid");
  CHECK_THROWS_AS(FeatureName("__"), std::invalid_argument);
}

TEST_CASE("text normalization collapses whitespace") {
  CHECK(normalize_text("  a\t b\n\nc ") == "a b c");
  CHECK(normalize_text("") == "");
}

TEST_CASE("decimal literals") {
  CHECK(is_integer_literal("7"));
  CHECK(is_integer_literal("-12"));
  CHECK_FALSE(is_integer_literal("7.0"));
  CHECK(is_decimal_literal("7.0"));
  CHECK(is_decimal_literal("-2.5E-2"));
  CHECK_FALSE(is_decimal_literal("7 mg"));
  CHECK(to_plain_decimal("1.5e3").value() == "1500");
  CHECK(to_plain_decimal("-2.5E-2").value() == "-0.025");
  CHECK_FALSE(to_plain_decimal("abc").has_value());
}

TEST_CASE("interval buckets follow the gap boundaries") {
  CHECK(IntervalBucket::from_gap(-3).id() == 0);
  CHECK(IntervalBucket::from_gap(0).id() == 0);
  CHECK(IntervalBucket::from_gap(4).id() == 0);
  CHECK(IntervalBucket::from_gap(5).id() == 1);
  CHECK(IntervalBucket::from_gap(59).id() == 2);
  CHECK(IntervalBucket::from_gap(60).id() == 3);
  CHECK(IntervalBucket::from_gap(719).id() == 5);
  CHECK(IntervalBucket::from_gap(720).id() == 6);
  CHECK(IntervalBucket::first().id() == IntervalBucket::kFirstEvent);
}

TEST_CASE("canonical events sort names, drop empties and infer kinds") {
  auto e = canonicalize_event({{"Value", "1.5"}, {"ITEM", "glucose"}, {"flag", ""}, {"item", "dup"}},
                              EventType("LabEvents"), 30);
  REQUIRE(e.has_value());
  CHECK(e->event_type.text() == "lab events");
  REQUIRE(e->features.size() == 2);
  CHECK(e->features[0].name.text() == "item");
  CHECK(e->features[0].value.raw == "glucose");
  CHECK(e->features[0].value.kind == ValueKind::Text);
  CHECK(e->features[1].value.kind == ValueKind::Numeric);
  CHECK_FALSE(canonicalize_event({{"flag", "  "}}, EventType("x"), 0).has_value());
  auto coded = canonicalize_event({{"itemid", "50912"}}, EventType("lab"), 0,
                                  [](const EventType&, const FeatureName& n) { return n.text() == "itemid"; });
  CHECK(coded->features[0].value.kind == ValueKind::Code);
}

TEST_CASE("task names round-trip") {
  for (Task t : kAllTasks) CHECK(task_from_string(to_string(t)) == t);
  CHECK(task_kind(Task::Dx) == TaskKind::Multilabel);
  CHECK(task_kind(Task::FiAc) == TaskKind::Multiclass);
  CHECK(task_kind(Task::Mort) == TaskKind::Binary);
  CHECK_THROWS_AS(task_from_string("mortality"), ConfigError);
}
