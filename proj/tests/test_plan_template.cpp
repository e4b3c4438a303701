#include <doctest.h>

#include <set>

#include "cdm/error.hpp"
#include "cdm/plan_template.hpp"

using namespace cdm;

namespace {

const MetricSpec* find(const PlanTemplate& t, const std::string& roi, MetricTag tag) {
  for (const auto& s : t.specs) {
    if (s.roi == roi && s.kind.tag == tag) return &s;
  }
  return nullptr;
}

std::string minimal(const std::string& spec_body, const std::string& extra = "") {
  return R"({"prescriptions": {"PTV_70": 70}, )" + extra + R"("specs": [)" + spec_body + "]}";
}

}  // namespace

TEST_CASE("institutional template contents") {
  const PlanTemplate t = default_template();
  CHECK(t.ptv_set() == std::vector<std::string>{"PTV_54.25", "PTV_70"});
  CHECK(t.roi_order().size() == 29);
  CHECK(t.oar_set().size() == 27);
  CHECK(t.lambda_mae == 1.0);
  CHECK(t.lambda_cdm == 0.5);
  CHECK(t.prescription("PTV_70") == 70.0);
  CHECK(t.prescription("PTV_54.25") == 54.25);

  const MetricSpec* v95 = find(t, "PTV_70", MetricTag::v_pct);
  REQUIRE(v95);
  CHECK(v95->kind.param == 95.0);
  CHECK(v95->constraint->op == BoundOp::ge);
  CHECK(v95->constraint->value == 98.0);
  CHECK(v95->loss_weight == 1.0);
  CHECK(v95->alpha == 176.0);
  CHECK(find(t, "PTV_54.25", MetricTag::v_pct)->alpha == 209.0);

  const MetricSpec* hot = find(t, "PTV_70", MetricTag::d_cc);
  REQUIRE(hot);
  CHECK(hot->kind.param == doctest::Approx(0.03));
  CHECK(hot->constraint->value == 110.0);
  CHECK(hot->constraint->unit == BoundUnit::pct_presc);

  const MetricSpec* cord = find(t, "SpinalCord", MetricTag::d_cc);
  REQUIRE(cord);
  CHECK(cord->constraint->value == 50.0);
  CHECK(cord->constraint->unit == BoundUnit::gy);
  CHECK(cord->loss_weight == doctest::Approx(0.1));

  // Paired organs expand into both sides.
  CHECK(find(t, "Parotid_L", MetricTag::d_mean));
  CHECK(find(t, "Parotid_R", MetricTag::d_mean));
  for (const auto& s : t.specs) CHECK(s.roi.find("(L/R)") == std::string::npos);
}

TEST_CASE("serialize and parse round trip") {
  const PlanTemplate t = default_template();
  CHECK(parse_template(serialize_template(t)) == t);
  CHECK(parse_template(default_template_json()) == t);
}

TEST_CASE("defaults for weights and lambdas") {
  const PlanTemplate t = parse_template(minimal(
      R"({"roi": "PTV_70", "class": "ptv", "metric": {"kind": "D_mean"}, "aim": {"op": "<=", "value": 102, "unit": "pct_presc"}},
         {"roi": "Cord", "class": "oar", "metric": {"kind": "D_max"}, "constraint": {"op": "<=", "value": 45, "unit": "gy"}})"));
  CHECK(t.specs[0].loss_weight == 1.0);
  CHECK(t.specs[1].loss_weight == doctest::Approx(0.1));
  CHECK(t.lambda_mae == 1.0);
  CHECK(t.lambda_cdm == 0.5);
}

TEST_CASE("template validation errors") {
  const std::string ok_ptv =
      R"({"roi": "PTV_70", "class": "ptv", "metric": {"kind": "V_pct", "param": 95}, "constraint": {"op": ">=", "value": 98, "unit": "pct_volume"}})";
  CHECK_NOTHROW(parse_template(minimal(ok_ptv)));

  // Malformed JSON and unknown fields.
  CHECK_THROWS_AS(parse_template("{"), ValidationError);
  CHECK_THROWS_AS(parse_template(minimal(ok_ptv, R"("extra": 1, )")), ValidationError);
  CHECK_THROWS_AS(parse_template(minimal(
                      R"({"roi": "PTV_70", "class": "ptv", "metric": {"kind": "D_mean"}, "aim": {"op": "<=", "value": 102, "unit": "pct_presc"}, "colour": 1})")),
                  ValidationError);
  // Unknown metric kind and unit.
  CHECK_THROWS_AS(parse_template(minimal(
                      R"({"roi": "X", "class": "oar", "metric": {"kind": "D_median"}, "aim": {"op": "<=", "value": 1, "unit": "gy"}})")),
                  ValidationError);
  CHECK_THROWS_AS(parse_template(minimal(
                      R"({"roi": "X", "class": "oar", "metric": {"kind": "D_mean"}, "aim": {"op": "<=", "value": 1, "unit": "cGy"}})")),
                  ValidationError);
  // Parameter ranges.
  CHECK_THROWS_AS(parse_template(minimal(
                      R"({"roi": "X", "class": "oar", "metric": {"kind": "D_pct", "param": 0}, "aim": {"op": "<=", "value": 1, "unit": "gy"}})")),
                  ValidationError);
  CHECK_THROWS_AS(parse_template(minimal(
                      R"({"roi": "X", "class": "oar", "metric": {"kind": "D_pct", "param": 101}, "aim": {"op": "<=", "value": 1, "unit": "gy"}})")),
                  ValidationError);
  CHECK_THROWS_AS(parse_template(minimal(
                      R"({"roi": "X", "class": "oar", "metric": {"kind": "D_cc", "param": -1}, "aim": {"op": "<=", "value": 1, "unit": "gy"}})")),
                  ValidationError);
  // Missing prescription for a PTV or a V_pct metric.
  CHECK_THROWS_AS(parse_template(minimal(
                      R"({"roi": "PTV_60", "class": "ptv", "metric": {"kind": "D_mean"}, "aim": {"op": "<=", "value": 102, "unit": "pct_presc"}})")),
                  ValidationError);
  CHECK_THROWS_AS(parse_template(minimal(
                      R"({"roi": "Cord", "class": "oar", "metric": {"kind": "V_pct", "param": 50}, "aim": {"op": "<=", "value": 10, "unit": "pct_volume"}})")),
                  ValidationError);
  // Unit that does not fit the metric.
  CHECK_THROWS_AS(parse_template(minimal(
                      R"({"roi": "PTV_70", "class": "ptv", "metric": {"kind": "V_pct", "param": 95}, "constraint": {"op": ">=", "value": 98, "unit": "gy"}})")),
                  ValidationError);
  // Neither aim nor constraint.
  CHECK_THROWS_AS(parse_template(minimal(R"({"roi": "X", "class": "oar", "metric": {"kind": "D_mean"}})")),
                  ValidationError);
  // Duplicate spec and class conflict.
  CHECK_THROWS_AS(parse_template(minimal(ok_ptv + "," + ok_ptv)), ValidationError);
  CHECK_THROWS_AS(parse_template(minimal(
                      ok_ptv + R"(, {"roi": "PTV_70", "class": "oar", "metric": {"kind": "D_max"}, "aim": {"op": "<=", "value": 80, "unit": "gy"}})")),
                  ValidationError);
  // alpha on a dose metric.
  CHECK_THROWS_AS(parse_template(minimal(
                      R"({"roi": "X", "class": "oar", "metric": {"kind": "D_mean"}, "aim": {"op": "<=", "value": 1, "unit": "gy"}, "alpha": 10})")),
                  ValidationError);
  // Bad operator.
  CHECK_THROWS_AS(parse_template(minimal(
                      R"({"roi": "X", "class": "oar", "metric": {"kind": "D_mean"}, "aim": {"op": "<", "value": 1, "unit": "gy"}})")),
                  ValidationError);
}

TEST_CASE("more than 32 ROIs are rejected") {
  std::string body;
  for (int i = 0; i < 33; ++i) {
    if (i) body += ",";
    body += R"({"roi": "R)" + std::to_string(i) +
            R"(", "class": "oar", "metric": {"kind": "D_mean"}, "aim": {"op": "<=", "value": 1, "unit": "gy"}})";
  }
  CHECK_THROWS_AS(parse_template(minimal(body)), ValidationError);
}

TEST_CASE("bounds are inclusive") {
  const Bound ge{BoundOp::ge, 98.0, BoundUnit::pct_volume};
  CHECK(ge.satisfied_by(98.0));
  CHECK(ge.satisfied_by(98.0 - 1e-12));
  CHECK_FALSE(ge.satisfied_by(97.9));
  const Bound le{BoundOp::le, 50.0, BoundUnit::gy};
  CHECK(le.satisfied_by(50.0));
  CHECK_FALSE(le.satisfied_by(50.1));
  CHECK(le.margin(48.0) == doctest::Approx(2.0));
  CHECK(le.margin(50.1) == doctest::Approx(-0.1));
}

TEST_CASE("metric labels") {
  CHECK(MetricKind::d_cc(0.03).label() == "D_0.03cc");
  CHECK(MetricKind::v_pct(95).label() == "V_95%");
  CHECK(MetricKind::d_pct(2).label() == "D_2%");
  CHECK(MetricKind::v_gy(20).label() == "V_20Gy");
  CHECK(MetricKind::d_mean().label() == "D_mean");
}
