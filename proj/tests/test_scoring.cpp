#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cdm/error.hpp"
#include "cdm/scoring.hpp"
#include "support.hpp"

using namespace cdm;

namespace {

// Two-tailed p from all 2^n sign patterns over mid-ranked |d|.
double brute_wilcoxon_p(const std::vector<double>& diffs, double* w_plus_out) {
  std::vector<double> d;
  for (double x : diffs) {
    if (x != 0.0) d.push_back(x);
  }
  const std::size_t n = d.size();
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    double less = 0, same = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(d[j]) < std::abs(d[i])) ++less;
      if (std::abs(d[j]) == std::abs(d[i])) ++same;
    }
    rank[i] = less + (same + 1) / 2;
  }
  double w = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i] > 0) w += rank[i];
  }
  *w_plus_out = w;
  std::size_t le = 0, ge = 0;
  const std::size_t total = std::size_t{1} << n;
  for (std::size_t mask = 0; mask < total; ++mask) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1) s += rank[i];
    }
    if (s <= w + 1e-9) ++le;
    if (s >= w - 1e-9) ++ge;
  }
  return std::min(1.0, 2.0 * static_cast<double>(std::min(le, ge)) / static_cast<double>(total));
}

PlanTemplate ptv_plan() {
  PlanTemplate t;
  t.prescriptions["PTV_70"] = 70.0;
  t.specs.push_back({"PTV_70", RoiClass::ptv, MetricKind::v_pct(95), std::nullopt,
                     Bound{BoundOp::ge, 98, BoundUnit::pct_volume}, 1.0, 176.0});
  t.specs.push_back({"PTV_70", RoiClass::ptv, MetricKind::d_mean(), Bound{BoundOp::le, 102, BoundUnit::pct_presc},
                     std::nullopt, 1.0, std::nullopt});
  return t;
}

DoseGrid two_level(std::size_t n, std::size_t low_count, double low, double high) {
  std::vector<double> v(n, high);
  for (std::size_t i = 0; i < low_count; ++i) v[i] = low;
  return DoseGrid({n, 1, 1}, {2, 2, 2}, v);
}

}  // namespace

TEST_CASE("identical doses score zero") {
  std::mt19937_64 rng(3);
  const Dims d{8, 8, 8};
  const auto masks = testing::random_masks(rng, d, 4);
  std::vector<double> v(d.count());
  for (double& x : v) x = testing::uniform(rng, 0, 72);
  const DoseGrid g(d, {2, 2, 2}, v);
  PlanTemplate plan;
  plan.prescriptions["roi_0"] = 70;
  plan.specs.push_back({"roi_0", RoiClass::ptv, MetricKind::v_pct(95), std::nullopt,
                        Bound{BoundOp::ge, 98, BoundUnit::pct_volume}, 1.0, 176.0});
  plan.specs.push_back(testing::oar_spec("roi_1", MetricKind::d_mean()));
  plan.specs.push_back(testing::oar_spec("roi_2", MetricKind::d_cc(0.03)));
  plan.specs.push_back(testing::v_spec("roi_3", 30, 1.0));
  const BitMaskVolume rois = encode(masks, {2, 2, 2});
  const ScoreReport r = score_pair(g, g, rois, plan, "p1");
  CHECK(r.ptv_score == 0.0);
  CHECK(r.oar_score == 0.0);
  CHECK(r.dose_score == 0.0);
  CHECK(r.patient_id == "p1");
  for (const auto& m : r.per_metric) CHECK(m.constraint_pass == m.gt_constraint_pass);

  std::vector<double> up = v;
  for (double& x : up) x += 1.0;
  const ScoreReport s = score_pair(g.with_values(up), g, rois, plan);
  CHECK(s.dose_score == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.ptv_score >= 0.0);
  CHECK(s.oar_score >= 0.0);
  // D_mean and D_cc of the OARs move by exactly 1 Gy
  CHECK(s.per_metric[1].abs_diff == doctest::Approx(1.0));
  CHECK(s.per_metric[2].abs_diff == doctest::Approx(1.0));
}

TEST_CASE("handcrafted PTV score") {
  // pred: V95 = 97 %, D_mean = 101 %; gt: V95 = 98.5 %, D_mean = 102 %.
  const double px = (200 * 70.7 - 6 * 60.0) / 194.0;
  const double gx = (200 * 71.4 - 3 * 60.0) / 197.0;
  const DoseGrid pred = two_level(200, 6, 60.0, px);
  const DoseGrid gt = two_level(200, 3, 60.0, gx);
  const BitMaskVolume rois({200, 1, 1}, std::vector<std::uint32_t>(200, 1u), {"PTV_70"});
  const ScoreReport r = score_pair(pred, gt, rois, ptv_plan());
  REQUIRE(r.per_metric.size() == 2);
  CHECK(r.per_metric[0].pred == doctest::Approx(97.0));
  CHECK(r.per_metric[0].gt == doctest::Approx(98.5));
  CHECK(r.per_metric[0].unit == "% vol");
  CHECK(r.per_metric[1].pred == doctest::Approx(101.0));
  CHECK(r.per_metric[1].unit == "% presc");
  CHECK(r.ptv_score == doctest::Approx(1.25));
  CHECK(r.oar_score == 0.0);
  CHECK_FALSE(*r.per_metric[0].constraint_pass);
  CHECK(*r.per_metric[0].gt_constraint_pass);
}

TEST_CASE("score averages over ROIs, then metrics") {
  PlanTemplate plan;
  plan.specs.push_back(testing::oar_spec("A", MetricKind::d_mean()));
  plan.specs.push_back(testing::oar_spec("A", MetricKind::d_max()));
  plan.specs.push_back(testing::oar_spec("B", MetricKind::d_mean()));
  const Dims d{4, 1, 1};
  const BitMaskVolume rois(d, {1u, 1u, 2u, 2u}, {"A", "B"});
  const DoseGrid gt(d, {}, {10, 10, 10, 10});
  const DoseGrid pred(d, {}, {10, 14, 13, 13});
  // A: D_mean diff 2, D_max diff 4 -> 3; B: 3 -> oar score 3
  CHECK(score_pair(pred, gt, rois, plan).oar_score == doctest::Approx(3.0));
  const DoseGrid pred2(d, {}, {10, 14, 11, 11});
  // A: 3, B: 1 -> 2 (a flat mean over three metrics would give 7/3)
  CHECK(score_pair(pred2, gt, rois, plan).oar_score == doctest::Approx(2.0));
}

TEST_CASE("constraint checks on listed bounds") {
  const PlanTemplate full = default_template();
  // V95 at exactly 98 %.
  {
    PlanTemplate plan;
    plan.prescriptions = full.prescriptions;
    for (const auto& s : full.specs) {
      if (s.roi == "PTV_70" && s.kind.tag == MetricTag::v_pct) plan.specs.push_back(s);
    }
    const DoseGrid dose = two_level(50, 1, 66.4, 66.5);
    const BitMaskVolume rois({50, 1, 1}, std::vector<std::uint32_t>(50, 1u), {"PTV_70"});
    const ConstraintReport rep = constraint_report(dose, rois, plan);
    CHECK(rep.checks[0].reported == doctest::Approx(98.0));
    CHECK(*rep.checks[0].constraint_pass);
    CHECK(rep.all_constraints_pass());
    const ConstraintReport fail = constraint_report(two_level(50, 2, 66.4, 66.5), rois, plan);
    CHECK_FALSE(*fail.checks[0].constraint_pass);
    CHECK(fail.constraint_failures() == 1);
    CHECK(*fail.min_ptv_constraint_margin() == doctest::Approx(-2.0));
  }
  // SpinalCord D_0.03cc at 50.1 Gy.
  {
    PlanTemplate plan;
    for (const auto& s : full.specs) {
      if (s.roi == "SpinalCord" && s.kind.tag == MetricTag::d_cc) plan.specs.push_back(s);
    }
    REQUIRE(plan.specs.size() == 1);
    const BitMaskVolume rois({10, 1, 1}, std::vector<std::uint32_t>(10, 1u), {"SpinalCord"});
    CHECK_FALSE(*constraint_report(DoseGrid::constant({10, 1, 1}, {2, 2, 2}, 50.1), rois, plan).checks[0].constraint_pass);
    CHECK(*constraint_report(DoseGrid::constant({10, 1, 1}, {2, 2, 2}, 50.0), rois, plan).checks[0].constraint_pass);
  }
  // Zero dose: every <= bound passes, every >= bound fails.
  {
    const auto names = full.roi_order();
    const Dims d{3, 3, 3};
    const std::uint32_t all = static_cast<std::uint32_t>((std::uint64_t{1} << names.size()) - 1);
    const BitMaskVolume rois(d, std::vector<std::uint32_t>(d.count(), all), names);
    const ConstraintReport rep = constraint_report(DoseGrid::constant(d, {2, 2, 2}, 0.0), rois, full);
    for (const auto& c : rep.checks) {
      for (const auto& [bound, pass] : {std::pair{c.spec.aim, c.aim_pass}, std::pair{c.spec.constraint, c.constraint_pass}}) {
        if (!bound) continue;
        CHECK(*pass == (bound->op == BoundOp::le));
      }
    }
  }
}

TEST_CASE("empty ROI is skipped or raised") {
  PlanTemplate plan;
  plan.specs.push_back(testing::oar_spec("A", MetricKind::d_mean()));
  plan.specs.push_back(testing::oar_spec("B", MetricKind::d_mean()));
  const Dims d{2, 1, 1};
  const BitMaskVolume rois(d, {1u, 1u}, {"A", "B"});
  const DoseGrid g(d, {}, {1, 2});
  const ScoreReport r = score_pair(g, g, rois, plan);
  CHECK(r.skipped == std::vector<std::size_t>{1});
  CHECK(r.per_metric.size() == 1);
  CHECK_THROWS_AS(score_pair(g, g, rois, plan, "", EmptyRoiPolicy::error), EmptyRoiError);
  CHECK(constraint_report(g, rois, plan).checks[1].skipped);
}

TEST_CASE("Wilcoxon worked values") {
  const std::vector<double> pos{1, 2, 3, 4, 5};
  const WilcoxonResult r = wilcoxon_signed_rank(pos);
  CHECK(r.w_minus == 0.0);
  CHECK(r.w_plus == 15.0);
  CHECK(r.statistic == 0.0);
  CHECK(r.exact);
  CHECK(r.p_value == doctest::Approx(0.0625).epsilon(1e-14));
  const std::vector<double> mixed{-1, 2};
  double w = 0;
  CHECK(wilcoxon_signed_rank(mixed).p_value == doctest::Approx(brute_wilcoxon_p(mixed, &w)));
  const std::vector<double> zeros{0, 0, 0};
  const WilcoxonResult z = wilcoxon_signed_rank(zeros);
  CHECK(z.degenerate);
  CHECK(z.p_value == 1.0);
  const std::vector<std::pair<double, double>> pairs{{3, 1}, {5, 2}, {4, 1}, {9, 2}, {7, 1}};
  CHECK(wilcoxon_signed_rank(pairs).p_value == doctest::Approx(0.0625));
}

TEST_CASE("Wilcoxon exact mode matches enumeration") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + testing::below(rng, 12);
    std::vector<double> d(n);
    for (double& x : d) {
      // coarse grid so ties and zeros occur
      x = static_cast<double>(static_cast<int>(testing::below(rng, 11)) - 5) * 0.5;
    }
    double w = 0;
    const double p = brute_wilcoxon_p(d, &w);
    const WilcoxonResult r = wilcoxon_signed_rank(d);
    if (r.degenerate) {
      CHECK(std::all_of(d.begin(), d.end(), [](double x) { return x == 0.0; }));
      continue;
    }
    CHECK(r.exact);
    CHECK(r.w_plus == doctest::Approx(w));
    CHECK(r.p_value == doctest::Approx(p).epsilon(1e-12));
  }
}

TEST_CASE("Wilcoxon normal approximation for large n") {
  std::vector<double> d(40);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<double>(i + 1) * (i % 3 == 0 ? -1.0 : 1.0);
  const WilcoxonResult r = wilcoxon_signed_rank(d);
  CHECK_FALSE(r.exact);
  CHECK(r.w_plus + r.w_minus == doctest::Approx(40.0 * 41.0 / 2.0));
  // z from the untied variance n(n+1)(2n+1)/24, continuity-free
  const double mu = 40.0 * 41.0 / 4.0;
  const double sd = std::sqrt(40.0 * 41.0 * 81.0 / 24.0);
  const double z = (r.statistic - mu) / sd;
  CHECK(r.p_value == doctest::Approx(std::erfc(-z / std::sqrt(2.0))).epsilon(1e-2));
}

TEST_CASE("cohort summary") {
  std::vector<ScoreReport> reps(3);
  reps[0] = {"c", 1.0, 2.0, 3.0, {}, {}};
  reps[1] = {"a", 2.0, 4.0, 3.0, {}, {}};
  reps[2] = {"b", 6.0, 0.0, 3.0, {}, {}};
  const CohortSummary s = cohort_summary(reps);
  CHECK(s.patient_ids == std::vector<std::string>{"a", "b", "c"});
  CHECK(s.ptv.mean == doctest::Approx(3.0));
  CHECK(s.ptv.sd == doctest::Approx(std::sqrt((4.0 + 1.0 + 9.0) / 2.0)));
  CHECK(s.oar.sd == doctest::Approx(2.0));
  CHECK(s.dose.sd == 0.0);
  CHECK_FALSE(s.sd_undefined);
  const CohortSummary one = cohort_summary(std::span(reps.data(), 1));
  CHECK(one.ptv.mean == 1.0);
  CHECK(one.ptv.sd == 0.0);
  CHECK(one.sd_undefined);
}
