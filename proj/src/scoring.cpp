#include "cdm/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "cdm/dvh_metrics.hpp"
#include "cdm/error.hpp"
#include "cdm/kernels.hpp"

namespace cdm {

namespace {

namespace par = kernels::parallel;

std::vector<double> roi_doses_gy(const DoseGrid& g, const RoiMembers& m) {
  std::vector<double> d = par::gather(g.values(), m.index());
  if (g.unit_scale() != 1.0) {
    for (double& x : d) x *= g.unit_scale();
  }
  return d;
}

double exact_metric(std::span<const double> doses_gy, const MetricSpec& spec, const PlanTemplate& plan, double vvox,
                    bool* clamped) {
  const double threshold = spec.kind.is_volume() ? volume_threshold_gy(spec, plan.prescriptions) : 0.0;
  return metric_on_doses(doses_gy, spec.kind, threshold, vvox, clamped);
}

BoundUnit reporting_unit(const MetricSpec& spec) {
  if (spec.kind.is_volume()) return BoundUnit::pct_volume;
  return spec.roi_class == RoiClass::ptv ? BoundUnit::pct_presc : BoundUnit::gy;
}

double in_unit(double value, const MetricSpec& spec, BoundUnit unit, const PlanTemplate& plan) {
  MetricValue mv;
  mv.spec = spec;
  mv.value = value;
  return to_bound_unit(mv, unit, plan.prescriptions);
}

void require_dims(const DoseGrid& g, const BitMaskVolume& rois) {
  if (g.dims() != rois.dims()) {
    throw ValidationError("bit-mask dims " + to_string(rois.dims()) + " differ from dose grid " + to_string(g.dims()));
  }
}

std::string unit_name(BoundUnit u) {
  switch (u) {
    case BoundUnit::pct_presc:
      return "% presc";
    case BoundUnit::pct_volume:
      return "% vol";
    default:
      return "Gy";
  }
}

SummaryStat mean_sd(const std::vector<double>& xs) {
  SummaryStat s;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) s.mean += x;
  s.mean /= n;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

}  // namespace

bool ConstraintReport::all_constraints_pass() const { return constraint_failures() == 0; }

bool ConstraintReport::ptv_constraints_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const ConstraintCheck& c) {
    return c.spec.roi_class != RoiClass::ptv || !c.constraint_pass || *c.constraint_pass;
  });
}

std::size_t ConstraintReport::constraint_failures() const {
  return static_cast<std::size_t>(std::count_if(checks.begin(), checks.end(), [](const ConstraintCheck& c) {
    return c.constraint_pass && !*c.constraint_pass;
  }));
}

std::optional<double> ConstraintReport::min_ptv_constraint_margin() const {
  std::optional<double> out;
  for (const auto& c : checks) {
    if (c.spec.roi_class != RoiClass::ptv || !c.constraint_margin) continue;
    out = out ? std::min(*out, *c.constraint_margin) : *c.constraint_margin;
  }
  return out;
}

ConstraintReport constraint_report(const DoseGrid& dose, const BitMaskVolume& rois, const PlanTemplate& plan,
                                   EmptyRoiPolicy policy) {
  require_dims(dose, rois);
  ConstraintReport rep;
  rep.checks.resize(plan.specs.size());
  for (const auto& roi : plan.roi_order()) {
    const RoiMembers m = decode_members(rois, roi);
    const auto ids = plan.specs_for(roi);
    if (m.empty()) {
      if (policy == EmptyRoiPolicy::error) throw EmptyRoiError(roi);
      for (std::size_t si : ids) {
        rep.checks[si].spec_index = si;
        rep.checks[si].spec = plan.specs[si];
        rep.checks[si].skipped = true;
      }
      continue;
    }
    const std::vector<double> d = roi_doses_gy(dose, m);
    for (std::size_t si : ids) {
      const MetricSpec& spec = plan.specs[si];
      ConstraintCheck& c = rep.checks[si];
      c.spec_index = si;
      c.spec = spec;
      c.value = exact_metric(d, spec, plan, dose.voxel_volume_cc(), &c.clamped);
      const BoundUnit unit = spec.constraint ? spec.constraint->unit : spec.aim ? spec.aim->unit : reporting_unit(spec);
      c.reported = in_unit(c.value, spec, unit, plan);
      if (spec.aim) {
        const double v = in_unit(c.value, spec, spec.aim->unit, plan);
        c.aim_margin = spec.aim->margin(v);
        c.aim_pass = *c.aim_margin >= 0.0;
      }
      if (spec.constraint) {
        const double v = in_unit(c.value, spec, spec.constraint->unit, plan);
        c.constraint_margin = spec.constraint->margin(v);
        c.constraint_pass = *c.constraint_margin >= 0.0;
      }
    }
  }
  return rep;
}

ScoreReport score_pair(const DoseGrid& pred, const DoseGrid& gt, const BitMaskVolume& rois, const PlanTemplate& plan,
                       const std::string& patient_id, EmptyRoiPolicy policy) {
  if (pred.dims() != gt.dims()) {
    throw ValidationError("pred dims " + to_string(pred.dims()) + " differ from gt dims " + to_string(gt.dims()));
  }
  require_dims(pred, rois);
  ScoreReport rep;
  rep.patient_id = patient_id;
  std::vector<MetricComparison> rows;
  double ptv_sum = 0.0;
  double oar_sum = 0.0;
  std::size_t ptv_rois = 0;
  std::size_t oar_rois = 0;
  for (const auto& roi : plan.roi_order()) {
    const auto ids = plan.specs_for(roi);
    const RoiMembers m = decode_members(rois, roi);
    if (m.empty()) {
      if (policy == EmptyRoiPolicy::error) throw EmptyRoiError(roi);
      rep.skipped.insert(rep.skipped.end(), ids.begin(), ids.end());
      continue;
    }
    const std::vector<double> dp = roi_doses_gy(pred, m);
    const std::vector<double> dg = roi_doses_gy(gt, m);
    double roi_sum = 0.0;
    for (std::size_t si : ids) {
      const MetricSpec& spec = plan.specs[si];
      const BoundUnit unit = reporting_unit(spec);
      const double vp = exact_metric(dp, spec, plan, pred.voxel_volume_cc(), nullptr);
      const double vg = exact_metric(dg, spec, plan, gt.voxel_volume_cc(), nullptr);
      MetricComparison row;
      row.spec_index = si;
      row.spec = spec;
      row.pred = in_unit(vp, spec, unit, plan);
      row.gt = in_unit(vg, spec, unit, plan);
      row.abs_diff = std::abs(row.pred - row.gt);
      row.unit = unit_name(unit);
      if (spec.aim) row.aim_pass = spec.aim->satisfied_by(in_unit(vp, spec, spec.aim->unit, plan));
      if (spec.constraint) {
        row.constraint_pass = spec.constraint->satisfied_by(in_unit(vp, spec, spec.constraint->unit, plan));
        row.gt_constraint_pass = spec.constraint->satisfied_by(in_unit(vg, spec, spec.constraint->unit, plan));
      }
      roi_sum += row.abs_diff;
      rows.push_back(std::move(row));
    }
    const double roi_mean = roi_sum / static_cast<double>(ids.size());
    if (plan.specs[ids.front()].roi_class == RoiClass::ptv) {
      ptv_sum += roi_mean;
      ++ptv_rois;
    } else {
      oar_sum += roi_mean;
      ++oar_rois;
    }
  }
  std::sort(rows.begin(), rows.end(),
            [](const MetricComparison& a, const MetricComparison& b) { return a.spec_index < b.spec_index; });
  std::sort(rep.skipped.begin(), rep.skipped.end());
  rep.per_metric = std::move(rows);
  rep.ptv_score = ptv_rois ? ptv_sum / static_cast<double>(ptv_rois) : 0.0;
  rep.oar_score = oar_rois ? oar_sum / static_cast<double>(oar_rois) : 0.0;

  const double n = static_cast<double>(pred.size());
  if (pred.unit_scale() == gt.unit_scale()) {
    rep.dose_score = par::abs_diff_sum(pred.values(), gt.values()) * pred.unit_scale() / n;
  } else {
    const DoseGrid p = rescale_dose(pred, 1.0);
    const DoseGrid g = rescale_dose(gt, 1.0);
    rep.dose_score = par::abs_diff_sum(p.values(), g.values()) / n;
  }
  return rep;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> differences) {
  if (differences.empty()) throw ValidationError("Wilcoxon test needs at least one pair");
  std::vector<double> d;
  for (double x : differences) {
    if (!std::isfinite(x)) throw ValidationError("non-finite difference in Wilcoxon input");
    if (x != 0.0) d.push_back(x);
  }
  WilcoxonResult r;
  r.n_effective = d.size();
  if (d.empty()) {
    r.degenerate = true;
    r.p_value = 1.0;
    return r;
  }
  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });

  // Doubled midranks stay integral.
  std::vector<long> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const long mid2 = static_cast<long>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = mid2;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  long wplus2 = 0;
  long total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += rank2[i];
    if (d[i] > 0.0) wplus2 += rank2[i];
  }
  r.w_plus = static_cast<double>(wplus2) / 2.0;
  r.w_minus = static_cast<double>(total2 - wplus2) / 2.0;
  r.statistic = std::min(r.w_plus, r.w_minus);

  if (n <= kWilcoxonExactMax) {
    r.exact = true;
    std::vector<double> ways(static_cast<std::size_t>(total2) + 1, 0.0);
    ways[0] = 1.0;
    long reach = 0;
    for (long rk : rank2) {
      for (long s = reach; s >= 0; --s) {
        if (ways[static_cast<std::size_t>(s)] != 0.0) ways[static_cast<std::size_t>(s + rk)] += ways[static_cast<std::size_t>(s)];
      }
      reach += rk;
    }
    const double all = std::ldexp(1.0, static_cast<int>(n));
    double lower = 0.0;
    double upper = 0.0;
    for (long s = 0; s <= total2; ++s) {
      if (s <= wplus2) lower += ways[static_cast<std::size_t>(s)];
      if (s >= wplus2) upper += ways[static_cast<std::size_t>(s)];
    }
    r.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / all);
  } else {
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    if (var <= 0.0) {
      r.p_value = 1.0;
    } else {
      const double z = (r.w_plus - mean) / std::sqrt(var);
      r.p_value = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
    }
  }
  return r;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs) {
  std::vector<double> d;
  d.reserve(pairs.size());
  for (const auto& [a, b] : pairs) d.push_back(a - b);
  return wilcoxon_signed_rank(d);
}

CohortSummary cohort_summary(std::span<const ScoreReport> reports) {
  if (reports.empty()) throw ValidationError("cohort summary needs at least one report");
  std::vector<const ScoreReport*> sorted;
  for (const auto& r : reports) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScoreReport* a, const ScoreReport* b) { return a->patient_id < b->patient_id; });
  CohortSummary s;
  std::vector<double> ptv;
  std::vector<double> oar;
  std::vector<double> dose;
  struct Tally {
    std::string roi;
    std::string label;
    std::size_t evaluated = 0;
    std::size_t aims = 0;
    std::size_t aim_pass = 0;
    std::size_t constraints = 0;
    std::size_t constraint_pass = 0;
  };
  std::map<std::size_t, Tally> tally;
  for (const ScoreReport* r : sorted) {
    s.patient_ids.push_back(r->patient_id);
    ptv.push_back(r->ptv_score);
    oar.push_back(r->oar_score);
    dose.push_back(r->dose_score);
    for (const auto& row : r->per_metric) {
      Tally& t = tally[row.spec_index];
      t.roi = row.spec.roi;
      t.label = row.spec.kind.label();
      ++t.evaluated;
      if (row.aim_pass) {
        ++t.aims;
        t.aim_pass += *row.aim_pass ? 1 : 0;
      }
      if (row.constraint_pass) {
        ++t.constraints;
        t.constraint_pass += *row.constraint_pass ? 1 : 0;
      }
    }
  }
  s.ptv = mean_sd(ptv);
  s.oar = mean_sd(oar);
  s.dose = mean_sd(dose);
  s.sd_undefined = sorted.size() == 1;
  for (const auto& [idx, t] : tally) {
    SpecPassRate p;
    p.spec_index = idx;
    p.roi = t.roi;
    p.label = t.label;
    p.evaluated = t.evaluated;
    if (t.aims) p.aim_rate = static_cast<double>(t.aim_pass) / static_cast<double>(t.aims);
    if (t.constraints) p.constraint_rate = static_cast<double>(t.constraint_pass) / static_cast<double>(t.constraints);
    s.pass_rates.push_back(std::move(p));
  }
  return s;
}

}  // namespace cdm
