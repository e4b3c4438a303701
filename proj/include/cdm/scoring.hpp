#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cdm/bitmask.hpp"
#include "cdm/cdm_loss.hpp"
#include "cdm/plan_template.hpp"
#include "cdm/volume.hpp"

namespace cdm {

// One template metric checked against its aim and constraint on a single dose.
struct ConstraintCheck {
  std::size_t spec_index = 0;
  MetricSpec spec;
  double value = 0.0;      // exact metric, Gy or fraction
  double reported = 0.0;   // `value` in the reporting unit of the bound(s)
  std::optional<bool> aim_pass;
  std::optional<bool> constraint_pass;
  std::optional<double> aim_margin;
  std::optional<double> constraint_margin;
  bool clamped = false;
  bool skipped = false;  // empty ROI under the skip policy
};

struct ConstraintReport {
  std::vector<ConstraintCheck> checks;  // template order

  bool all_constraints_pass() const;
  bool ptv_constraints_pass() const;
  std::size_t constraint_failures() const;
  // Smallest signed constraint margin over PTV specs, in each bound's unit.
  std::optional<double> min_ptv_constraint_margin() const;
};

ConstraintReport constraint_report(const DoseGrid& dose, const BitMaskVolume& rois, const PlanTemplate& plan,
                                   EmptyRoiPolicy policy = EmptyRoiPolicy::skip);

struct MetricComparison {
  std::size_t spec_index = 0;
  MetricSpec spec;
  double pred = 0.0;  // reporting unit
  double gt = 0.0;
  double abs_diff = 0.0;
  std::string unit;   // "% presc", "% vol" or "Gy"
  std::optional<bool> aim_pass;         // pred against its aim
  std::optional<bool> constraint_pass;  // pred against its constraint
  std::optional<bool> gt_constraint_pass;
};

struct ScoreReport {
  std::string patient_id;
  double ptv_score = 0.0;   // percent of prescription
  double oar_score = 0.0;   // Gy
  double dose_score = 0.0;  // Gy
  std::vector<MetricComparison> per_metric;  // template order, skipped specs omitted
  std::vector<std::size_t> skipped;
};

// PTV metrics differenced in percent of prescription (V-metrics in percent
// volume), OAR dose metrics in Gy (OAR V-metrics in percent volume); each score
// is the mean over ROIs of the per-ROI mean |delta|. Exact metrics only.
ScoreReport score_pair(const DoseGrid& pred, const DoseGrid& gt, const BitMaskVolume& rois, const PlanTemplate& plan,
                       const std::string& patient_id = "", EmptyRoiPolicy policy = EmptyRoiPolicy::skip);

struct WilcoxonResult {
  double w_plus = 0.0;
  double w_minus = 0.0;
  double statistic = 0.0;  // min(W+, W-)
  double p_value = 1.0;    // two-tailed
  std::size_t n_effective = 0;
  bool exact = false;
  bool degenerate = false;  // every difference zero; p = 1 by convention
};

inline constexpr std::size_t kWilcoxonExactMax = 25;

// Zero differences dropped, tied magnitudes mid-ranked. Exact null
// distribution up to kWilcoxonExactMax effective pairs, normal approximation
// with tie correction beyond.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> differences);
WilcoxonResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs);

struct SummaryStat {
  double mean = 0.0;
  double sd = 0.0;  // sample (n-1) standard deviation
};

struct SpecPassRate {
  std::size_t spec_index = 0;
  std::string roi;
  std::string label;
  std::size_t evaluated = 0;
  std::optional<double> aim_rate;
  std::optional<double> constraint_rate;
};

struct CohortSummary {
  std::vector<std::string> patient_ids;  // sorted
  SummaryStat ptv;
  SummaryStat oar;
  SummaryStat dose;
  bool sd_undefined = false;  // single case: sd reported as 0
  std::vector<SpecPassRate> pass_rates;
};

CohortSummary cohort_summary(std::span<const ScoreReport> reports);

}  // namespace cdm
