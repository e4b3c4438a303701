#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cdm/bitmask.hpp"
#include "cdm/plan_template.hpp"
#include "cdm/surrogate.hpp"
#include "cdm/volume.hpp"

namespace cdm {

enum class EmptyRoiPolicy { skip, error };

struct LossConfig {
  PlanTemplate plan;
  // One entry per plan spec; engaged for every volume metric. Slope in 1/Gy, threshold in Gy.
  std::vector<std::optional<SurrogateConfig>> surrogates;
  double lambda1 = kLambdaMae;
  double lambda2 = kLambdaCdm;
  bool use_surrogate_for_gt = true;
  EmptyRoiPolicy empty_roi = EmptyRoiPolicy::skip;
};

// Lambdas come from the plan. A volume metric takes its slope from the MetricSpec's
// `alpha`; otherwise it is selected from `alpha_cohort` (usually the reference
// dose) with margin m and tolerance eps. Specs left without a slope make
// cdm_loss throw unless their ROI is skipped as empty.
LossConfig make_loss_config(const PlanTemplate& plan, const DoseGrid* alpha_cohort = nullptr,
                            const BitMaskVolume* rois = nullptr, double margin_m = kDefaultMargin,
                            double eps = kDefaultTolerance);

struct MetricTerm {
  std::size_t spec_index = 0;
  std::string roi;
  std::string label;
  double m_pred = 0.0;  // native units of the dose grids; fractions for volume metrics
  double m_gt = 0.0;
  double weighted_abs = 0.0;  // w |m_pred - m_gt|
  std::size_t roi_voxels = 0;
  std::size_t selected_voxel = SIZE_MAX;  // selection metrics only
};

struct LossResult {
  double l_cdm = 0.0;
  double l_mae = 0.0;
  double l_total = 0.0;
  std::vector<MetricTerm> terms;     // template order
  std::vector<std::size_t> skipped;  // spec indices dropped for empty ROIs
  std::optional<std::vector<double>> gradient;  // dL/dpred per voxel, native units
};

// Mean absolute voxel difference; subgradient sign(pred-gt)/|Omega| with sign(0) = 0.
LossResult mae_loss(const DoseGrid& pred, const DoseGrid& gt, bool with_grad);

// Weighted sum of |M_pred - M_gt| over the plan's metrics. ROIs are decoded one
// at a time from the bit-mask and released before the next one.
LossResult cdm_loss(const DoseGrid& pred, const DoseGrid& gt, const BitMaskVolume& rois, const LossConfig& cfg,
                    bool with_grad);

// lambda1 * L_MAE + lambda2 * L_CDM, gradient combined the same way.
LossResult total_loss(const DoseGrid& pred, const DoseGrid& gt, const BitMaskVolume& rois, const LossConfig& cfg,
                      bool with_grad);

struct FdOptions {
  std::size_t probe_count = 64;
  double step = 1e-4;
  std::uint64_t seed = 1;
  bool include_selected = true;  // probe every selection metric's selected voxel first
  bool roi_voxels_only = true;   // draw random probes from the union of plan ROIs
  std::vector<std::size_t> extra_probes;
};

struct FdProbe {
  std::size_t voxel = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  std::string kink;  // empty for smooth probes
};

struct FdReport {
  double step = 0.0;
  double abs_floor = 0.0;  // relative-error denominator floor used
  std::size_t smooth_probes = 0;
  std::size_t kink_probes = 0;
  double max_rel_error = 0.0;   // smooth probes only
  double mean_rel_error = 0.0;  // smooth probes only
  double max_rel_error_kinks = 0.0;
  std::vector<FdProbe> probes;
};

// Relative error denominator floor; probes whose analytic and numeric values are
// both below it are compared in absolute terms.
inline constexpr double kFdAbsFloor = 1e-9;
inline constexpr double kFdResolvedRel = 1e-4;

// A central difference of a loss near `loss` carries rounding noise of about
// eps_mach * |loss| / step. The floor is the gradient magnitude at which that
// noise is kFdResolvedRel of the value, and never below kFdAbsFloor.
double fd_resolution_floor(double loss, double step);

// Central differences of total_loss against its analytic gradient. Probes at
// |pred-gt| <= h, near rank ties, with |M_pred - M_gt| within reach of h, or with
// |alpha z| > 30 are reported separately as kinks.
FdReport finite_difference_check(const DoseGrid& pred, const DoseGrid& gt, const BitMaskVolume& rois,
                                 const LossConfig& cfg, const FdOptions& opts);

}  // namespace cdm
