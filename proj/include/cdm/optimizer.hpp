#pragma once

#include <string>
#include <vector>

#include "cdm/bitmask.hpp"
#include "cdm/cdm_loss.hpp"
#include "cdm/volume.hpp"

namespace cdm {

enum class InitRule { blur, uniform, zero };

struct OptimizerConfig {
  // Update is d <- clamp(d - step * |Omega| * grad): under the MAE term alone
  // every voxel moves `step` Gy per iteration.
  double step = 0.005;
  double max_move = 0.5;   // Gy; per-voxel clip on one update, 0 disables
  int iterations = 2000;
  double tolerance = 0.0;  // stop once L_total <= tolerance
  InitRule init = InitRule::blur;
  double uniform_dose = 40.0;  // Gy
  int blur_radius = 3;         // box half-width in voxels, applied per axis
  double dose_cap = 0.0;       // Gy; 0 means 1.2 x the largest prescription
  // Off: fixed-step projected subgradient steps. On: a step that raises L_total
  // is halved until it does not (up to max_halvings), then regrown toward `step`;
  // the run stops as "stalled" when no halving helps, e.g. at tied top-k voxels.
  bool backtracking = false;
  int max_halvings = 20;
  int divergence_patience = 50;  // fixed-step mode: consecutive increases tolerated

  void validate(const PlanTemplate& plan) const;
  double cap(const PlanTemplate& plan) const;
};

InitRule parse_init_rule(const std::string& s);
std::string to_string(InitRule r);

// Separable box blur with edge clamping, radius r per axis.
DoseGrid box_blur(const DoseGrid& g, int radius);
DoseGrid initial_dose(const DoseGrid& gt, const PlanTemplate& plan, const OptimizerConfig& cfg);

struct TraceRow {
  int iteration = 0;
  double step = 0.0;
  double l_total = 0.0;
  double l_cdm = 0.0;
  double l_mae = 0.0;
  std::vector<double> metrics;  // loss-side M_pred per template spec, Gy or fraction
};

struct OptimizeResult {
  DoseGrid final_dose;
  std::vector<TraceRow> trace;  // row 0 is the initial dose
  std::vector<std::string> metric_labels;
  int iterations_run = 0;
  std::string stop_reason;  // "tolerance", "budget", "stalled"
};

// Projected (sub)gradient descent on the voxel doses using total_loss gradients.
// With backtracking the recorded L_total is non-increasing. In fixed-step mode
// a run of `divergence_patience` consecutive increases throws DivergenceError.
OptimizeResult optimize_dose(const DoseGrid& init, const DoseGrid& gt, const BitMaskVolume& rois,
                             const LossConfig& loss, const OptimizerConfig& cfg);

std::string trace_csv(const OptimizeResult& r);

}  // namespace cdm
