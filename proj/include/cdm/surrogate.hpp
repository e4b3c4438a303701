#pragma once

#include <span>
#include <string>
#include <vector>

#include "cdm/bitmask.hpp"
#include "cdm/volume.hpp"

namespace cdm {

// Smooth replacement of the Heaviside step in V-metrics. All quantities in Gy
// (alpha in 1/Gy); callers working on normalized doses convert with unit_scale.
struct SurrogateConfig {
  double alpha = 1.0;        // slope, 1/Gy
  double margin_m = 0.5;     // Gy
  double tolerance_eps = 0.01;
  double threshold = 0.0;    // T, Gy

  void validate() const;
};

// Reference slopes for m = 0.5 Gy, eps = 1 %. The cohort q_m behind them is not
// published, so they are shipped as constants rather than re-derived.
inline constexpr double kAlphaPtv5425 = 209.0;
inline constexpr double kAlphaPtv70 = 176.0;
inline constexpr double kDefaultMargin = 0.5;
inline constexpr double kDefaultTolerance = 0.01;

// 1/(1+exp(-alpha*z)), saturating without overflow.
double sigmoid_indicator(double z, double alpha);

double v_approx(std::span<const double> doses, double threshold, double alpha);
double v_approx(std::span<const double> doses, const SurrogateConfig& cfg);

// delta(alpha) = mean |H(z_i) - sigma(z_i)| with H(0) = 1.
double pointwise_error(std::span<const double> doses, const SurrogateConfig& cfg);

// q_m = fraction of doses with |d - T| <= m.
double margin_fraction_qm(std::span<const double> doses, double threshold, double margin_m);

// q_m/2 + (1 - q_m) exp(-alpha m)
double error_bound(double alpha, double q_m, double margin_m);

// (1/m) ln((1 - q_m) / (eps - q_m/2)). Throws InfeasibleError when eps <= q_m/2.
double alpha_min(double q_m, double margin_m, double eps);

// One cohort member: a dose grid and the ROI voxels the V-metric is taken over.
struct CohortMember {
  const DoseGrid* dose = nullptr;
  const BitMaskVolume* rois = nullptr;  // null: every voxel of the grid
  std::string roi;
};

struct AlphaSelection {
  SurrogateConfig config;
  double q_m = 0.0;
  std::size_t pooled_voxels = 0;
  std::size_t margin_voxels = 0;
  double bound_at_alpha = 0.0;
};

// Pools member-voxel doses (Gy) over the cohort, computes q_m and the smallest
// slope meeting eps.
AlphaSelection select_alpha_from_cohort(std::span<const CohortMember> cohort, double threshold, double margin_m,
                                        double eps);

}  // namespace cdm
