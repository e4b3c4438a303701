#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cdm/bitmask.hpp"
#include "cdm/plan_template.hpp"
#include "cdm/volume.hpp"

namespace cdm {

// Doses of the N member voxels of one ROI, in ascending z-major voxel order.
struct RoiDoses {
  std::string roi;
  std::vector<std::size_t> index;  // voxel index of each entry
  std::vector<double> dose;
  std::size_t size() const { return dose.size(); }
};

// All overloads throw EmptyRoiError when the ROI has no voxels.
RoiDoses gather_roi_doses(const DoseGrid& g, const RoiMembers& members);
RoiDoses gather_roi_doses(const DoseGrid& g, const RoiMask& mask);
RoiDoses gather_roi_doses(const DoseGrid& g, const BitMaskVolume& rois, const std::string& roi);

// An order statistic d(k) of a dose list, k counted from the hottest voxel.
struct Selection {
  double value = 0.0;
  std::size_t rank = 1;      // k, 1-based
  std::size_t position = 0;  // list position of the voxel carrying the value (smallest on ties)
  bool clamped = false;      // k exceeded N and was clamped
};

// k-th largest value via nth_element (no full sort). 1 <= k <= doses.size().
Selection select_kth_largest(std::span<const double> doses, std::size_t k);

// ceil(x*N/100) and ceil(x/V_voxel); values within 1e-9 of an integer snap to it.
std::size_t rank_for_percent(double x_percent, std::size_t n);
std::size_t rank_for_cc(double x_cc, double voxel_volume_cc, std::size_t n, bool* clamped);

Selection d_quantile_pct(std::span<const double> doses, double x_percent);
Selection d_hottest_cc(std::span<const double> doses, double x_cc, double voxel_volume_cc);

struct Extrema {
  double d_max = 0.0;
  double d_min = 0.0;
};
Extrema d_extrema(std::span<const double> doses);
double d_mean(std::span<const double> doses);

// Fraction of doses >= threshold (a dose exactly at the threshold counts).
double v_exact(std::span<const double> doses, double threshold);

struct DvhPoint {
  double threshold = 0.0;
  double fraction = 0.0;
};
// Thresholds 0, w, 2w, ... up to max_dose inclusive.
std::vector<DvhPoint> cumulative_dvh(std::span<const double> doses, double bin_width, double max_dose);

struct MetricValue {
  MetricSpec spec;
  double value = 0.0;  // Gy for dose metrics, fraction in [0,1] for volume metrics
  std::size_t roi_voxel_count = 0;
  bool clamped = false;
};

// Threshold in Gy for a volume metric: x% of the owning prescription, or x Gy.
double volume_threshold_gy(const MetricSpec& spec, const std::map<std::string, double>& prescriptions);

// Exact metric on physical dose (Gy).
MetricValue evaluate_metric(const DoseGrid& g, const RoiMembers& members, const MetricSpec& spec,
                            const std::map<std::string, double>& prescriptions);
MetricValue evaluate_metric(const DoseGrid& g, const BitMaskVolume& rois, const MetricSpec& spec,
                            const std::map<std::string, double>& prescriptions);

// Exact value on an already-gathered dose list given in Gy.
double metric_on_doses(std::span<const double> doses_gy, const MetricKind& kind, double threshold_gy,
                       double voxel_volume_cc, bool* clamped = nullptr);

// Converts an exact metric value to a bound's unit (percent of prescription, Gy or percent volume).
double to_bound_unit(const MetricValue& v, BoundUnit unit, const std::map<std::string, double>& prescriptions);

}  // namespace cdm
