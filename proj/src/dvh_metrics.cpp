#include "cdm/dvh_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "cdm/error.hpp"
#include "cdm/kernels.hpp"

namespace cdm {

namespace {

void require_nonempty(std::span<const double> doses, const char* what) {
  if (doses.empty()) throw EmptyRoiError(std::string("<dose list for ") + what + ">");
}

std::size_t snapped_ceil(double r) {
  const double nearest = std::round(r);
  if (std::abs(r - nearest) <= 1e-9 * std::max(1.0, std::abs(r))) return static_cast<std::size_t>(std::max(0.0, nearest));
  return static_cast<std::size_t>(std::max(0.0, std::ceil(r)));
}

RoiDoses gather(const DoseGrid& g, const std::string& roi, std::span<const std::size_t> index) {
  if (index.empty()) throw EmptyRoiError(roi);
  RoiDoses out;
  out.roi = roi;
  out.index.assign(index.begin(), index.end());
  out.dose = kernels::parallel::gather(g.values(), index);
  return out;
}

}  // namespace

RoiDoses gather_roi_doses(const DoseGrid& g, const RoiMembers& members) {
  if (!members.empty() && members.index().back() >= g.size()) {
    throw ValidationError("ROI '" + members.roi() + "' does not fit dose grid " + to_string(g.dims()));
  }
  return gather(g, members.roi(), members.index());
}

RoiDoses gather_roi_doses(const DoseGrid& g, const RoiMask& mask) {
  if (mask.dims != g.dims()) {
    throw ValidationError("mask '" + mask.name + "' dims " + to_string(mask.dims) + " differ from dose grid " +
                          to_string(g.dims()));
  }
  const RoiMembers members = mask_members(mask);
  return gather(g, mask.name, members.index());
}

RoiDoses gather_roi_doses(const DoseGrid& g, const BitMaskVolume& rois, const std::string& roi) {
  if (rois.dims() != g.dims()) {
    throw ValidationError("bit-mask dims " + to_string(rois.dims()) + " differ from dose grid " + to_string(g.dims()));
  }
  const RoiMembers members = decode_members(rois, roi);
  return gather(g, roi, members.index());
}

Selection select_kth_largest(std::span<const double> doses, std::size_t k) {
  require_nonempty(doses, "selection");
  if (k < 1 || k > doses.size()) {
    throw ValidationError("rank " + std::to_string(k) + " outside [1, " + std::to_string(doses.size()) + "]");
  }
  std::vector<double> work(doses.begin(), doses.end());
  std::nth_element(work.begin(), work.begin() + static_cast<std::ptrdiff_t>(k - 1), work.end(), std::greater<>());
  Selection s;
  s.value = work[k - 1];
  s.rank = k;
  s.position = static_cast<std::size_t>(std::find(doses.begin(), doses.end(), s.value) - doses.begin());
  return s;
}

std::size_t rank_for_percent(double x_percent, std::size_t n) {
  if (!(x_percent > 0.0 && x_percent <= 100.0)) {
    throw ValidationError("D_x% needs 0 < x <= 100, got " + std::to_string(x_percent));
  }
  if (n == 0) throw EmptyRoiError("<dose list>");
  const std::size_t k = snapped_ceil(x_percent * static_cast<double>(n) / 100.0);
  return std::clamp<std::size_t>(k, 1, n);
}

std::size_t rank_for_cc(double x_cc, double voxel_volume_cc, std::size_t n, bool* clamped) {
  if (!(x_cc > 0.0)) throw ValidationError("D_xcc needs x > 0, got " + std::to_string(x_cc));
  if (!(voxel_volume_cc > 0.0)) throw ValidationError("voxel volume must be positive");
  if (n == 0) throw EmptyRoiError("<dose list>");
  std::size_t k = std::max<std::size_t>(1, snapped_ceil(x_cc / voxel_volume_cc));
  const bool over = k > n;
  if (over) k = n;
  if (clamped) *clamped = over;
  return k;
}

Selection d_quantile_pct(std::span<const double> doses, double x_percent) {
  require_nonempty(doses, "D_x%");
  return select_kth_largest(doses, rank_for_percent(x_percent, doses.size()));
}

Selection d_hottest_cc(std::span<const double> doses, double x_cc, double voxel_volume_cc) {
  require_nonempty(doses, "D_xcc");
  bool clamped = false;
  Selection s = select_kth_largest(doses, rank_for_cc(x_cc, voxel_volume_cc, doses.size(), &clamped));
  s.clamped = clamped;
  return s;
}

Extrema d_extrema(std::span<const double> doses) {
  require_nonempty(doses, "D_max/D_min");
  const auto [lo, hi] = std::minmax_element(doses.begin(), doses.end());
  return {*hi, *lo};
}

double d_mean(std::span<const double> doses) {
  require_nonempty(doses, "D_mean");
  return kernels::parallel::sum(doses) / static_cast<double>(doses.size());
}

double v_exact(std::span<const double> doses, double threshold) {
  require_nonempty(doses, "V_x");
  return static_cast<double>(kernels::parallel::count_at_least(doses, threshold)) / static_cast<double>(doses.size());
}

std::vector<DvhPoint> cumulative_dvh(std::span<const double> doses, double bin_width, double max_dose) {
  require_nonempty(doses, "DVH");
  if (!(bin_width > 0.0)) throw ValidationError("DVH bin width must be positive");
  if (!(max_dose >= 0.0)) throw ValidationError("DVH max dose must be nonnegative");
  std::vector<double> sorted(doses.begin(), doses.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  std::vector<DvhPoint> curve;
  const auto bins = static_cast<std::size_t>(std::floor(max_dose / bin_width + 1e-9));
  curve.reserve(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) {
    const double t = static_cast<double>(b) * bin_width;
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
    curve.push_back({t, (n - static_cast<double>(below)) / n});
  }
  return curve;
}

double volume_threshold_gy(const MetricSpec& spec, const std::map<std::string, double>& prescriptions) {
  if (spec.kind.tag == MetricTag::v_gy) return spec.kind.param;
  if (spec.kind.tag != MetricTag::v_pct) throw ValidationError("threshold requested for a dose metric");
  auto it = prescriptions.find(spec.roi);
  if (it == prescriptions.end()) throw ValidationError("missing prescription for '" + spec.roi + "'");
  return spec.kind.param * it->second / 100.0;
}

double metric_on_doses(std::span<const double> doses_gy, const MetricKind& kind, double threshold_gy,
                       double voxel_volume_cc, bool* clamped) {
  if (clamped) *clamped = false;
  switch (kind.tag) {
    case MetricTag::d_mean:
      return d_mean(doses_gy);
    case MetricTag::d_max:
      return d_extrema(doses_gy).d_max;
    case MetricTag::d_min:
      return d_extrema(doses_gy).d_min;
    case MetricTag::d_pct:
      return d_quantile_pct(doses_gy, kind.param).value;
    case MetricTag::d_cc: {
      const Selection s = d_hottest_cc(doses_gy, kind.param, voxel_volume_cc);
      if (clamped) *clamped = s.clamped;
      return s.value;
    }
    default:
      return v_exact(doses_gy, threshold_gy);
  }
}

MetricValue evaluate_metric(const DoseGrid& g, const RoiMembers& members, const MetricSpec& spec,
                            const std::map<std::string, double>& prescriptions) {
  RoiDoses rd = gather_roi_doses(g, members);
  if (g.unit_scale() != 1.0) {
    for (double& d : rd.dose) d *= g.unit_scale();
  }
  const double threshold = spec.kind.is_volume() ? volume_threshold_gy(spec, prescriptions) : 0.0;
  MetricValue out;
  out.spec = spec;
  out.roi_voxel_count = rd.size();
  out.value = metric_on_doses(rd.dose, spec.kind, threshold, g.voxel_volume_cc(), &out.clamped);
  return out;
}

MetricValue evaluate_metric(const DoseGrid& g, const BitMaskVolume& rois, const MetricSpec& spec,
                            const std::map<std::string, double>& prescriptions) {
  if (rois.dims() != g.dims()) {
    throw ValidationError("bit-mask dims " + to_string(rois.dims()) + " differ from dose grid " + to_string(g.dims()));
  }
  const RoiMembers members = decode_members(rois, spec.roi);
  return evaluate_metric(g, members, spec, prescriptions);
}

double to_bound_unit(const MetricValue& v, BoundUnit unit, const std::map<std::string, double>& prescriptions) {
  switch (unit) {
    case BoundUnit::pct_volume:
      return v.value * 100.0;
    case BoundUnit::gy:
      return v.value;
    default: {
      auto it = prescriptions.find(v.spec.roi);
      if (it == prescriptions.end()) throw ValidationError("missing prescription for '" + v.spec.roi + "'");
      return v.value / it->second * 100.0;
    }
  }
}

}  // namespace cdm
