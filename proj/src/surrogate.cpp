#include "cdm/surrogate.hpp"

#include <cmath>

#include "cdm/error.hpp"
#include "cdm/kernels.hpp"

namespace cdm {

namespace {

void require_nonempty(std::span<const double> doses) {
  if (doses.empty()) throw EmptyRoiError("<dose list>");
}

}  // namespace

void SurrogateConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError("surrogate alpha must be positive");
  if (!(margin_m > 0.0)) throw ValidationError("surrogate margin must be positive");
  if (!(tolerance_eps > 0.0 && tolerance_eps < 1.0)) throw ValidationError("surrogate tolerance must lie in (0, 1)");
  if (!std::isfinite(threshold)) throw ValidationError("surrogate threshold must be finite");
}

double sigmoid_indicator(double z, double alpha) { return kernels::logistic(alpha * z); }

double v_approx(std::span<const double> doses, double threshold, double alpha) {
  require_nonempty(doses);
  return kernels::parallel::sigmoid_sum(doses, threshold, alpha) / static_cast<double>(doses.size());
}

double v_approx(std::span<const double> doses, const SurrogateConfig& cfg) {
  return v_approx(doses, cfg.threshold, cfg.alpha);
}

double pointwise_error(std::span<const double> doses, const SurrogateConfig& cfg) {
  require_nonempty(doses);
  double s = 0.0;
  for (double d : doses) {
    const double z = d - cfg.threshold;
    // |H - sigma| = sigma(-alpha|z|); at z = 0 that is 1 - 1/2.
    s += sigmoid_indicator(-std::abs(z), cfg.alpha);
  }
  return s / static_cast<double>(doses.size());
}

double margin_fraction_qm(std::span<const double> doses, double threshold, double margin_m) {
  require_nonempty(doses);
  if (!(margin_m > 0.0)) throw ValidationError("margin must be positive");
  return static_cast<double>(kernels::parallel::count_within(doses, threshold, margin_m)) /
         static_cast<double>(doses.size());
}

double error_bound(double alpha, double q_m, double margin_m) {
  return 0.5 * q_m + (1.0 - q_m) * std::exp(-alpha * margin_m);
}

double alpha_min(double q_m, double margin_m, double eps) {
  if (!(margin_m > 0.0)) throw ValidationError("margin must be positive");
  if (!(eps > 0.0 && eps < 1.0)) throw ValidationError("tolerance must lie in (0, 1)");
  if (!(q_m >= 0.0 && q_m <= 1.0)) throw ValidationError("q_m must lie in [0, 1]");
  if (eps <= 0.5 * q_m) {
    throw InfeasibleError("no finite alpha reaches tolerance " + std::to_string(eps) + " with q_m = " +
                              std::to_string(q_m) + "; the smallest feasible tolerance is above q_m/2 = " +
                              std::to_string(0.5 * q_m),
                          0.5 * q_m);
  }
  return std::log((1.0 - q_m) / (eps - 0.5 * q_m)) / margin_m;
}

AlphaSelection select_alpha_from_cohort(std::span<const CohortMember> cohort, double threshold, double margin_m,
                                        double eps) {
  if (cohort.empty()) throw ValidationError("alpha selection needs at least one dose volume");
  std::size_t pooled = 0;
  std::size_t inside = 0;
  for (const auto& member : cohort) {
    if (!member.dose) throw ValidationError("cohort member without a dose grid");
    std::vector<double> doses;
    if (member.rois) {
      if (member.rois->dims() != member.dose->dims()) {
        throw ValidationError("cohort bit-mask dims differ from its dose grid");
      }
      const RoiMembers m = decode_members(*member.rois, member.roi);
      if (m.empty()) throw EmptyRoiError(member.roi);
      doses = kernels::parallel::gather(member.dose->values(), m.index());
    } else {
      doses.assign(member.dose->values().begin(), member.dose->values().end());
    }
    if (member.dose->unit_scale() != 1.0) {
      for (double& d : doses) d *= member.dose->unit_scale();
    }
    pooled += doses.size();
    inside += kernels::parallel::count_within(doses, threshold, margin_m);
  }
  AlphaSelection out;
  out.pooled_voxels = pooled;
  out.margin_voxels = inside;
  out.q_m = static_cast<double>(inside) / static_cast<double>(pooled);
  const double alpha = alpha_min(out.q_m, margin_m, eps);
  if (!(alpha > 0.0)) {
    throw ValidationError("tolerance " + std::to_string(eps) + " is met by any slope; alpha_min = " +
                          std::to_string(alpha));
  }
  out.config = {alpha, margin_m, eps, threshold};
  out.bound_at_alpha = error_bound(alpha, out.q_m, margin_m);
  return out;
}

}  // namespace cdm
