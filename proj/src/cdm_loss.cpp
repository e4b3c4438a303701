#include "cdm/cdm_loss.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <limits>
#include <set>

#include "cdm/dvh_metrics.hpp"
#include "cdm/error.hpp"
#include "cdm/kernels.hpp"

namespace cdm {

namespace {

namespace par = kernels::parallel;

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Loss inputs as raw spans so the finite-difference probe can perturb a copy
// without re-validating a DoseGrid.
struct Inputs {
  std::span<const double> pred;
  std::span<const double> gt;
  Dims dims;
  Spacing spacing;
  double unit_scale = 1.0;
};

Inputs inputs_of(const DoseGrid& pred, const DoseGrid& gt) {
  if (pred.dims() != gt.dims()) {
    throw ValidationError("pred dims " + to_string(pred.dims()) + " differ from gt dims " + to_string(gt.dims()));
  }
  if (pred.unit_scale() != gt.unit_scale()) {
    throw ValidationError("pred unit_scale " + std::to_string(pred.unit_scale()) + " differs from gt unit_scale " +
                          std::to_string(gt.unit_scale()));
  }
  return {pred.values(), gt.values(), pred.dims(), pred.spacing(), pred.unit_scale()};
}

std::size_t selection_rank(const MetricKind& kind, std::size_t n, double voxel_volume_cc) {
  switch (kind.tag) {
    case MetricTag::d_max:
      return 1;
    case MetricTag::d_min:
      return n;
    case MetricTag::d_pct:
      return rank_for_percent(kind.param, n);
    default:
      return rank_for_cc(kind.param, voxel_volume_cc, n, nullptr);
  }
}

void eval_mae(const Inputs& in, std::vector<double>* grad, LossResult& out) {
  const double n = static_cast<double>(in.pred.size());
  out.l_mae = par::abs_diff_sum(in.pred, in.gt) / n;
  if (grad) par::abs_diff_grad(in.pred, in.gt, 1.0 / n, *grad);
}

void eval_cdm(const Inputs& in, const BitMaskVolume& rois, const LossConfig& cfg, std::vector<double>* grad,
              LossResult& out) {
  if (rois.dims() != in.dims) {
    throw ValidationError("bit-mask dims " + to_string(rois.dims()) + " differ from dose dims " + to_string(in.dims));
  }
  const PlanTemplate& plan = cfg.plan;
  if (!cfg.surrogates.empty() && cfg.surrogates.size() != plan.specs.size()) {
    throw ValidationError("loss config has " + std::to_string(cfg.surrogates.size()) + " surrogate slots for " +
                          std::to_string(plan.specs.size()) + " specs");
  }
  const double vvox = in.spacing.voxel_volume_cc();
  std::vector<MetricTerm> terms;
  std::vector<double> slope;

  for (const auto& roi : plan.roi_order()) {
    const auto spec_ids = plan.specs_for(roi);
    const RoiMembers members = decode_members(rois, roi);
    if (members.empty()) {
      if (cfg.empty_roi == EmptyRoiPolicy::error) throw EmptyRoiError(roi);
      out.skipped.insert(out.skipped.end(), spec_ids.begin(), spec_ids.end());
      continue;
    }
    const auto idx = members.index();
    const std::vector<double> pd = par::gather(in.pred, idx);
    const std::vector<double> gd = par::gather(in.gt, idx);
    const std::size_t n = pd.size();
    const double inv_n = 1.0 / static_cast<double>(n);

    for (std::size_t si : spec_ids) {
      const MetricSpec& spec = plan.specs[si];
      const double w = spec.loss_weight;
      MetricTerm t;
      t.spec_index = si;
      t.roi = roi;
      t.label = spec.kind.label();
      t.roi_voxels = n;

      if (spec.kind.tag == MetricTag::d_mean) {
        t.m_pred = par::sum(pd) * inv_n;
        t.m_gt = par::sum(gd) * inv_n;
        if (grad) {
          const double c = w * sign(t.m_pred - t.m_gt) * inv_n;
          if (c != 0.0) {
            for (std::size_t i = 0; i < n; ++i) (*grad)[idx[i]] += c;
          }
        }
      } else if (spec.kind.is_selection()) {
        const std::size_t k = selection_rank(spec.kind, n, vvox);
        const Selection sp = select_kth_largest(pd, k);
        t.m_pred = sp.value;
        t.m_gt = select_kth_largest(gd, k).value;
        t.selected_voxel = idx[sp.position];
        if (grad) (*grad)[t.selected_voxel] += w * sign(t.m_pred - t.m_gt);
      } else {
        if (cfg.surrogates.empty() || !cfg.surrogates[si]) {
          throw ValidationError("missing surrogate config for spec '" + roi + " " + t.label + "'");
        }
        const SurrogateConfig& sc = *cfg.surrogates[si];
        const double alpha = sc.alpha * in.unit_scale;
        const double threshold = sc.threshold / in.unit_scale;
        t.m_pred = par::sigmoid_sum(pd, threshold, alpha) * inv_n;
        t.m_gt = cfg.use_surrogate_for_gt
                     ? par::sigmoid_sum(gd, threshold, alpha) * inv_n
                     : static_cast<double>(par::count_at_least(gd, threshold)) * inv_n;
        if (grad) {
          const double c = w * sign(t.m_pred - t.m_gt) * inv_n;
          if (c != 0.0) {
            slope.resize(n);
            par::sigmoid_slope(pd, threshold, alpha, slope);
            for (std::size_t i = 0; i < n; ++i) (*grad)[idx[i]] += c * slope[i];
          }
        }
      }
      t.weighted_abs = w * std::abs(t.m_pred - t.m_gt);
      terms.push_back(std::move(t));
    }
  }
  std::sort(terms.begin(), terms.end(), [](const MetricTerm& a, const MetricTerm& b) { return a.spec_index < b.spec_index; });
  std::sort(out.skipped.begin(), out.skipped.end());
  out.l_cdm = 0.0;
  for (const auto& t : terms) out.l_cdm += t.weighted_abs;
  out.terms = std::move(terms);
}

LossResult eval_total(const Inputs& in, const BitMaskVolume& rois, const LossConfig& cfg, bool with_grad) {
  LossResult out;
  const std::size_t nvox = in.pred.size();
  std::vector<double> g_mae;
  std::vector<double> g_cdm;
  if (with_grad) {
    g_mae.assign(nvox, 0.0);
    g_cdm.assign(nvox, 0.0);
  }
  eval_mae(in, with_grad ? &g_mae : nullptr, out);
  eval_cdm(in, rois, cfg, with_grad ? &g_cdm : nullptr, out);
  out.l_total = cfg.lambda1 * out.l_mae + cfg.lambda2 * out.l_cdm;
  if (with_grad) {
    std::vector<double> g(nvox);
    for (std::size_t v = 0; v < nvox; ++v) g[v] = cfg.lambda1 * g_mae[v] + cfg.lambda2 * g_cdm[v];
    out.gradient = std::move(g);
  }
  return out;
}

}  // namespace

LossConfig make_loss_config(const PlanTemplate& plan, const DoseGrid* alpha_cohort, const BitMaskVolume* rois,
                            double margin_m, double eps) {
  validate_template(plan);
  LossConfig cfg;
  cfg.plan = plan;
  cfg.lambda1 = plan.lambda_mae;
  cfg.lambda2 = plan.lambda_cdm;
  cfg.surrogates.resize(plan.specs.size());
  for (std::size_t i = 0; i < plan.specs.size(); ++i) {
    const MetricSpec& s = plan.specs[i];
    if (!s.kind.is_volume()) continue;
    const double threshold = volume_threshold_gy(s, plan.prescriptions);
    if (s.alpha) {
      cfg.surrogates[i] = SurrogateConfig{*s.alpha, margin_m, eps, threshold};
    } else if (alpha_cohort) {
      if (rois && rois->contains(s.roi) && roi_voxel_count(*rois, s.roi) == 0) continue;
      const CohortMember member{alpha_cohort, rois, s.roi};
      cfg.surrogates[i] = select_alpha_from_cohort(std::span(&member, 1), threshold, margin_m, eps).config;
    }
  }
  return cfg;
}

LossResult mae_loss(const DoseGrid& pred, const DoseGrid& gt, bool with_grad) {
  const Inputs in = inputs_of(pred, gt);
  LossResult out;
  std::vector<double> g;
  if (with_grad) g.assign(in.pred.size(), 0.0);
  eval_mae(in, with_grad ? &g : nullptr, out);
  out.l_total = out.l_mae;
  if (with_grad) out.gradient = std::move(g);
  return out;
}

LossResult cdm_loss(const DoseGrid& pred, const DoseGrid& gt, const BitMaskVolume& rois, const LossConfig& cfg,
                    bool with_grad) {
  const Inputs in = inputs_of(pred, gt);
  LossResult out;
  std::vector<double> g;
  if (with_grad) g.assign(in.pred.size(), 0.0);
  eval_cdm(in, rois, cfg, with_grad ? &g : nullptr, out);
  out.l_total = out.l_cdm;
  if (with_grad) out.gradient = std::move(g);
  return out;
}

LossResult total_loss(const DoseGrid& pred, const DoseGrid& gt, const BitMaskVolume& rois, const LossConfig& cfg,
                      bool with_grad) {
  if (!(cfg.lambda1 >= 0.0) || !(cfg.lambda2 >= 0.0)) throw ValidationError("lambda weights must be nonnegative");
  return eval_total(inputs_of(pred, gt), rois, cfg, with_grad);
}

double fd_resolution_floor(double loss, double step) {
  const double noise = std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(loss)) / step;
  return std::max(kFdAbsFloor, noise / kFdResolvedRel);
}

FdReport finite_difference_check(const DoseGrid& pred, const DoseGrid& gt, const BitMaskVolume& rois,
                                 const LossConfig& cfg, const FdOptions& opts) {
  if (!(opts.step > 0.0)) throw ValidationError("finite-difference step must be positive");
  const Inputs base = inputs_of(pred, gt);
  const LossResult ref = eval_total(base, rois, cfg, true);
  const std::vector<double>& analytic = *ref.gradient;
  const double h = opts.step;

  // Probe selection: selected voxels first, then explicit probes, then random draws.
  std::vector<std::size_t> probes;
  std::set<std::size_t> taken;
  auto add = [&](std::size_t v) {
    if (v < base.pred.size() && probes.size() < opts.probe_count && taken.insert(v).second) probes.push_back(v);
  };
  if (opts.include_selected) {
    for (const auto& t : ref.terms) {
      if (t.selected_voxel != SIZE_MAX) add(t.selected_voxel);
    }
  }
  for (std::size_t v : opts.extra_probes) add(v);
  std::vector<std::size_t> pool;
  if (opts.roi_voxels_only) {
    std::vector<std::uint8_t> in_union(base.pred.size(), 0);
    for (const auto& roi : cfg.plan.roi_order()) {
      const RoiMembers m = decode_members(rois, roi);
      for (std::size_t v : m.index()) in_union[v] = 1;
    }
    for (std::size_t v = 0; v < in_union.size(); ++v) {
      if (in_union[v]) pool.push_back(v);
    }
  } else {
    pool.resize(base.pred.size());
    for (std::size_t v = 0; v < pool.size(); ++v) pool[v] = v;
  }
  std::mt19937_64 rng(opts.seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  for (std::size_t v : pool) {
    if (probes.size() >= opts.probe_count) break;
    add(v);
  }

  // Kink classification, one decoded ROI at a time.
  std::vector<std::string> kink(probes.size());
  auto mark = [&](std::size_t p, const char* why) {
    if (kink[p].empty()) kink[p] = why;
  };
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const std::size_t v = probes[p];
    if (cfg.lambda1 > 0.0 && std::abs(base.pred[v] - base.gt[v]) <= h) mark(p, "mae_tie");
    if (base.pred[v] - h < 0.0) mark(p, "nonneg_boundary");
  }
  const double vvox = base.spacing.voxel_volume_cc();
  for (const auto& roi : cfg.plan.roi_order()) {
    const RoiMembers m = decode_members(rois, roi);
    if (m.empty()) continue;
    const auto idx = m.index();
    const double inv_n = 1.0 / static_cast<double>(idx.size());
    for (const auto& t : ref.terms) {
      if (t.roi != roi) continue;
      const MetricSpec& spec = cfg.plan.specs[t.spec_index];
      double reach = h;  // max |dM/dd_v| * h
      if (spec.kind.tag == MetricTag::d_mean) reach = h * inv_n;
      double alpha = 0.0;
      double threshold = 0.0;
      if (spec.kind.is_volume()) {
        alpha = cfg.surrogates[t.spec_index]->alpha * base.unit_scale;
        threshold = cfg.surrogates[t.spec_index]->threshold / base.unit_scale;
        reach = h * alpha * 0.25 * inv_n;
      }
      for (std::size_t p = 0; p < probes.size(); ++p) {
        const std::size_t v = probes[p];
        if (!std::binary_search(idx.begin(), idx.end(), v)) continue;
        if (std::abs(t.m_pred - t.m_gt) <= 2.0 * reach) mark(p, "metric_tie");
        if (spec.kind.is_selection()) {
          const double dv = base.pred[v];
          if (v == t.selected_voxel) {
            for (std::size_t u : idx) {
              if (u != v && std::abs(base.pred[u] - dv) <= 2.0 * h) {
                mark(p, "rank_tie");
                break;
              }
            }
          } else if (std::abs(dv - t.m_pred) <= 2.0 * h) {
            mark(p, "rank_tie");
          }
        }
        if (spec.kind.is_volume() && std::abs(alpha * (base.pred[v] - threshold)) > 30.0) mark(p, "saturated");
      }
    }
    (void)vvox;
  }

  FdReport rep;
  rep.abs_floor = fd_resolution_floor(ref.l_total, h);
  rep.step = h;
  std::vector<double> work(base.pred.begin(), base.pred.end());
  Inputs probe_in = base;
  probe_in.pred = work;
  double sum_rel = 0.0;
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const std::size_t v = probes[p];
    const double orig = work[v];
    work[v] = orig + h;
    const double up = eval_total(probe_in, rois, cfg, false).l_total;
    work[v] = orig - h;
    const double down = eval_total(probe_in, rois, cfg, false).l_total;
    work[v] = orig;
    FdProbe pr;
    pr.voxel = v;
    pr.analytic = analytic[v];
    pr.numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(pr.analytic), std::abs(pr.numeric), rep.abs_floor});
    pr.rel_error = std::abs(pr.analytic - pr.numeric) / denom;
    pr.kink = kink[p];
    if (pr.kink.empty()) {
      ++rep.smooth_probes;
      rep.max_rel_error = std::max(rep.max_rel_error, pr.rel_error);
      sum_rel += pr.rel_error;
    } else {
      ++rep.kink_probes;
      rep.max_rel_error_kinks = std::max(rep.max_rel_error_kinks, pr.rel_error);
    }
    rep.probes.push_back(std::move(pr));
  }
  rep.mean_rel_error = rep.smooth_probes ? sum_rel / static_cast<double>(rep.smooth_probes) : 0.0;
  return rep;
}

}  // namespace cdm
