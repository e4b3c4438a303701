#include "cdm/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "cdm/error.hpp"

namespace cdm {

namespace {

void blur_axis(std::vector<double>& v, const Dims& d, int axis, int r) {
  const std::size_t len = d[axis];
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? d.nx : d.nx * d.ny;
  std::vector<double> line(len);
  std::vector<double> prefix(len + 1);
  const std::size_t lines = d.count() / len;
  for (std::size_t l = 0; l < lines; ++l) {
    // Start of line l: enumerate all voxels whose coordinate along `axis` is 0.
    std::size_t base;
    if (axis == 0) {
      base = l * d.nx;
    } else if (axis == 1) {
      base = (l % d.nx) + (l / d.nx) * d.nx * d.ny;
    } else {
      base = l;
    }
    for (std::size_t i = 0; i < len; ++i) line[i] = v[base + i * stride];
    prefix[0] = 0.0;
    for (std::size_t i = 0; i < len; ++i) prefix[i + 1] = prefix[i] + line[i];
    for (std::size_t i = 0; i < len; ++i) {
      const auto lo = static_cast<std::ptrdiff_t>(i) - r;
      const auto hi = static_cast<std::ptrdiff_t>(i) + r;
      // Edge clamping: out-of-range taps repeat the end samples.
      double s = 0.0;
      const auto a = std::max<std::ptrdiff_t>(lo, 0);
      const auto b = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(len) - 1);
      s = prefix[static_cast<std::size_t>(b) + 1] - prefix[static_cast<std::size_t>(a)];
      if (lo < 0) s += static_cast<double>(-lo) * line[0];
      if (hi > static_cast<std::ptrdiff_t>(len) - 1) s += static_cast<double>(hi - (static_cast<std::ptrdiff_t>(len) - 1)) * line[len - 1];
      v[base + i * stride] = s / static_cast<double>(2 * r + 1);
    }
  }
}

std::vector<double> clamp_all(std::vector<double> v, double cap) {
  for (double& x : v) x = std::clamp(x, 0.0, cap);
  return v;
}

TraceRow make_row(int it, double step, const LossResult& r, std::size_t nspecs, double unit_scale,
                  const PlanTemplate& plan) {
  TraceRow row{it, step, r.l_total, r.l_cdm, r.l_mae, std::vector<double>(nspecs, std::nan(""))};
  for (const auto& t : r.terms) {
    const bool volume = plan.specs[t.spec_index].kind.is_volume();
    row.metrics[t.spec_index] = volume ? t.m_pred : t.m_pred * unit_scale;
  }
  return row;
}

}  // namespace

void OptimizerConfig::validate(const PlanTemplate& plan) const {
  if (!(step > 0.0) || !std::isfinite(step)) throw ValidationError("optimizer step must be positive");
  if (iterations < 0) throw ValidationError("iteration budget must be nonnegative");
  if (!(max_move >= 0.0)) throw ValidationError("max_move must be nonnegative");
  if (!(tolerance >= 0.0)) throw ValidationError("tolerance must be nonnegative");
  if (blur_radius < 0) throw ValidationError("blur radius must be nonnegative");
  if (!(uniform_dose >= 0.0)) throw ValidationError("uniform initial dose must be nonnegative");
  if (max_halvings < 0 || divergence_patience < 1) throw ValidationError("invalid backtracking limits");
  double top = 0.0;
  for (const auto& [name, gy] : plan.prescriptions) top = std::max(top, gy);
  if (dose_cap != 0.0 && !(dose_cap >= top)) {
    throw ValidationError("dose cap " + std::to_string(dose_cap) + " Gy is below the largest prescription");
  }
}

double OptimizerConfig::cap(const PlanTemplate& plan) const {
  if (dose_cap > 0.0) return dose_cap;
  double top = 0.0;
  for (const auto& [name, gy] : plan.prescriptions) top = std::max(top, gy);
  if (top <= 0.0) throw ValidationError("dose cap needs a prescription or an explicit value");
  return 1.2 * top;
}

InitRule parse_init_rule(const std::string& s) {
  if (s == "blur") return InitRule::blur;
  if (s == "uniform") return InitRule::uniform;
  if (s == "zero") return InitRule::zero;
  throw ValidationError("unknown initial dose rule '" + s + "' (blur, uniform, zero)");
}

std::string to_string(InitRule r) {
  switch (r) {
    case InitRule::blur:
      return "blur";
    case InitRule::uniform:
      return "uniform";
    default:
      return "zero";
  }
}

DoseGrid box_blur(const DoseGrid& g, int radius) {
  if (radius < 0) throw ValidationError("blur radius must be nonnegative");
  std::vector<double> v(g.values().begin(), g.values().end());
  if (radius > 0) {
    for (int axis = 0; axis < 3; ++axis) blur_axis(v, g.dims(), axis, radius);
  }
  return g.with_values(std::move(v));
}

DoseGrid initial_dose(const DoseGrid& gt, const PlanTemplate& plan, const OptimizerConfig& cfg) {
  cfg.validate(plan);
  switch (cfg.init) {
    case InitRule::blur:
      return box_blur(gt, cfg.blur_radius);
    case InitRule::uniform:
      return gt.with_values(std::vector<double>(gt.size(), cfg.uniform_dose / gt.unit_scale()));
    default:
      return gt.with_values(std::vector<double>(gt.size(), 0.0));
  }
}

OptimizeResult optimize_dose(const DoseGrid& init, const DoseGrid& gt, const BitMaskVolume& rois,
                             const LossConfig& loss, const OptimizerConfig& cfg) {
  cfg.validate(loss.plan);
  if (init.dims() != gt.dims() || init.unit_scale() != gt.unit_scale()) {
    throw ValidationError("initial dose must share dims and unit_scale with the reference dose");
  }
  const double us = gt.unit_scale();
  const double cap = cfg.cap(loss.plan) / us;
  const double base_step = cfg.step / us * static_cast<double>(gt.size());
  const std::size_t nspecs = loss.plan.specs.size();
  const double max_move = cfg.max_move / us;

  OptimizeResult out;
  for (const auto& s : loss.plan.specs) out.metric_labels.push_back(s.roi + " " + s.kind.label());

  std::vector<double> d = clamp_all({init.values().begin(), init.values().end()}, cap);
  DoseGrid cur = init.with_values(d);
  LossResult cur_loss = total_loss(cur, gt, rois, loss, true);
  out.trace.push_back(make_row(0, cfg.step, cur_loss, nspecs, us, loss.plan));
  out.stop_reason = "budget";

  double eta = base_step;
  int increases = 0;
  for (int it = 1; it <= cfg.iterations; ++it) {
    if (cur_loss.l_total <= cfg.tolerance) {
      out.stop_reason = "tolerance";
      break;
    }
    const std::vector<double>& g = *cur_loss.gradient;
    auto step_to = [&](double e) {
      std::vector<double> c(d.size());
      const double lim = max_move * (e / base_step);
      for (std::size_t v = 0; v < d.size(); ++v) {
        double u = e * g[v];
        if (lim > 0.0) u = std::clamp(u, -lim, lim);
        c[v] = std::clamp(d[v] - u, 0.0, cap);
      }
      return c;
    };
    std::vector<double> cand = step_to(eta);
    LossResult cand_loss = total_loss(init.with_values(cand), gt, rois, loss, true);
    if (cfg.backtracking) {
      int halvings = 0;
      while (cand_loss.l_total > cur_loss.l_total && halvings < cfg.max_halvings) {
        eta *= 0.5;
        ++halvings;
        cand = step_to(eta);
        cand_loss = total_loss(init.with_values(cand), gt, rois, loss, true);
      }
      if (cand_loss.l_total > cur_loss.l_total || cand == d) {
        out.stop_reason = "stalled";
        break;
      }
    } else if (cand_loss.l_total > cur_loss.l_total) {
      if (++increases >= cfg.divergence_patience) {
        std::ostringstream msg;
        msg << "L_total increased for " << increases << " consecutive iterations at fixed step " << cfg.step
            << " (iteration " << it << ", L_total " << cur_loss.l_total << " -> " << cand_loss.l_total << ")";
        throw DivergenceError(msg.str());
      }
    } else {
      increases = 0;
    }
    d = std::move(cand);
    cur_loss = std::move(cand_loss);
    out.iterations_run = it;
    out.trace.push_back(make_row(it, eta / static_cast<double>(gt.size()) * us, cur_loss, nspecs, us, loss.plan));
    if (cfg.backtracking) eta = std::min(2.0 * eta, base_step);
  }
  if (out.stop_reason == "budget" && cur_loss.l_total <= cfg.tolerance) out.stop_reason = "tolerance";
  out.final_dose = init.with_values(std::move(d));
  return out;
}

std::string trace_csv(const OptimizeResult& r) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "iteration,step,L_total,L_CDM,L_MAE";
  for (const auto& l : r.metric_labels) os << ',' << l;
  os << '\n';
  for (const auto& row : r.trace) {
    os << row.iteration << ',' << row.step << ',' << row.l_total << ',' << row.l_cdm << ',' << row.l_mae;
    for (double m : row.metrics) {
      os << ',';
      if (!std::isnan(m)) os << m;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace cdm
