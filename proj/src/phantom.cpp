#include "cdm/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cdm/dvh_metrics.hpp"
#include "cdm/error.hpp"
#include "cdm/scoring.hpp"

namespace cdm {

namespace {

double distance(const std::array<double, 3>& c, std::size_t x, std::size_t y, std::size_t z) {
  const double dx = static_cast<double>(x) - c[0];
  const double dy = static_cast<double>(y) - c[1];
  const double dz = static_cast<double>(z) - c[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Uniform [0, 1) from the top 53 bits; independent of the standard library's distributions.
double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Bound bound(BoundOp op, double value, BoundUnit unit) { return Bound{op, value, unit}; }

}  // namespace

void PhantomSpec::validate() const {
  if (dims.count() == 0) throw ValidationError("phantom dims must be positive");
  if (!(decay_length > 0.0)) throw ValidationError("phantom decay length must be positive");
  if (!(jitter_fraction >= 0.0 && jitter_fraction < 0.05)) {
    throw ValidationError("phantom jitter must lie in [0, 0.05)");
  }
  if (ptvs.empty()) throw ValidationError("phantom needs at least one PTV");
  if (ptvs.size() + oars.size() > static_cast<std::size_t>(kMaxRois)) {
    throw ValidationError("phantom has more than 32 ROIs");
  }
  auto check = [&](const SphereRoi& r) {
    if (r.name.empty()) throw ValidationError("phantom ROI without a name");
    if (!(r.radius > 0.0)) throw ValidationError("ROI '" + r.name + "' needs a positive radius");
    for (int a = 0; a < 3; ++a) {
      const double hi = static_cast<double>(dims[a]) - 1.0;
      if (r.center[a] - r.radius < 0.0 || r.center[a] + r.radius > hi) {
        throw ValidationError("ROI '" + r.name + "' does not fit in " + to_string(dims));
      }
    }
  };
  for (const auto& p : ptvs) {
    check(p);
    if (!(p.prescription_gy > 0.0)) throw ValidationError("PTV '" + p.name + "' needs a positive prescription");
  }
  for (const auto& o : oars) check(o);
}

PhantomSpec reference_phantom_spec() {
  PhantomSpec s;
  s.ptvs = {{"PTV_70", {17.0, 24.0, 24.0}, 7.0, 70.0}, {"PTV_54.25", {32.0, 24.0, 24.0}, 6.0, 54.25}};
  s.oars = {{"SpinalCord", {24.0, 37.0, 24.0}, 4.0, 0.0},
            {"Parotid_L", {15.0, 10.0, 24.0}, 4.0, 0.0},
            {"Larynx", {33.0, 11.0, 28.0}, 3.5, 0.0}};
  return s;
}

Phantom make_phantom(const PhantomSpec& spec, std::uint64_t seed) {
  spec.validate();
  const Dims& d = spec.dims;
  const std::size_t n = d.count();
  std::mt19937_64 rng(seed);

  std::vector<RoiMask> masks;
  for (const auto* group : {&spec.ptvs, &spec.oars}) {
    for (const auto& r : *group) masks.push_back({r.name, d, std::vector<std::uint8_t>(n, 0)});
  }
  double max_presc = 0.0;
  for (const auto& p : spec.ptvs) max_presc = std::max(max_presc, p.prescription_gy);

  std::vector<double> dose(n, 0.0);
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t x = 0; x < d.nx; ++x) {
        const std::size_t v = d.index(x, y, z);
        std::size_t mi = 0;
        double inside = -1.0;
        double outside = 0.0;
        for (const auto& p : spec.ptvs) {
          const double r = distance(p.center, x, y, z);
          if (r <= p.radius) {
            masks[mi].occupancy[v] = 1;
            inside = std::max(inside, p.prescription_gy);
          } else {
            outside += p.prescription_gy * std::exp(-(r - p.radius) / spec.decay_length);
          }
          ++mi;
        }
        for (const auto& o : spec.oars) {
          if (distance(o.center, x, y, z) <= o.radius) masks[mi].occupancy[v] = 1;
          ++mi;
        }
        // One draw per voxel keeps the stream aligned whatever the geometry.
        const double u = unit_draw(rng);
        dose[v] = inside > 0.0 ? inside * (1.0 + spec.jitter_fraction * u) : std::min(outside, max_presc);
      }
    }
  }

  Phantom out{DoseGrid(d, spec.spacing, std::move(dose)), encode(masks, spec.spacing), {}};

  PlanTemplate& plan = out.plan;
  const auto top = std::max_element(spec.ptvs.begin(), spec.ptvs.end(), [](const SphereRoi& a, const SphereRoi& b) {
    return a.prescription_gy < b.prescription_gy;
  });
  for (const auto& p : spec.ptvs) {
    plan.prescriptions[p.name] = p.prescription_gy;
    MetricSpec v95{p.name, RoiClass::ptv, MetricKind::v_pct(95.0), std::nullopt,
                   bound(BoundOp::ge, 98.0, BoundUnit::pct_volume), kPtvWeight, std::nullopt};
    plan.specs.push_back(v95);
    if (&p == &*top) {
      plan.specs.push_back({p.name, RoiClass::ptv, MetricKind::d_cc(0.03), bound(BoundOp::le, 107.0, BoundUnit::pct_presc),
                            bound(BoundOp::le, 110.0, BoundUnit::pct_presc), kPtvWeight, std::nullopt});
    }
    plan.specs.push_back({p.name, RoiClass::ptv, MetricKind::d_mean(), bound(BoundOp::le, 102.0, BoundUnit::pct_presc),
                          std::nullopt, kPtvWeight, std::nullopt});
  }
  for (const auto& o : spec.oars) {
    const RoiMembers m = decode_members(out.rois, o.name);
    if (m.empty()) throw ValidationError("OAR '" + o.name + "' covers no voxel");
    const RoiDoses rd = gather_roi_doses(out.gt, m);
    const double mean = d_mean(rd.dose);
    const double hot = d_hottest_cc(rd.dose, 0.03, spec.spacing.voxel_volume_cc()).value;
    plan.specs.push_back({o.name, RoiClass::oar, MetricKind::d_mean(),
                          bound(BoundOp::le, std::ceil(mean + 1.0), BoundUnit::gy), std::nullopt, kOarWeight,
                          std::nullopt});
    plan.specs.push_back({o.name, RoiClass::oar, MetricKind::d_cc(0.03), std::nullopt,
                          bound(BoundOp::le, std::ceil(hot + 2.0), BoundUnit::gy), kOarWeight, std::nullopt});
  }
  validate_template(plan);

  const ConstraintReport rep = constraint_report(out.gt, out.rois, plan, EmptyRoiPolicy::error);
  for (const auto& c : rep.checks) {
    if ((c.constraint_pass && !*c.constraint_pass) || (c.aim_pass && !*c.aim_pass)) {
      throw ValidationError("phantom dose violates its own spec '" + c.spec.roi + " " + c.spec.kind.label() + "'");
    }
  }
  return out;
}

}  // namespace cdm
