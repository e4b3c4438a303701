#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cdm/bitmask.hpp"
#include "cdm/plan_template.hpp"
#include "cdm/volume.hpp"

namespace cdm {

struct SphereRoi {
  std::string name;
  std::array<double, 3> center{};  // voxel coordinates (x, y, z)
  double radius = 1.0;             // voxels
  double prescription_gy = 0.0;    // PTVs only
};

struct PhantomSpec {
  Dims dims{48, 48, 48};
  Spacing spacing{2.5, 2.5, 2.5};
  std::vector<SphereRoi> ptvs;
  std::vector<SphereRoi> oars;
  double decay_length = 3.0;     // voxels, outside-PTV exponential falloff
  double jitter_fraction = 0.02;  // inside-PTV upward noise, fraction of prescription

  void validate() const;
};

struct Phantom {
  DoseGrid gt;
  BitMaskVolume rois;
  PlanTemplate plan;
};

// 48^3 grid, PTV_70 and PTV_54.25 side by side, three OARs around them.
PhantomSpec reference_phantom_spec();

// Inside a PTV the dose is its prescription plus seeded upward jitter; outside
// every PTV each one contributes presc * exp(-distance / decay_length), summed
// and capped at the largest prescription. The emitted template gives every PTV
// V_95% >= 98 % and D_mean <= 102 %, the highest-dose PTV D_0.03cc <= 107 % aim
// and <= 110 % constraint, and every OAR a D_mean aim and D_0.03cc constraint
// with headroom over the generated dose. Throws ValidationError naming the
// first spec the generated dose violates.
Phantom make_phantom(const PhantomSpec& spec, std::uint64_t seed);

}  // namespace cdm
