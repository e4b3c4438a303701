#include "cdm/volume.hpp"

#include <cmath>

#include "cdm/error.hpp"

namespace cdm {

std::string to_string(const Dims& d) {
  return "(" + std::to_string(d.nx) + "," + std::to_string(d.ny) + "," + std::to_string(d.nz) + ")";
}

DoseGrid::DoseGrid(Dims dims, Spacing spacing, std::vector<double> values, double unit_scale)
    : dims_(dims), spacing_(spacing), unit_scale_(unit_scale), values_(std::move(values)) {
  if (dims_.nx == 0 || dims_.ny == 0 || dims_.nz == 0) {
    throw ValidationError("dose grid dims must be positive, got " + to_string(dims_));
  }
  if (!(spacing_.sx > 0.0 && spacing_.sy > 0.0 && spacing_.sz > 0.0) || !std::isfinite(spacing_.voxel_volume_cc())) {
    throw ValidationError("voxel spacing must be positive and finite");
  }
  if (!(unit_scale_ > 0.0) || !std::isfinite(unit_scale_)) {
    throw ValidationError("unit_scale must be positive, got " + std::to_string(unit_scale_));
  }
  if (values_.size() != dims_.count()) {
    throw ValidationError("dose grid has " + std::to_string(values_.size()) + " values, dims " + to_string(dims_) +
                          " need " + std::to_string(dims_.count()));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) throw ValidationError("non-finite dose at voxel " + std::to_string(i));
    if (values_[i] < 0.0) throw ValidationError("negative dose at voxel " + std::to_string(i));
  }
}

DoseGrid DoseGrid::constant(Dims dims, Spacing spacing, double value, double unit_scale) {
  return DoseGrid(dims, spacing, std::vector<double>(dims.count(), value), unit_scale);
}

DoseGrid DoseGrid::with_values(std::vector<double> values) const {
  return DoseGrid(dims_, spacing_, std::move(values), unit_scale_);
}

DoseGrid rescale_dose(const DoseGrid& g, double target_unit_scale) {
  if (!(target_unit_scale > 0.0) || !std::isfinite(target_unit_scale)) {
    throw ValidationError("target unit_scale must be positive, got " + std::to_string(target_unit_scale));
  }
  if (target_unit_scale == g.unit_scale()) return g;
  const double factor = g.unit_scale() / target_unit_scale;
  std::vector<double> out(g.values().begin(), g.values().end());
  for (double& v : out) v *= factor;
  return DoseGrid(g.dims(), g.spacing(), std::move(out), target_unit_scale);
}

RoiMask::RoiMask(std::string n, Dims d) : name(std::move(n)), dims(d), occupancy(d.count(), 0) {}

RoiMask::RoiMask(std::string n, Dims d, std::vector<std::uint8_t> occ)
    : name(std::move(n)), dims(d), occupancy(std::move(occ)) {
  if (occupancy.size() != dims.count()) {
    throw ValidationError("mask '" + name + "' has " + std::to_string(occupancy.size()) + " voxels, dims " +
                          to_string(dims) + " need " + std::to_string(dims.count()));
  }
  for (auto& o : occupancy) o = o ? 1 : 0;
}

std::size_t RoiMask::voxel_count() const {
  std::size_t n = 0;
  for (auto o : occupancy) n += o != 0;
  return n;
}

}  // namespace cdm
