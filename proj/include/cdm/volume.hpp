#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cdm {

// Voxel lattice extents. Linear order is z-major: x fastest, z slowest.
struct Dims {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t nz = 0;

  std::size_t count() const { return nx * ny * nz; }
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const { return x + nx * (y + ny * z); }
  std::size_t operator[](int axis) const { return axis == 0 ? nx : axis == 1 ? ny : nz; }
  bool operator==(const Dims&) const = default;
};

struct Spacing {
  double sx = 1.0;
  double sy = 1.0;
  double sz = 1.0;

  double voxel_volume_cc() const { return sx * sy * sz / 1000.0; }
  bool operator==(const Spacing&) const = default;
};

std::string to_string(const Dims& d);

// A 3D dose volume. Stored values are physical dose divided by unit_scale, so
// unit_scale = 1 means Gy and unit_scale = 70 means "fraction of 70 Gy".
// Immutable after construction; every constructor path validates.
class DoseGrid {
 public:
  DoseGrid() = default;
  DoseGrid(Dims dims, Spacing spacing, std::vector<double> values, double unit_scale = 1.0);

  static DoseGrid constant(Dims dims, Spacing spacing, double value, double unit_scale = 1.0);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  double unit_scale() const { return unit_scale_; }
  double voxel_volume_cc() const { return spacing_.voxel_volume_cc(); }
  std::size_t size() const { return values_.size(); }

  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double gy(std::size_t i) const { return values_[i] * unit_scale_; }

  // Same geometry and unit, new payload (validated).
  DoseGrid with_values(std::vector<double> values) const;

  bool operator==(const DoseGrid&) const = default;

 private:
  Dims dims_;
  Spacing spacing_;
  double unit_scale_ = 1.0;
  std::vector<double> values_;
};

// Physical dose is preserved: out * target == in * g.unit_scale().
DoseGrid rescale_dose(const DoseGrid& g, double target_unit_scale);

struct RoiMask {
  std::string name;
  Dims dims;
  std::vector<std::uint8_t> occupancy;  // 0 or 1 per voxel

  RoiMask() = default;
  RoiMask(std::string name, Dims dims);
  RoiMask(std::string name, Dims dims, std::vector<std::uint8_t> occupancy);

  std::size_t voxel_count() const;
  bool operator==(const RoiMask&) const = default;
};

}  // namespace cdm
