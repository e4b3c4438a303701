#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "cdm/volume.hpp"

namespace cdm {

// Lattice-exact voxel transforms. Arbitrary affine resampling is not offered:
// packed bit words cannot be interpolated.
struct Flip {
  int axis = 0;  // 0=x, 1=y, 2=z
};

// Quarter turns in the (axis_a, axis_b) plane; a point (u, v) moves to (n-1-v, u).
// Both axes must have the same extent.
struct Rotate90 {
  int axis_a = 0;
  int axis_b = 1;
  int quarter_turns = 1;
};

// Integer shift; voxels shifted in from outside the lattice are zero.
struct Translate {
  std::int64_t dx = 0;
  std::int64_t dy = 0;
  std::int64_t dz = 0;
};

using PermutationStep = std::variant<Flip, Rotate90, Translate>;

class VoxelPermutation {
 public:
  VoxelPermutation() = default;

  static VoxelPermutation identity() { return {}; }
  static VoxelPermutation flip(int axis);
  static VoxelPermutation rotate90(int axis_a, int axis_b, int quarter_turns = 1);
  static VoxelPermutation translate(std::int64_t dx, std::int64_t dy, std::int64_t dz);

  // `this` first, then `next`.
  VoxelPermutation then(const VoxelPermutation& next) const;

  const std::vector<PermutationStep>& steps() const { return steps_; }
  bool is_identity() const { return steps_.empty(); }

  // Throws ValidationError when a rotation plane is not square or an axis is out of range.
  void validate(const Dims& dims) const;

  // Parses "flip-x", "rot90-xy", "rot90-xy:2", "shift:1,0,-2", joined with '+'.
  static VoxelPermutation parse(const std::string& text);
  std::string describe() const;

 private:
  std::vector<PermutationStep> steps_;
};

}  // namespace cdm
