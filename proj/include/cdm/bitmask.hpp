#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cdm/permutation.hpp"
#include "cdm/volume.hpp"

namespace cdm {

inline constexpr int kMaxRois = 32;

// Up to 32 overlapping binary ROI masks packed into one 32-bit word per voxel.
// ROI with bit index i (1-based) occupies bit i-1: word = sum_i S_i * 2^(i-1).
class BitMaskVolume {
 public:
  BitMaskVolume() = default;
  // roi_names[i] owns bit index i+1. Validates the table and bit hygiene.
  BitMaskVolume(Dims dims, std::vector<std::uint32_t> words, std::vector<std::string> roi_names,
                Spacing spacing = {});

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::span<const std::uint32_t> words() const { return words_; }
  const std::vector<std::string>& roi_names() const { return roi_names_; }
  int roi_count() const { return static_cast<int>(roi_names_.size()); }

  // 1-based bit index of `roi`; throws UnknownRoiError.
  int bit_index(const std::string& roi) const;
  bool contains(const std::string& roi) const;
  // Throws ValidationError when `bit` is outside [1, roi_count()].
  void check_bit(int bit) const;

  bool operator==(const BitMaskVolume&) const = default;

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<std::uint32_t> words_;
  std::vector<std::string> roi_names_;
};

BitMaskVolume encode(std::span<const RoiMask> masks, Spacing spacing = {});
RoiMask decode(const BitMaskVolume& b, const std::string& roi);
RoiMask decode(const BitMaskVolume& b, int bit_index);
std::vector<RoiMask> decode_all(const BitMaskVolume& b);
BitMaskVolume apply_permutation(const BitMaskVolume& b, const VoxelPermutation& t);
std::size_t roi_voxel_count(const BitMaskVolume& b, const std::string& roi);

// Applies the same lattice transform to a plain mask (the per-channel path).
RoiMask apply_permutation(const RoiMask& m, const VoxelPermutation& t);

// Decode-on-demand accounting. Every live RoiMembers counts as one resident
// decoded mask; the peak is what the loss memory contract is checked against.
struct CodecCounters {
  std::size_t live_masks = 0;
  std::size_t peak_masks = 0;
  std::size_t live_bytes = 0;
  std::size_t peak_bytes = 0;
  std::size_t total_decodes = 0;
};
CodecCounters codec_counters();
void reset_codec_counters();

// Member voxel indices (z-major, ascending) of one ROI, decoded on demand.
// Move-only: releasing it is what frees the decoded mask.
class RoiMembers {
 public:
  RoiMembers(std::string roi, std::vector<std::size_t> index);
  RoiMembers(RoiMembers&& other) noexcept;
  RoiMembers& operator=(RoiMembers&& other) noexcept;
  RoiMembers(const RoiMembers&) = delete;
  RoiMembers& operator=(const RoiMembers&) = delete;
  ~RoiMembers();

  const std::string& roi() const { return roi_; }
  std::span<const std::size_t> index() const { return index_; }
  std::size_t size() const { return index_.size(); }
  bool empty() const { return index_.empty(); }

 private:
  void release();
  std::string roi_;
  std::vector<std::size_t> index_;
  std::size_t bytes_ = 0;
  bool tracked_ = false;
};

RoiMembers decode_members(const BitMaskVolume& b, const std::string& roi);
RoiMembers mask_members(const RoiMask& m);

}  // namespace cdm
