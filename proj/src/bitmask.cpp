#include "cdm/bitmask.hpp"

#include <algorithm>
#include <atomic>
#include <set>

#include "cdm/error.hpp"
#include "cdm/kernels.hpp"

namespace cdm {

namespace {

std::atomic<std::size_t> g_live_masks{0};
std::atomic<std::size_t> g_peak_masks{0};
std::atomic<std::size_t> g_live_bytes{0};
std::atomic<std::size_t> g_peak_bytes{0};
std::atomic<std::size_t> g_total_decodes{0};

void raise_peak(std::atomic<std::size_t>& peak, std::size_t value) {
  std::size_t prev = peak.load();
  while (prev < value && !peak.compare_exchange_weak(prev, value)) {
  }
}

std::uint32_t bit_mask_of(int bit_index) { return 1u << (bit_index - 1); }

}  // namespace

BitMaskVolume::BitMaskVolume(Dims dims, std::vector<std::uint32_t> words, std::vector<std::string> roi_names,
                             Spacing spacing)
    : dims_(dims), spacing_(spacing), words_(std::move(words)), roi_names_(std::move(roi_names)) {
  if (dims_.count() == 0) throw ValidationError("bit-mask volume has zero voxels");
  if (words_.size() != dims_.count()) {
    throw ValidationError("bit-mask payload has " + std::to_string(words_.size()) + " words, dims " +
                          to_string(dims_) + " need " + std::to_string(dims_.count()));
  }
  if (roi_names_.size() > static_cast<std::size_t>(kMaxRois)) {
    throw ValidationError("bit-mask holds at most 32 ROIs, got " + std::to_string(roi_names_.size()));
  }
  std::set<std::string> seen;
  for (const auto& n : roi_names_) {
    if (n.empty()) throw ValidationError("empty ROI name in bit-mask table");
    if (!seen.insert(n).second) throw ValidationError("duplicate ROI name '" + n + "' in bit-mask table");
  }
  const std::uint32_t allowed =
      roi_names_.size() == 32 ? 0xFFFFFFFFu : ((1u << roi_names_.size()) - 1u);
  for (std::size_t v = 0; v < words_.size(); ++v) {
    if (words_[v] & ~allowed) {
      throw ValidationError("voxel " + std::to_string(v) + " has bits set above ROI count " +
                            std::to_string(roi_names_.size()));
    }
  }
}

int BitMaskVolume::bit_index(const std::string& roi) const {
  auto it = std::find(roi_names_.begin(), roi_names_.end(), roi);
  if (it == roi_names_.end()) throw UnknownRoiError(roi);
  return static_cast<int>(it - roi_names_.begin()) + 1;
}

bool BitMaskVolume::contains(const std::string& roi) const {
  return std::find(roi_names_.begin(), roi_names_.end(), roi) != roi_names_.end();
}

void BitMaskVolume::check_bit(int bit) const {
  if (bit < 1 || bit > roi_count()) {
    throw ValidationError("bit index " + std::to_string(bit) + " out of range [1, " + std::to_string(roi_count()) +
                          "]");
  }
}

BitMaskVolume encode(std::span<const RoiMask> masks, Spacing spacing) {
  if (masks.empty()) throw ValidationError("encode needs at least one mask");
  if (masks.size() > static_cast<std::size_t>(kMaxRois)) {
    throw ValidationError("cannot encode " + std::to_string(masks.size()) + " masks into 32-bit words");
  }
  const Dims dims = masks.front().dims;
  std::vector<std::string> names;
  std::vector<std::span<const std::uint8_t>> channels;
  for (const auto& m : masks) {
    if (m.dims != dims) {
      throw ValidationError("mask '" + m.name + "' dims " + to_string(m.dims) + " differ from " + to_string(dims));
    }
    if (std::find(names.begin(), names.end(), m.name) != names.end()) {
      throw ValidationError("duplicate ROI name '" + m.name + "'");
    }
    names.push_back(m.name);
    channels.emplace_back(m.occupancy);
  }
  std::vector<std::uint32_t> words(dims.count());
  kernels::parallel::encode(channels, words);
  return BitMaskVolume(dims, std::move(words), std::move(names), spacing);
}

RoiMask decode(const BitMaskVolume& b, int bit_index) {
  b.check_bit(bit_index);
  RoiMask out(b.roi_names()[static_cast<std::size_t>(bit_index - 1)], b.dims());
  kernels::parallel::decode(b.words(), bit_mask_of(bit_index), out.occupancy);
  return out;
}

RoiMask decode(const BitMaskVolume& b, const std::string& roi) { return decode(b, b.bit_index(roi)); }

std::vector<RoiMask> decode_all(const BitMaskVolume& b) {
  std::vector<RoiMask> out;
  out.reserve(static_cast<std::size_t>(b.roi_count()));
  for (int i = 1; i <= b.roi_count(); ++i) out.push_back(decode(b, i));
  return out;
}

BitMaskVolume apply_permutation(const BitMaskVolume& b, const VoxelPermutation& t) {
  if (t.is_identity()) return b;
  const kernels::LatticeMap map(t, b.dims());
  std::vector<std::uint32_t> out(b.words().size());
  kernels::parallel::permute<std::uint32_t>(b.words(), map, out);
  return BitMaskVolume(b.dims(), std::move(out), b.roi_names(), b.spacing());
}

RoiMask apply_permutation(const RoiMask& m, const VoxelPermutation& t) {
  if (t.is_identity()) return m;
  const kernels::LatticeMap map(t, m.dims);
  RoiMask out(m.name, m.dims);
  kernels::parallel::permute<std::uint8_t>(m.occupancy, map, out.occupancy);
  return out;
}

std::size_t roi_voxel_count(const BitMaskVolume& b, const std::string& roi) {
  return kernels::parallel::count_bit(b.words(), bit_mask_of(b.bit_index(roi)));
}

CodecCounters codec_counters() {
  return {g_live_masks.load(), g_peak_masks.load(), g_live_bytes.load(), g_peak_bytes.load(),
          g_total_decodes.load()};
}

void reset_codec_counters() {
  g_peak_masks = g_live_masks.load();
  g_peak_bytes = g_live_bytes.load();
  g_total_decodes = 0;
}

RoiMembers::RoiMembers(std::string roi, std::vector<std::size_t> index)
    : roi_(std::move(roi)), index_(std::move(index)), bytes_(index_.capacity() * sizeof(std::size_t)), tracked_(true) {
  raise_peak(g_peak_masks, ++g_live_masks);
  raise_peak(g_peak_bytes, g_live_bytes += bytes_);
  ++g_total_decodes;
}

RoiMembers::RoiMembers(RoiMembers&& other) noexcept
    : roi_(std::move(other.roi_)), index_(std::move(other.index_)), bytes_(other.bytes_), tracked_(other.tracked_) {
  other.tracked_ = false;
  other.bytes_ = 0;
}

RoiMembers& RoiMembers::operator=(RoiMembers&& other) noexcept {
  if (this != &other) {
    release();
    roi_ = std::move(other.roi_);
    index_ = std::move(other.index_);
    bytes_ = other.bytes_;
    tracked_ = other.tracked_;
    other.tracked_ = false;
    other.bytes_ = 0;
  }
  return *this;
}

RoiMembers::~RoiMembers() { release(); }

void RoiMembers::release() {
  if (!tracked_) return;
  --g_live_masks;
  g_live_bytes -= bytes_;
  tracked_ = false;
  index_.clear();
  index_.shrink_to_fit();
}

RoiMembers decode_members(const BitMaskVolume& b, const std::string& roi) {
  return RoiMembers(roi, kernels::parallel::members(b.words(), bit_mask_of(b.bit_index(roi))));
}

RoiMembers mask_members(const RoiMask& m) {
  std::vector<std::size_t> idx;
  for (std::size_t v = 0; v < m.occupancy.size(); ++v) {
    if (m.occupancy[v]) idx.push_back(v);
  }
  return RoiMembers(m.name, std::move(idx));
}

}  // namespace cdm
