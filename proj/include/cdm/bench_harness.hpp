#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cdm/permutation.hpp"
#include "cdm/volume.hpp"

namespace cdm {

struct BenchReport {
  std::string scenario;  // "one-hot" or "bit-mask"
  int roi_count = 0;
  Dims dims;
  std::size_t repetitions = 0;
  double median_ns = 0.0;
  double min_ns = 0.0;
  double max_ns = 0.0;
  std::size_t bytes_moved = 0;
  std::size_t peak_mask_bytes = 0;
};

struct TransformBench {
  BenchReport one_hot;
  BenchReport bitmask;
  double speedup = 0.0;  // one-hot median / bit-mask median
};

struct BenchOptions {
  int repetitions = 5;
  int warmup = 1;
  std::uint64_t seed = 7;
  bool parallel = false;  // OpenMP kernels for both paths instead of the single-worker serial ones
};

// Random overlapping spheres for `roi_count` channels. Transforms every channel
// separately and the packed word volume once, checks that decoding the packed
// result reproduces every channel exactly, then times both paths.
// Throws Error on an output mismatch.
TransformBench bench_transform(const Dims& dims, int roi_count, const VoxelPermutation& transform,
                               const BenchOptions& opts = {});

struct MemoryBench {
  BenchReport one_hot;
  BenchReport bitmask;
  double storage_ratio = 0.0;     // one-hot bytes / bit-mask bytes
  std::size_t peak_decoded_masks = 0;  // during one cdm_loss evaluation
  std::size_t peak_decoded_bytes = 0;
};

MemoryBench bench_memory(const Dims& dims, int roi_count, std::uint64_t seed = 7);

std::string to_json(const TransformBench& b);
std::string to_json(const MemoryBench& b);
std::string format_table(const std::vector<TransformBench>& rows);

}  // namespace cdm
