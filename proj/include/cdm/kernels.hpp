#pragma once

// Data-parallel voxel kernels.
//
// Every kernel exists twice: `serial::` is the straightforward reference loop
// kept for testing, `parallel::` is the OpenMP version the engine calls. The
// parallel reductions sum fixed-size blocks and then combine the block partials
// in block order, so results are bitwise identical for any thread count. They
// can differ from the serial loop in the last bits; counts and element-wise
// kernels match exactly.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cdm/permutation.hpp"
#include "cdm/volume.hpp"

namespace cdm::kernels {

inline constexpr std::size_t kReduceBlock = 4096;

// Per-voxel inverse lattice map compiled from a VoxelPermutation.
class LatticeMap {
 public:
  LatticeMap(const VoxelPermutation& perm, const Dims& dims);

  // Maps an output voxel to its source voxel by walking the inverse steps.
  // False when the source lies outside the lattice (translation zero-fill).
  bool source(std::int64_t& x, std::int64_t& y, std::int64_t& z) const;

  // The same map for a whole output row (y, z): output x in [lo, hi) reads
  // source index base + x * stride; every other x is zero-filled.
  struct Row {
    std::int64_t lo = 0;
    std::int64_t hi = 0;
    std::int64_t base = 0;
    std::int64_t stride = 0;
  };
  Row row(std::int64_t y, std::int64_t z) const;

  const Dims& dims() const { return dims_; }

 private:
  struct Op {
    int kind;  // 0 flip, 1 rotate, 2 translate
    int a;
    int b;
    std::int64_t t[3];
  };
  // source = r * (x, y, z) + t; r is a signed axis permutation.
  struct Affine {
    std::int64_t r[3][3];
    std::int64_t t[3];
  };
  Dims dims_;
  std::vector<Op> inverse_ops_;  // applied in order, output -> source
  Affine map_;
  std::vector<Affine> checks_;   // the partial map after each translation; must stay in bounds
};

int thread_count();

namespace serial {

void encode(std::span<const std::span<const std::uint8_t>> masks, std::span<std::uint32_t> words);
void decode(std::span<const std::uint32_t> words, std::uint32_t bit_mask, std::span<std::uint8_t> out);
std::size_t count_bit(std::span<const std::uint32_t> words, std::uint32_t bit_mask);
std::vector<std::size_t> members(std::span<const std::uint32_t> words, std::uint32_t bit_mask);

template <class T>
void permute(std::span<const T> in, const LatticeMap& map, std::span<T> out);

std::vector<double> gather(std::span<const double> values, std::span<const std::size_t> index);
double sum(std::span<const double> values);
double abs_diff_sum(std::span<const double> a, std::span<const double> b);
void abs_diff_grad(std::span<const double> a, std::span<const double> b, double scale, std::span<double> out);
std::size_t count_at_least(std::span<const double> values, double threshold);
std::size_t count_within(std::span<const double> values, double center, double margin);
double sigmoid_sum(std::span<const double> values, double threshold, double alpha);
void sigmoid_slope(std::span<const double> values, double threshold, double alpha, std::span<double> out);

}  // namespace serial

namespace parallel {

void encode(std::span<const std::span<const std::uint8_t>> masks, std::span<std::uint32_t> words);
void decode(std::span<const std::uint32_t> words, std::uint32_t bit_mask, std::span<std::uint8_t> out);
std::size_t count_bit(std::span<const std::uint32_t> words, std::uint32_t bit_mask);
std::vector<std::size_t> members(std::span<const std::uint32_t> words, std::uint32_t bit_mask);

template <class T>
void permute(std::span<const T> in, const LatticeMap& map, std::span<T> out);

std::vector<double> gather(std::span<const double> values, std::span<const std::size_t> index);
double sum(std::span<const double> values);
double abs_diff_sum(std::span<const double> a, std::span<const double> b);
void abs_diff_grad(std::span<const double> a, std::span<const double> b, double scale, std::span<double> out);
std::size_t count_at_least(std::span<const double> values, double threshold);
std::size_t count_within(std::span<const double> values, double center, double margin);
double sigmoid_sum(std::span<const double> values, double threshold, double alpha);
void sigmoid_slope(std::span<const double> values, double threshold, double alpha, std::span<double> out);

}  // namespace parallel

// Overflow-safe logistic 1/(1+exp(-t)).
inline double logistic(double t) {
  if (t >= 0.0) {
    return 1.0 / (1.0 + std::exp(-t));
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace cdm::kernels
