// Serial reference kernels against their OpenMP counterparts.
// Sizes are edge lengths of a cubic grid.

#include <benchmark/benchmark.h>

#include <random>

#include "cdm/kernels.hpp"

using namespace cdm;
namespace k = cdm::kernels;

namespace {

std::vector<double> doses(std::size_t n) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 75.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

std::vector<std::uint32_t> words(std::size_t n) {
  std::mt19937_64 rng(2);
  std::vector<std::uint32_t> w(n);
  for (auto& x : w) x = static_cast<std::uint32_t>(rng()) & 0x3fffffffu;
  return w;
}

std::size_t voxels(const benchmark::State& s) {
  const auto e = static_cast<std::size_t>(s.range(0));
  return e * e * e;
}

template <bool Par>
void BM_SigmoidSum(benchmark::State& s) {
  const auto v = doses(voxels(s));
  for (auto _ : s) {
    benchmark::DoNotOptimize(Par ? k::parallel::sigmoid_sum(v, 66.5, 176.0) : k::serial::sigmoid_sum(v, 66.5, 176.0));
  }
  s.SetItemsProcessed(static_cast<std::int64_t>(s.iterations() * v.size()));
}

template <bool Par>
void BM_AbsDiffSum(benchmark::State& s) {
  const auto a = doses(voxels(s));
  auto b = a;
  for (double& x : b) x += 1.0;
  for (auto _ : s) {
    benchmark::DoNotOptimize(Par ? k::parallel::abs_diff_sum(a, b) : k::serial::abs_diff_sum(a, b));
  }
  s.SetItemsProcessed(static_cast<std::int64_t>(s.iterations() * a.size()));
}

template <bool Par>
void BM_Members(benchmark::State& s) {
  const auto w = words(voxels(s));
  for (auto _ : s) {
    benchmark::DoNotOptimize(Par ? k::parallel::members(w, 1u << 4) : k::serial::members(w, 1u << 4));
  }
  s.SetItemsProcessed(static_cast<std::int64_t>(s.iterations() * w.size()));
}

template <bool Par>
void BM_PermuteWords(benchmark::State& s) {
  const auto e = static_cast<std::size_t>(s.range(0));
  const Dims d{e, e, e};
  const auto w = words(d.count());
  std::vector<std::uint32_t> out(w.size());
  const k::LatticeMap map(VoxelPermutation::rotate90(0, 1).then(VoxelPermutation::translate(3, -2, 1)), d);
  for (auto _ : s) {
    if constexpr (Par) {
      k::parallel::permute<std::uint32_t>(w, map, out);
    } else {
      k::serial::permute<std::uint32_t>(w, map, out);
    }
    benchmark::ClobberMemory();
  }
  s.SetBytesProcessed(static_cast<std::int64_t>(s.iterations() * w.size() * sizeof(std::uint32_t)));
}

}  // namespace

BENCHMARK(BM_SigmoidSum<false>)->Arg(64)->Arg(128)->Name("sigmoid_sum/serial");
BENCHMARK(BM_SigmoidSum<true>)->Arg(64)->Arg(128)->Name("sigmoid_sum/parallel")->UseRealTime();
BENCHMARK(BM_AbsDiffSum<false>)->Arg(64)->Arg(128)->Name("abs_diff_sum/serial");
BENCHMARK(BM_AbsDiffSum<true>)->Arg(64)->Arg(128)->Name("abs_diff_sum/parallel")->UseRealTime();
BENCHMARK(BM_Members<false>)->Arg(64)->Arg(128)->Name("members/serial");
BENCHMARK(BM_Members<true>)->Arg(64)->Arg(128)->Name("members/parallel")->UseRealTime();
BENCHMARK(BM_PermuteWords<false>)->Arg(64)->Arg(128)->Name("permute_u32/serial");
BENCHMARK(BM_PermuteWords<true>)->Arg(64)->Arg(128)->Name("permute_u32/parallel")->UseRealTime();

BENCHMARK_MAIN();
