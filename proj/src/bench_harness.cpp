#include "cdm/bench_harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include <json.hpp>

#include "cdm/bitmask.hpp"
#include "cdm/cdm_loss.hpp"
#include "cdm/error.hpp"
#include "cdm/kernels.hpp"

namespace cdm {

namespace {

std::vector<RoiMask> random_masks(const Dims& dims, int roi_count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto draw = [&](double lo, double hi) { return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  std::vector<RoiMask> masks;
  const double extent = static_cast<double>(std::min({dims.nx, dims.ny, dims.nz}));
  for (int r = 0; r < roi_count; ++r) {
    RoiMask m("roi_" + std::to_string(r + 1), dims);
    const double cx = draw(0, static_cast<double>(dims.nx));
    const double cy = draw(0, static_cast<double>(dims.ny));
    const double cz = draw(0, static_cast<double>(dims.nz));
    const double rad = draw(0.1, 0.35) * extent;
    for (std::size_t z = 0; z < dims.nz; ++z) {
      for (std::size_t y = 0; y < dims.ny; ++y) {
        for (std::size_t x = 0; x < dims.nx; ++x) {
          const double dx = static_cast<double>(x) - cx;
          const double dy = static_cast<double>(y) - cy;
          const double dz = static_cast<double>(z) - cz;
          if (dx * dx + dy * dy + dz * dz <= rad * rad) m.occupancy[dims.index(x, y, z)] = 1;
        }
      }
    }
    masks.push_back(std::move(m));
  }
  return masks;
}

template <class F>
BenchReport time_it(const std::string& scenario, int roi_count, const Dims& dims, const BenchOptions& opts, F&& body) {
  for (int i = 0; i < opts.warmup; ++i) body();
  std::vector<double> ns;
  for (int i = 0; i < opts.repetitions; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    const auto t1 = std::chrono::steady_clock::now();
    ns.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
  }
  std::sort(ns.begin(), ns.end());
  BenchReport r;
  r.scenario = scenario;
  r.roi_count = roi_count;
  r.dims = dims;
  r.repetitions = ns.size();
  const std::size_t h = ns.size() / 2;
  r.median_ns = ns.size() % 2 ? ns[h] : 0.5 * (ns[h - 1] + ns[h]);
  r.min_ns = ns.front();
  r.max_ns = ns.back();
  return r;
}

template <class T>
void permute(bool parallel, std::span<const T> in, const kernels::LatticeMap& map, std::span<T> out) {
  if (parallel) {
    kernels::parallel::permute<T>(in, map, out);
  } else {
    kernels::serial::permute<T>(in, map, out);
  }
}

nlohmann::json report_json(const BenchReport& r) {
  return {{"scenario", r.scenario},
          {"roi_count", r.roi_count},
          {"dims", {r.dims.nx, r.dims.ny, r.dims.nz}},
          {"repetitions", r.repetitions},
          {"median_ns", r.median_ns},
          {"min_ns", r.min_ns},
          {"max_ns", r.max_ns},
          {"bytes_moved", r.bytes_moved},
          {"peak_mask_bytes", r.peak_mask_bytes}};
}

}  // namespace

TransformBench bench_transform(const Dims& dims, int roi_count, const VoxelPermutation& transform,
                               const BenchOptions& opts) {
  if (roi_count < 1 || roi_count > kMaxRois) throw ValidationError("roi_count must lie in [1, 32]");
  if (opts.repetitions < 5) throw ValidationError("benchmarks need at least 5 repetitions");
  transform.validate(dims);
  const std::vector<RoiMask> masks = random_masks(dims, roi_count, opts.seed);
  const BitMaskVolume packed = encode(masks);
  const kernels::LatticeMap map(transform, dims);
  const std::size_t n = dims.count();

  std::vector<std::vector<std::uint8_t>> channels_out(masks.size(), std::vector<std::uint8_t>(n));
  std::vector<std::uint32_t> words_out(n);
  auto one_hot = [&] {
    for (std::size_t c = 0; c < masks.size(); ++c) {
      permute<std::uint8_t>(opts.parallel, masks[c].occupancy, map, channels_out[c]);
    }
  };
  auto bitmask = [&] { permute<std::uint32_t>(opts.parallel, packed.words(), map, words_out); };

  one_hot();
  bitmask();
  const BitMaskVolume moved(dims, words_out, packed.roi_names());
  for (std::size_t c = 0; c < masks.size(); ++c) {
    if (decode(moved, static_cast<int>(c + 1)).occupancy != channels_out[c]) {
      throw Error("bit-mask transform disagrees with per-channel transform for '" + masks[c].name + "'");
    }
  }

  TransformBench out;
  out.one_hot = time_it("one-hot", roi_count, dims, opts, one_hot);
  out.bitmask = time_it("bit-mask", roi_count, dims, opts, bitmask);
  out.one_hot.bytes_moved = 2 * n * masks.size();
  out.bitmask.bytes_moved = 2 * n * sizeof(std::uint32_t);
  out.one_hot.peak_mask_bytes = 2 * n * masks.size();
  out.bitmask.peak_mask_bytes = 2 * n * sizeof(std::uint32_t);
  out.speedup = out.one_hot.median_ns / out.bitmask.median_ns;
  return out;
}

MemoryBench bench_memory(const Dims& dims, int roi_count, std::uint64_t seed) {
  if (roi_count < 1 || roi_count > kMaxRois) throw ValidationError("roi_count must lie in [1, 32]");
  const std::vector<RoiMask> masks = random_masks(dims, roi_count, seed);
  const BitMaskVolume packed = encode(masks);
  const std::size_t n = dims.count();

  MemoryBench out;
  out.one_hot.scenario = "one-hot";
  out.bitmask.scenario = "bit-mask";
  out.one_hot.roi_count = out.bitmask.roi_count = roi_count;
  out.one_hot.dims = out.bitmask.dims = dims;
  out.one_hot.bytes_moved = out.one_hot.peak_mask_bytes = n * static_cast<std::size_t>(roi_count);
  out.bitmask.bytes_moved = out.bitmask.peak_mask_bytes = n * sizeof(std::uint32_t);
  out.storage_ratio = static_cast<double>(out.one_hot.bytes_moved) / static_cast<double>(out.bitmask.bytes_moved);

  // One D_mean term per ROI, so every channel is decoded during the loss.
  PlanTemplate plan;
  for (const auto& m : masks) {
    if (m.voxel_count() == 0) continue;
    plan.specs.push_back({m.name, RoiClass::oar, MetricKind::d_mean(), Bound{BoundOp::le, 1e6, BoundUnit::gy},
                          std::nullopt, kOarWeight, std::nullopt});
  }
  std::mt19937_64 rng(seed + 1);
  std::vector<double> a(n);
  std::vector<double> b(n);
  for (std::size_t v = 0; v < n; ++v) {
    a[v] = 70.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53;
    b[v] = 70.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53;
  }
  const DoseGrid pred(dims, {}, std::move(a));
  const DoseGrid gt(dims, {}, std::move(b));
  LossConfig cfg;
  cfg.plan = plan;
  reset_codec_counters();
  cdm_loss(pred, gt, packed, cfg, true);
  const CodecCounters c = codec_counters();
  out.peak_decoded_masks = c.peak_masks;
  out.peak_decoded_bytes = c.peak_bytes;
  out.bitmask.peak_mask_bytes += c.peak_bytes;
  return out;
}

std::string to_json(const TransformBench& b) {
  nlohmann::json j = {{"one_hot", report_json(b.one_hot)}, {"bitmask", report_json(b.bitmask)}, {"speedup", b.speedup}};
  return j.dump(2);
}

std::string to_json(const MemoryBench& b) {
  nlohmann::json j = {{"one_hot", report_json(b.one_hot)},
                      {"bitmask", report_json(b.bitmask)},
                      {"storage_ratio", b.storage_ratio},
                      {"peak_decoded_masks", b.peak_decoded_masks},
                      {"peak_decoded_bytes", b.peak_decoded_bytes}};
  return j.dump(2);
}

std::string format_table(const std::vector<TransformBench>& rows) {
  std::string out = "rois  dims          one-hot ms (min..max)       bit-mask ms (min..max)      speedup\n";
  char line[160];
  for (const auto& r : rows) {
    const std::string dims = to_string(r.one_hot.dims);
    std::snprintf(line, sizeof line, "%4d  %-12s  %8.3f (%8.3f..%8.3f)  %8.3f (%8.3f..%8.3f)  %7.2fx\n",
                  r.one_hot.roi_count, dims.c_str(), r.one_hot.median_ns / 1e6, r.one_hot.min_ns / 1e6,
                  r.one_hot.max_ns / 1e6, r.bitmask.median_ns / 1e6, r.bitmask.min_ns / 1e6, r.bitmask.max_ns / 1e6,
                  r.speedup);
    out += line;
  }
  return out;
}

}  // namespace cdm
