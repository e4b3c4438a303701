#include <doctest.h>

#include <json.hpp>

#include "cdm/bench_harness.hpp"

using namespace cdm;

TEST_CASE("transform bench on a small grid") {
  BenchOptions o;
  o.repetitions = 5;
  for (int rois : {1, 4, 12}) {
    const TransformBench b = bench_transform({16, 16, 16}, rois, VoxelPermutation::flip(0), o);
    CHECK(b.one_hot.roi_count == rois);
    CHECK(b.one_hot.repetitions == 5);
    CHECK(b.bitmask.min_ns <= b.bitmask.median_ns);
    CHECK(b.bitmask.median_ns <= b.bitmask.max_ns);
    CHECK(b.speedup > 0.0);
    CHECK(b.one_hot.bytes_moved == 2u * 4096u * static_cast<std::size_t>(rois));
    CHECK(b.bitmask.bytes_moved == 2u * 4096u * 4u);
  }
  o.parallel = true;
  CHECK_NOTHROW(bench_transform({12, 12, 12}, 5, VoxelPermutation::rotate90(0, 1, 1), o));
  const auto j = nlohmann::json::parse(to_json(bench_transform({8, 8, 8}, 2, VoxelPermutation::translate(1, 0, -1), o)));
  CHECK(j.contains("speedup"));
  CHECK_THROWS(bench_transform({8, 8, 8}, 33, VoxelPermutation::flip(0), o));
}

TEST_CASE("storage ratio and decoded residency") {
  const MemoryBench m30 = bench_memory({16, 16, 16}, 30);
  CHECK(m30.storage_ratio == doctest::Approx(7.5));
  CHECK(m30.peak_decoded_masks == 1);
  CHECK(m30.peak_decoded_bytes <= 4096u * sizeof(std::size_t));
  CHECK(bench_memory({16, 16, 16}, 4).storage_ratio == doctest::Approx(1.0));
  CHECK(nlohmann::json::parse(to_json(m30))["storage_ratio"] == 7.5);
}
