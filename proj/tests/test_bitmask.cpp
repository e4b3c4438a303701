#include <doctest.h>

#include <random>

#include "cdm/bitmask.hpp"
#include "cdm/error.hpp"
#include "cdm/kernels.hpp"
#include "support.hpp"

using namespace cdm;

TEST_CASE("word layout: ROI i occupies bit i-1") {
  const Dims d{3, 1, 1};
  std::vector<RoiMask> masks{{"a", d, {1, 0, 1}}, {"b", d, {0, 1, 1}}, {"c", d, {0, 0, 1}}};
  const BitMaskVolume b = encode(masks);
  CHECK(b.words()[0] == 1u);
  CHECK(b.words()[1] == 2u);
  CHECK(b.words()[2] == 7u);
  CHECK(b.bit_index("a") == 1);
  CHECK(b.bit_index("c") == 3);
  CHECK(decode(b, "b").occupancy == std::vector<std::uint8_t>{0, 1, 1});
}

TEST_CASE("encode/decode round trip up to 32 ROIs") {
  std::mt19937_64 rng(11);
  for (int n : {1, 3, 17, 30, 32}) {
    const Dims d{9, 7, 5};
    const auto masks = testing::random_masks(rng, d, n);
    const BitMaskVolume b = encode(masks);
    CHECK(decode_all(b) == masks);
    for (int i = 0; i < n; ++i) CHECK(roi_voxel_count(b, masks[static_cast<std::size_t>(i)].name) == masks[static_cast<std::size_t>(i)].voxel_count());
  }
}

TEST_CASE("bit 32 survives") {
  const Dims d{2, 1, 1};
  std::vector<RoiMask> masks;
  for (int i = 0; i < 32; ++i) masks.push_back({"r" + std::to_string(i), d, {0, 0}});
  masks.back().occupancy = {1, 0};
  const BitMaskVolume b = encode(masks);
  CHECK(b.words()[0] == 0x80000000u);
  CHECK(decode(b, 32).occupancy == std::vector<std::uint8_t>{1, 0});
}

TEST_CASE("codec errors") {
  const Dims d{2, 1, 1};
  std::vector<RoiMask> masks;
  for (int i = 0; i < 33; ++i) masks.push_back({"r" + std::to_string(i), d, {0, 1}});
  CHECK_THROWS_AS(encode(masks), ValidationError);
  masks.resize(2);
  masks[1].name = "r0";
  CHECK_THROWS_AS(encode(masks), ValidationError);
  masks[1].name = "r1";
  masks[1].dims = Dims{1, 2, 1};
  CHECK_THROWS_AS(encode(masks), ValidationError);

  const BitMaskVolume b(d, {1u, 3u}, {"a", "b"});
  CHECK_THROWS_AS(decode(b, "zzz"), UnknownRoiError);
  CHECK_THROWS_AS(decode(b, 3), ValidationError);
  CHECK_THROWS_AS(decode(b, 0), ValidationError);
  // A bit above the table is not allowed.
  CHECK_THROWS_AS(BitMaskVolume(d, {4u, 0u}, {"a", "b"}), ValidationError);
  try {
    decode(b, "Unknown");
  } catch (const UnknownRoiError& e) {
    CHECK(std::string(e.what()) == "unknown ROI 'Unknown'");
  }
}

TEST_CASE("transforms commute with decoding") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 40; ++trial) {
    const bool cube = trial % 2 == 0;
    const Dims d = cube ? Dims{8, 8, 8} : Dims{7, 7, 5};
    const auto masks = testing::random_masks(rng, d, 5);
    const BitMaskVolume b = encode(masks);
    const VoxelPermutation t = testing::random_permutation(rng, d);
    const BitMaskVolume moved = apply_permutation(b, t);
    for (const auto& m : masks) {
      const auto expect = testing::scatter(m.occupancy, d, t);
      CHECK(decode(moved, m.name).occupancy == expect);
      CHECK(apply_permutation(m, t).occupancy == expect);
    }
  }
}

TEST_CASE("elementary transforms") {
  const Dims d{3, 3, 1};
  // x + 3y
  const std::vector<std::uint8_t> grid{1, 0, 0, 0, 0, 0, 0, 0, 0};
  RoiMask m("m", d, grid);
  CHECK(apply_permutation(m, VoxelPermutation::flip(0)).occupancy[2] == 1);
  // (0,0) -> (n-1-0, 0) = (2, 0)
  CHECK(apply_permutation(m, VoxelPermutation::rotate90(0, 1)).occupancy[d.index(2, 0, 0)] == 1);
  // Shifted out entirely.
  const auto gone = apply_permutation(m, VoxelPermutation::translate(-1, 0, 0)).occupancy;
  CHECK(std::count(gone.begin(), gone.end(), 1) == 0);
  CHECK(apply_permutation(m, VoxelPermutation::translate(1, 2, 0)).occupancy[d.index(1, 2, 0)] == 1);
  // Four quarter turns are the identity.
  CHECK(apply_permutation(m, VoxelPermutation::rotate90(0, 1, 4)).occupancy == grid);
}

TEST_CASE("rotation needs a square plane") {
  CHECK_THROWS_AS(VoxelPermutation::rotate90(0, 2).validate(Dims{4, 4, 3}), ValidationError);
  CHECK_NOTHROW(VoxelPermutation::rotate90(0, 1).validate(Dims{4, 4, 3}));
  const BitMaskVolume b(Dims{4, 4, 3}, std::vector<std::uint32_t>(48, 0), {"a"});
  CHECK_THROWS_AS(apply_permutation(b, VoxelPermutation::rotate90(1, 2)), ValidationError);
}

TEST_CASE("permutation parsing") {
  const auto p = VoxelPermutation::parse("flip-x+rot90-xy:2+shift:1,0,-2");
  REQUIRE(p.steps().size() == 3);
  CHECK(std::get<Flip>(p.steps()[0]).axis == 0);
  CHECK(std::get<Rotate90>(p.steps()[1]).quarter_turns == 2);
  CHECK(std::get<Translate>(p.steps()[2]).dz == -2);
  CHECK(VoxelPermutation::parse(p.describe()).describe() == p.describe());
  CHECK_THROWS_AS(VoxelPermutation::parse("flip-w"), ValidationError);
  CHECK_THROWS_AS(VoxelPermutation::parse("shift:1,2"), ValidationError);
}

TEST_CASE("decode-on-demand counters") {
  const Dims d{4, 1, 1};
  const BitMaskVolume b(d, {1u, 3u, 2u, 0u}, {"a", "b"});
  reset_codec_counters();
  {
    const RoiMembers a = decode_members(b, "a");
    CHECK(a.size() == 2);
    CHECK(codec_counters().live_masks == 1);
    {
      const RoiMembers bb = decode_members(b, "b");
      CHECK(codec_counters().live_masks == 2);
    }
    CHECK(codec_counters().live_masks == 1);
    RoiMembers moved = decode_members(b, "b");
    RoiMembers other = std::move(moved);
    CHECK(codec_counters().live_masks == 2);
  }
  const CodecCounters c = codec_counters();
  CHECK(c.live_masks == 0);
  CHECK(c.peak_masks == 2);
  CHECK(c.total_decodes == 3);
}

TEST_CASE("serial and parallel kernels agree") {
  std::mt19937_64 rng(17);
  const Dims d{33, 29, 17};
  const auto masks = testing::random_masks(rng, d, 9);
  std::vector<std::span<const std::uint8_t>> ch;
  for (const auto& m : masks) ch.push_back(m.occupancy);
  std::vector<std::uint32_t> ws(d.count()), wp(d.count());
  kernels::serial::encode(ch, ws);
  kernels::parallel::encode(ch, wp);
  CHECK(ws == wp);
  for (std::uint32_t bit = 1; bit <= 9; ++bit) {
    const std::uint32_t mask = 1u << (bit - 1);
    CHECK(kernels::serial::members(ws, mask) == kernels::parallel::members(ws, mask));
    CHECK(kernels::serial::count_bit(ws, mask) == kernels::parallel::count_bit(ws, mask));
    std::vector<std::uint8_t> a(d.count()), b(d.count());
    kernels::serial::decode(ws, mask, a);
    kernels::parallel::decode(ws, mask, b);
    CHECK(a == b);
  }
  const Dims cube{16, 16, 16};
  const auto cm = testing::random_masks(rng, cube, 4);
  std::vector<std::span<const std::uint8_t>> cc;
  for (const auto& m : cm) cc.push_back(m.occupancy);
  std::vector<std::uint32_t> cw(cube.count());
  kernels::serial::encode(cc, cw);
  for (int trial = 0; trial < 10; ++trial) {
    const kernels::LatticeMap map(testing::random_permutation(rng, cube), cube);
    std::vector<std::uint32_t> a(cube.count()), b(cube.count());
    kernels::serial::permute<std::uint32_t>(cw, map, a);
    kernels::parallel::permute<std::uint32_t>(cw, map, b);
    CHECK(a == b);
  }

  std::vector<double> x(100003), y(100003);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = testing::uniform(rng, 0, 70);
    y[i] = testing::uniform(rng, 0, 70);
  }
  CHECK(kernels::serial::sum(x) == doctest::Approx(kernels::parallel::sum(x)).epsilon(1e-12));
  CHECK(kernels::serial::abs_diff_sum(x, y) == doctest::Approx(kernels::parallel::abs_diff_sum(x, y)).epsilon(1e-12));
  CHECK(kernels::serial::count_at_least(x, 35.0) == kernels::parallel::count_at_least(x, 35.0));
  CHECK(kernels::serial::count_within(x, 35.0, 0.5) == kernels::parallel::count_within(x, 35.0, 0.5));
  CHECK(kernels::serial::sigmoid_sum(x, 35.0, 2.0) ==
        doctest::Approx(kernels::parallel::sigmoid_sum(x, 35.0, 2.0)).epsilon(1e-12));
  std::vector<double> s1(x.size()), s2(x.size()), g1(x.size()), g2(x.size());
  kernels::serial::sigmoid_slope(x, 35.0, 2.0, s1);
  kernels::parallel::sigmoid_slope(x, 35.0, 2.0, s2);
  CHECK(s1 == s2);
  kernels::serial::abs_diff_grad(x, y, 0.5, g1);
  kernels::parallel::abs_diff_grad(x, y, 0.5, g2);
  CHECK(g1 == g2);
}

TEST_CASE("parallel reductions are reproducible") {
  std::mt19937_64 rng(19);
  std::vector<double> x(3 * kernels::kReduceBlock + 17);
  for (double& v : x) v = testing::uniform(rng, 0, 1);
  const double first = kernels::parallel::sum(x);
  for (int i = 0; i < 5; ++i) CHECK(kernels::parallel::sum(x) == first);
}

TEST_CASE("row map agrees with the per-voxel inverse walk") {
  std::mt19937_64 rng(12);
  const std::vector<Dims> shapes{{9, 9, 9}, {7, 7, 4}, {5, 8, 8}, {6, 3, 6}};
  std::vector<VoxelPermutation> perms{
      VoxelPermutation::translate(5, 0, 0).then(VoxelPermutation::translate(-5, 0, 0)),
      VoxelPermutation::translate(2, -1, 0).then(VoxelPermutation::flip(0)).then(VoxelPermutation::translate(-3, 2, 1))};
  for (const Dims& d : shapes) {
    std::vector<VoxelPermutation> all = perms;
    for (int i = 0; i < 40; ++i) all.push_back(testing::random_permutation(rng, d, 5));
    for (const auto& p : all) {
      const kernels::LatticeMap map(p, d);
      for (std::size_t z = 0; z < d.nz; ++z) {
        for (std::size_t y = 0; y < d.ny; ++y) {
          const auto r = map.row(static_cast<std::int64_t>(y), static_cast<std::int64_t>(z));
          for (std::size_t x = 0; x < d.nx; ++x) {
            std::int64_t sx = static_cast<std::int64_t>(x), sy = static_cast<std::int64_t>(y), sz = static_cast<std::int64_t>(z);
            const bool inside = map.source(sx, sy, sz);
            const auto xi = static_cast<std::int64_t>(x);
            REQUIRE(inside == (xi >= r.lo && xi < r.hi));
            if (inside) {
              CHECK(r.base + xi * r.stride ==
                    static_cast<std::int64_t>(d.index(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy),
                                                      static_cast<std::size_t>(sz))));
            }
          }
        }
      }
    }
  }
}
