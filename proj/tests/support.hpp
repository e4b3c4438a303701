#pragma once

// Shared generators and brute-force oracles for the test binaries.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cdm/bitmask.hpp"
#include "cdm/permutation.hpp"
#include "cdm/plan_template.hpp"
#include "cdm/volume.hpp"

namespace testing {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::size_t below(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

// Random blobs plus salt noise, so masks overlap and have ragged edges.
inline std::vector<cdm::RoiMask> random_masks(std::mt19937_64& rng, const cdm::Dims& d, int count) {
  std::vector<cdm::RoiMask> out;
  for (int i = 0; i < count; ++i) {
    cdm::RoiMask m("roi_" + std::to_string(i), d);
    const double cx = uniform(rng, 0, static_cast<double>(d.nx));
    const double cy = uniform(rng, 0, static_cast<double>(d.ny));
    const double cz = uniform(rng, 0, static_cast<double>(d.nz));
    const double r = uniform(rng, 1.0, 0.4 * static_cast<double>(std::max({d.nx, d.ny, d.nz})));
    const double salt = uniform(rng, 0.0, 0.02);
    for (std::size_t z = 0; z < d.nz; ++z) {
      for (std::size_t y = 0; y < d.ny; ++y) {
        for (std::size_t x = 0; x < d.nx; ++x) {
          const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy, dz = static_cast<double>(z) - cz;
          const bool in = dx * dx + dy * dy + dz * dz <= r * r || uniform(rng, 0, 1) < salt;
          m.occupancy[d.index(x, y, z)] = in ? 1 : 0;
        }
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

// Forward scatter of one transform step: where does source voxel p go?
// Returns false when it leaves the lattice.
inline bool forward(const cdm::PermutationStep& step, const cdm::Dims& d, std::array<std::int64_t, 3>& p) {
  const std::array<std::int64_t, 3> n{static_cast<std::int64_t>(d.nx), static_cast<std::int64_t>(d.ny),
                                      static_cast<std::int64_t>(d.nz)};
  if (const auto* f = std::get_if<cdm::Flip>(&step)) {
    p[static_cast<std::size_t>(f->axis)] = n[static_cast<std::size_t>(f->axis)] - 1 - p[static_cast<std::size_t>(f->axis)];
    return true;
  }
  if (const auto* r = std::get_if<cdm::Rotate90>(&step)) {
    const int turns = ((r->quarter_turns % 4) + 4) % 4;
    const auto a = static_cast<std::size_t>(r->axis_a), b = static_cast<std::size_t>(r->axis_b);
    for (int t = 0; t < turns; ++t) {
      const std::int64_t u = p[a], v = p[b];
      p[a] = n[a] - 1 - v;
      p[b] = u;
    }
    return true;
  }
  const auto& t = std::get<cdm::Translate>(step);
  p[0] += t.dx;
  p[1] += t.dy;
  p[2] += t.dz;
  for (std::size_t i = 0; i < 3; ++i) {
    if (p[i] < 0 || p[i] >= n[i]) return false;
  }
  return true;
}

template <class T>
std::vector<T> scatter(const std::vector<T>& in, const cdm::Dims& d, const cdm::VoxelPermutation& perm) {
  std::vector<T> out(in.size(), T{});
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t x = 0; x < d.nx; ++x) {
        std::array<std::int64_t, 3> p{static_cast<std::int64_t>(x), static_cast<std::int64_t>(y),
                                      static_cast<std::int64_t>(z)};
        bool inside = true;
        for (const auto& s : perm.steps()) {
          if (!forward(s, d, p)) {
            inside = false;
            break;
          }
        }
        if (inside) {
          out[d.index(static_cast<std::size_t>(p[0]), static_cast<std::size_t>(p[1]), static_cast<std::size_t>(p[2]))] =
              in[d.index(x, y, z)];
        }
      }
    }
  }
  return out;
}

inline cdm::VoxelPermutation random_permutation(std::mt19937_64& rng, const cdm::Dims& d, int max_steps = 3) {
  cdm::VoxelPermutation p;
  const int steps = 1 + static_cast<int>(below(rng, static_cast<std::size_t>(max_steps)));
  for (int i = 0; i < steps; ++i) {
    switch (below(rng, 3)) {
      case 0:
        p = p.then(cdm::VoxelPermutation::flip(static_cast<int>(below(rng, 3))));
        break;
      case 1: {
        std::vector<std::array<int, 2>> planes;
        if (d.nx == d.ny) planes.push_back({0, 1});
        if (d.ny == d.nz) planes.push_back({1, 2});
        if (d.nx == d.nz) planes.push_back({0, 2});
        if (planes.empty()) break;
        const auto pl = planes[below(rng, planes.size())];
        p = p.then(cdm::VoxelPermutation::rotate90(pl[0], pl[1], 1 + static_cast<int>(below(rng, 3))));
        break;
      }
      default: {
        auto sh = [&](std::size_t n) { return static_cast<std::int64_t>(below(rng, n)) - static_cast<std::int64_t>(n / 2); };
        p = p.then(cdm::VoxelPermutation::translate(sh(d.nx), sh(d.ny), sh(d.nz)));
      }
    }
  }
  return p;
}

inline cdm::MetricSpec oar_spec(const std::string& roi, cdm::MetricKind kind, double w = 1.0) {
  return {roi, cdm::RoiClass::oar, kind, cdm::Bound{cdm::BoundOp::le, 1000.0, cdm::BoundUnit::gy}, std::nullopt, w,
          std::nullopt};
}

inline cdm::MetricSpec v_spec(const std::string& roi, double gy, double alpha, double w = 1.0) {
  return {roi, cdm::RoiClass::oar, cdm::MetricKind::v_gy(gy),
          cdm::Bound{cdm::BoundOp::le, 100.0, cdm::BoundUnit::pct_volume}, std::nullopt, w, alpha};
}

}  // namespace testing
