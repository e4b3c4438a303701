#include "cdm/kernels.hpp"

#include <algorithm>
#include <type_traits>

#include "cdm/error.hpp"

#ifdef CDM_HAVE_OPENMP
#include <omp.h>
#endif

namespace cdm::kernels {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::int64_t extent(const Dims& d, int axis) { return static_cast<std::int64_t>(d[axis]); }

std::size_t block_count(std::size_t n) { return (n + kReduceBlock - 1) / kReduceBlock; }

// Sums per-block partials computed in parallel, then combines them in block order.
template <class BlockFn>
double blocked_sum(std::size_t n, BlockFn&& block_fn) {
  const std::size_t blocks = block_count(n);
  std::vector<double> partial(blocks, 0.0);
  const auto nb = static_cast<std::int64_t>(blocks);
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < nb; ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kReduceBlock;
    const std::size_t hi = std::min(n, lo + kReduceBlock);
    partial[static_cast<std::size_t>(b)] = block_fn(lo, hi);
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

template <class Pred>
std::size_t parallel_count(std::size_t n, Pred&& pred) {
  std::size_t total = 0;
  const auto ni = static_cast<std::int64_t>(n);
#pragma omp parallel for reduction(+ : total) schedule(static)
  for (std::int64_t i = 0; i < ni; ++i) {
    if (pred(static_cast<std::size_t>(i))) ++total;
  }
  return total;
}

}  // namespace

LatticeMap::LatticeMap(const VoxelPermutation& perm, const Dims& dims) : dims_(dims) {
  perm.validate(dims);
  // Forward steps s1..sk; the output -> source walk applies inverses sk^-1 .. s1^-1.
  const auto& steps = perm.steps();
  for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
    std::visit(Overloaded{
                   [&](const Flip& f) { inverse_ops_.push_back({0, f.axis, 0, {0, 0, 0}}); },
                   [&](const Rotate90& r) {
                     const int turns = ((r.quarter_turns % 4) + 4) % 4;
                     for (int k = 0; k < turns; ++k) inverse_ops_.push_back({1, r.axis_a, r.axis_b, {0, 0, 0}});
                   },
                   [&](const Translate& t) { inverse_ops_.push_back({2, 0, 0, {t.dx, t.dy, t.dz}}); },
               },
               *it);
  }
  Affine m{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, {0, 0, 0}};
  for (const Op& op : inverse_ops_) {
    switch (op.kind) {
      case 0:
        for (auto& v : m.r[op.a]) v = -v;
        m.t[op.a] = extent(dims_, op.a) - 1 - m.t[op.a];
        break;
      case 1: {
        const Affine old = m;
        for (int k = 0; k < 3; ++k) {
          m.r[op.a][k] = old.r[op.b][k];
          m.r[op.b][k] = -old.r[op.a][k];
        }
        m.t[op.a] = old.t[op.b];
        m.t[op.b] = extent(dims_, op.a) - 1 - old.t[op.a];
        break;
      }
      default:
        for (int a = 0; a < 3; ++a) m.t[a] -= op.t[a];
        checks_.push_back(m);
    }
  }
  map_ = m;
}

LatticeMap::Row LatticeMap::row(std::int64_t y, std::int64_t z) const {
  Row out;
  out.lo = 0;
  out.hi = extent(dims_, 0);
  // c(x) = c0 + step * x with step in {-1, 0, 1}; clip [lo, hi) to 0 <= c(x) < n.
  auto clip = [&](const Affine& a) {
    for (int i = 0; i < 3; ++i) {
      const std::int64_t c0 = a.r[i][1] * y + a.r[i][2] * z + a.t[i];
      const std::int64_t step = a.r[i][0];
      const std::int64_t n = extent(dims_, i);
      if (step == 0) {
        if (c0 < 0 || c0 >= n) out.hi = out.lo;
      } else if (step > 0) {
        out.lo = std::max(out.lo, -c0);
        out.hi = std::min(out.hi, n - c0);
      } else {
        out.lo = std::max(out.lo, c0 - n + 1);
        out.hi = std::min(out.hi, c0 + 1);
      }
    }
  };
  for (const Affine& a : checks_) clip(a);
  clip(map_);
  if (out.hi < out.lo) out.hi = out.lo;
  const std::int64_t nx = extent(dims_, 0);
  const std::int64_t sxy = nx * extent(dims_, 1);
  const std::int64_t stride_of[3] = {1, nx, sxy};
  for (int i = 0; i < 3; ++i) {
    out.base += (map_.r[i][1] * y + map_.r[i][2] * z + map_.t[i]) * stride_of[i];
    out.stride += map_.r[i][0] * stride_of[i];
  }
  return out;
}

bool LatticeMap::source(std::int64_t& x, std::int64_t& y, std::int64_t& z) const {
  std::int64_t c[3] = {x, y, z};
  for (const Op& op : inverse_ops_) {
    switch (op.kind) {
      case 0:
        c[op.a] = extent(dims_, op.a) - 1 - c[op.a];
        break;
      case 1: {
        // forward (u, v) -> (n-1-v, u), so source u = dst v, source v = n-1-dst u
        const std::int64_t u = c[op.a];
        const std::int64_t v = c[op.b];
        c[op.a] = v;
        c[op.b] = extent(dims_, op.a) - 1 - u;
        break;
      }
      default:
        for (int a = 0; a < 3; ++a) {
          c[a] -= op.t[a];
          if (c[a] < 0 || c[a] >= extent(dims_, a)) return false;
        }
    }
  }
  x = c[0];
  y = c[1];
  z = c[2];
  return true;
}

int thread_count() {
#ifdef CDM_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// ---------------------------------------------------------------------------
// serial reference

namespace serial {

void encode(std::span<const std::span<const std::uint8_t>> masks, std::span<std::uint32_t> words) {
  std::fill(words.begin(), words.end(), 0u);
  for (std::size_t m = 0; m < masks.size(); ++m) {
    for (std::size_t v = 0; v < words.size(); ++v) words[v] |= static_cast<std::uint32_t>(masks[m][v] != 0) << m;
  }
}

void decode(std::span<const std::uint32_t> words, std::uint32_t bit_mask, std::span<std::uint8_t> out) {
  for (std::size_t v = 0; v < words.size(); ++v) out[v] = (words[v] & bit_mask) != 0 ? 1 : 0;
}

std::size_t count_bit(std::span<const std::uint32_t> words, std::uint32_t bit_mask) {
  std::size_t n = 0;
  for (auto w : words) n += (w & bit_mask) != 0;
  return n;
}

std::vector<std::size_t> members(std::span<const std::uint32_t> words, std::uint32_t bit_mask) {
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < words.size(); ++v) {
    if (words[v] & bit_mask) out.push_back(v);
  }
  return out;
}

template <class T>
void permute(std::span<const T> in, const LatticeMap& map, std::span<T> out) {
  const Dims& d = map.dims();
  const auto nx = static_cast<std::int64_t>(d.nx);
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      T* dst = out.data() + d.index(0, y, z);
      const LatticeMap::Row r = map.row(static_cast<std::int64_t>(y), static_cast<std::int64_t>(z));
      std::fill(dst, dst + r.lo, T{0});
      for (std::int64_t x = r.lo; x < r.hi; ++x) dst[x] = in[static_cast<std::size_t>(r.base + x * r.stride)];
      std::fill(dst + r.hi, dst + nx, T{0});
    }
  }
}

template void permute<std::uint8_t>(std::span<const std::uint8_t>, const LatticeMap&, std::span<std::uint8_t>);
template void permute<std::uint32_t>(std::span<const std::uint32_t>, const LatticeMap&, std::span<std::uint32_t>);

std::vector<double> gather(std::span<const double> values, std::span<const std::size_t> index) {
  std::vector<double> out;
  out.reserve(index.size());
  for (auto i : index) out.push_back(values[i]);
  return out;
}

double sum(std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

double abs_diff_sum(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

void abs_diff_grad(std::span<const double> a, std::span<const double> b, double scale, std::span<double> out) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    out[i] = d > 0.0 ? scale : (d < 0.0 ? -scale : 0.0);
  }
}

std::size_t count_at_least(std::span<const double> values, double threshold) {
  std::size_t n = 0;
  for (double v : values) n += v >= threshold;
  return n;
}

std::size_t count_within(std::span<const double> values, double center, double margin) {
  std::size_t n = 0;
  for (double v : values) n += std::abs(v - center) <= margin;
  return n;
}

double sigmoid_sum(std::span<const double> values, double threshold, double alpha) {
  double s = 0.0;
  for (double v : values) s += logistic(alpha * (v - threshold));
  return s;
}

void sigmoid_slope(std::span<const double> values, double threshold, double alpha, std::span<double> out) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double s = logistic(alpha * (values[i] - threshold));
    out[i] = alpha * s * (1.0 - s);
  }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP

namespace parallel {

void encode(std::span<const std::span<const std::uint8_t>> masks, std::span<std::uint32_t> words) {
  const std::size_t n = words.size();
  const auto nb = static_cast<std::int64_t>(block_count(n));
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < nb; ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kReduceBlock;
    const std::size_t hi = std::min(n, lo + kReduceBlock);
    std::fill(words.begin() + static_cast<std::ptrdiff_t>(lo), words.begin() + static_cast<std::ptrdiff_t>(hi), 0u);
    for (std::size_t m = 0; m < masks.size(); ++m) {
      const std::uint8_t* src = masks[m].data();
      for (std::size_t v = lo; v < hi; ++v) words[v] |= static_cast<std::uint32_t>(src[v] != 0) << m;
    }
  }
}

void decode(std::span<const std::uint32_t> words, std::uint32_t bit_mask, std::span<std::uint8_t> out) {
  const auto n = static_cast<std::int64_t>(words.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t v = 0; v < n; ++v) {
    out[static_cast<std::size_t>(v)] = (words[static_cast<std::size_t>(v)] & bit_mask) != 0 ? 1 : 0;
  }
}

std::size_t count_bit(std::span<const std::uint32_t> words, std::uint32_t bit_mask) {
  return parallel_count(words.size(), [&](std::size_t v) { return (words[v] & bit_mask) != 0; });
}

std::vector<std::size_t> members(std::span<const std::uint32_t> words, std::uint32_t bit_mask) {
  const std::size_t n = words.size();
  const std::size_t blocks = block_count(n);
  std::vector<std::size_t> offset(blocks + 1, 0);
  const auto nb = static_cast<std::int64_t>(blocks);
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < nb; ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kReduceBlock;
    const std::size_t hi = std::min(n, lo + kReduceBlock);
    std::size_t c = 0;
    for (std::size_t v = lo; v < hi; ++v) c += (words[v] & bit_mask) != 0;
    offset[static_cast<std::size_t>(b) + 1] = c;
  }
  for (std::size_t b = 0; b < blocks; ++b) offset[b + 1] += offset[b];
  std::vector<std::size_t> out(offset[blocks]);
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < nb; ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kReduceBlock;
    const std::size_t hi = std::min(n, lo + kReduceBlock);
    std::size_t pos = offset[static_cast<std::size_t>(b)];
    for (std::size_t v = lo; v < hi; ++v) {
      if (words[v] & bit_mask) out[pos++] = v;
    }
  }
  return out;
}

template <class T>
void permute(std::span<const T> in, const LatticeMap& map, std::span<T> out) {
  const Dims& d = map.dims();
  const auto nx = static_cast<std::int64_t>(d.nx);
  const auto nz = static_cast<std::int64_t>(d.nz);
#pragma omp parallel for schedule(static)
  for (std::int64_t z = 0; z < nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      T* dst = out.data() + d.index(0, y, static_cast<std::size_t>(z));
      const LatticeMap::Row r = map.row(static_cast<std::int64_t>(y), z);
      std::fill(dst, dst + r.lo, T{0});
      for (std::int64_t x = r.lo; x < r.hi; ++x) dst[x] = in[static_cast<std::size_t>(r.base + x * r.stride)];
      std::fill(dst + r.hi, dst + nx, T{0});
    }
  }
}

template void permute<std::uint8_t>(std::span<const std::uint8_t>, const LatticeMap&, std::span<std::uint8_t>);
template void permute<std::uint32_t>(std::span<const std::uint32_t>, const LatticeMap&, std::span<std::uint32_t>);

std::vector<double> gather(std::span<const double> values, std::span<const std::size_t> index) {
  std::vector<double> out(index.size());
  const auto n = static_cast<std::int64_t>(index.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = values[index[static_cast<std::size_t>(i)]];
  return out;
}

double sum(std::span<const double> values) {
  return blocked_sum(values.size(), [&](std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += values[i];
    return s;
  });
}

double abs_diff_sum(std::span<const double> a, std::span<const double> b) {
  return blocked_sum(a.size(), [&](std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += std::abs(a[i] - b[i]);
    return s;
  });
}

void abs_diff_grad(std::span<const double> a, std::span<const double> b, double scale, std::span<double> out) {
  const auto n = static_cast<std::int64_t>(a.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double d = a[k] - b[k];
    out[k] = d > 0.0 ? scale : (d < 0.0 ? -scale : 0.0);
  }
}

std::size_t count_at_least(std::span<const double> values, double threshold) {
  return parallel_count(values.size(), [&](std::size_t i) { return values[i] >= threshold; });
}

std::size_t count_within(std::span<const double> values, double center, double margin) {
  return parallel_count(values.size(), [&](std::size_t i) { return std::abs(values[i] - center) <= margin; });
}

double sigmoid_sum(std::span<const double> values, double threshold, double alpha) {
  return blocked_sum(values.size(), [&](std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += logistic(alpha * (values[i] - threshold));
    return s;
  });
}

void sigmoid_slope(std::span<const double> values, double threshold, double alpha, std::span<double> out) {
  const auto n = static_cast<std::int64_t>(values.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double s = logistic(alpha * (values[k] - threshold));
    out[k] = alpha * s * (1.0 - s);
  }
}

}  // namespace parallel

}  // namespace cdm::kernels
