#include "lung/voxel.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <tuple>

#include "lung/error.hpp"

namespace lung {

namespace {

void check_value(float v) {
  if (!(v >= 0.0f && v <= 1.0f)) {
    throw std::invalid_argument("voxel value outside [0, 1]: " + std::to_string(v));
  }
}

constexpr std::array<Voxel, 6> kFaceOffsets{
    Voxel{-1, 0, 0}, Voxel{1, 0, 0}, Voxel{0, -1, 0},
    Voxel{0, 1, 0},  Voxel{0, 0, -1}, Voxel{0, 0, 1}};

std::size_t linear(const Dims& d, const Voxel& v) {
  return (static_cast<std::size_t>(v.z) * d.ny + static_cast<std::size_t>(v.y)) * d.nx +
         static_cast<std::size_t>(v.x);
}

bool inside(const Dims& d, const Voxel& v) {
  return v.z >= 0 && v.y >= 0 && v.x >= 0 && static_cast<std::size_t>(v.z) < d.nz &&
         static_cast<std::size_t>(v.y) < d.ny && static_cast<std::size_t>(v.x) < d.nx;
}

Voxel unlinear(const Dims& d, std::size_t i) {
  const std::size_t x = i % d.nx;
  const std::size_t y = (i / d.nx) % d.ny;
  const std::size_t z = i / (d.nx * d.ny);
  return {static_cast<std::ptrdiff_t>(z), static_cast<std::ptrdiff_t>(y),
          static_cast<std::ptrdiff_t>(x)};
}

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t i) {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }

  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

// ---- VoxelGrid ---------------------------------------------------------------

VoxelGrid::VoxelGrid(Geometry geometry)
    : geometry_(geometry), values_(geometry.dims.size(), 0.0f) {
  if (geometry.dims.size() == 0) throw std::invalid_argument("VoxelGrid: dims must be positive");
}

VoxelGrid::VoxelGrid(Geometry geometry, std::vector<float> values)
    : geometry_(geometry), values_(std::move(values)) {
  if (geometry.dims.size() == 0) throw std::invalid_argument("VoxelGrid: dims must be positive");
  if (values_.size() != geometry.dims.size()) {
    throw DimensionMismatch("VoxelGrid: expected " + std::to_string(geometry.dims.size()) +
                            " values, got " + std::to_string(values_.size()));
  }
  for (const float v : values_) check_value(v);
}

Voxel VoxelGrid::voxel(std::size_t linear_index) const { return unlinear(dims(), linear_index); }

bool VoxelGrid::contains(const Voxel& v) const { return inside(dims(), v); }

void VoxelGrid::set(std::size_t z, std::size_t y, std::size_t x, float value) {
  set(index(z, y, x), value);
}

void VoxelGrid::set(std::size_t linear_index, float value) {
  check_value(value);
  values_.at(linear_index) = value;
}

double VoxelGrid::mass() const {
  double total = 0.0;
  for (const float v : values_) total += v;
  return total;
}

std::size_t BinaryMask::on_count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

// ---- thresholding and connectivity -------------------------------------------

BinaryMask binarize(const VoxelGrid& grid, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw std::invalid_argument("binarize: threshold must lie in (0, 1)");
  }
  BinaryMask mask{grid.dims(), std::vector<std::uint8_t>(grid.size(), 0)};
  const auto values = grid.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    mask.bits[i] = static_cast<double>(values[i]) >= threshold ? 1 : 0;
  }
  return mask;
}

ComponentLabeling label_components(const BinaryMask& mask) {
  const Dims& d = mask.dims;
  ComponentLabeling out{d, std::vector<std::uint32_t>(mask.bits.size(), 0), 0, {}};
  std::vector<std::size_t> stack;

  // Scanning in linear order numbers components by their smallest member.
  for (std::size_t seed = 0; seed < mask.bits.size(); ++seed) {
    if (!mask.on(seed) || out.labels[seed] != 0) continue;
    const auto id = static_cast<std::uint32_t>(++out.component_count);
    std::size_t size = 0;
    out.labels[seed] = id;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      ++size;
      const Voxel v = unlinear(d, i);
      for (const Voxel& o : kFaceOffsets) {
        const Voxel n{v.z + o.z, v.y + o.y, v.x + o.x};
        if (!inside(d, n)) continue;
        const std::size_t j = linear(d, n);
        if (mask.on(j) && out.labels[j] == 0) {
          out.labels[j] = id;
          stack.push_back(j);
        }
      }
    }
    out.component_sizes.push_back(size);
  }
  return out;
}

std::size_t count_components(const VoxelGrid& grid, double threshold) {
  return label_components(binarize(grid, threshold)).component_count;
}

// ---- reconnection ----------------------------------------------------------------

std::vector<Voxel> digital_line(const Voxel& from, const Voxel& to) {
  const std::array<std::ptrdiff_t, 3> delta{to.z - from.z, to.y - from.y, to.x - from.x};
  std::array<std::ptrdiff_t, 3> length{};
  std::array<std::ptrdiff_t, 3> step{};
  for (std::size_t a = 0; a < 3; ++a) {
    length[a] = delta[a] < 0 ? -delta[a] : delta[a];
    step[a] = delta[a] < 0 ? -1 : 1;
  }
  std::array<std::ptrdiff_t, 3> taken{0, 0, 0};
  std::array<std::ptrdiff_t, 3> pos{from.z, from.y, from.x};

  std::vector<Voxel> path;
  path.reserve(static_cast<std::size_t>(length[0] + length[1] + length[2] + 1));
  path.push_back(from);
  while (taken[0] < length[0] || taken[1] < length[1] || taken[2] < length[2]) {
    // Advance the axis whose next boundary crossing (k + 1/2) / n comes first
    // along the segment; compared as exact rationals, ties go to z, then y.
    std::size_t best = 3;
    for (std::size_t a = 0; a < 3; ++a) {
      if (taken[a] >= length[a]) continue;
      if (best == 3 ||
          (2 * taken[a] + 1) * length[best] < (2 * taken[best] + 1) * length[a]) {
        best = a;
      }
    }
    ++taken[best];
    pos[best] += step[best];
    path.push_back({pos[0], pos[1], pos[2]});
  }
  return path;
}

VoxelGrid reconnect(const VoxelGrid& grid, double threshold) {
  const BinaryMask mask = binarize(grid, threshold);
  const ComponentLabeling labeling = label_components(mask);
  if (labeling.component_count == 0) throw EmptyNodule("reconnect: no voxel at or above threshold");
  if (labeling.component_count == 1) return grid;

  const Dims& d = grid.dims();
  const std::size_t k = labeling.component_count;

  // Only voxels with an off face-neighbor can be closest to another component.
  std::vector<std::vector<Voxel>> boundary(k);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (!mask.on(i)) continue;
    const Voxel v = unlinear(d, i);
    for (const Voxel& o : kFaceOffsets) {
      const Voxel n{v.z + o.z, v.y + o.y, v.x + o.x};
      if (inside(d, n) && !mask.on(linear(d, n))) {
        boundary[labeling.labels[i] - 1].push_back(v);
        break;
      }
    }
  }

  struct Bridge {
    std::ptrdiff_t dist2;
    std::size_t a;
    std::size_t b;
    Voxel from;
    Voxel to;
  };
  std::vector<Bridge> bridges;
  bridges.reserve(k * (k - 1) / 2);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      Bridge best{std::numeric_limits<std::ptrdiff_t>::max(), a, b, {}, {}};
      for (const Voxel& p : boundary[a]) {
        for (const Voxel& q : boundary[b]) {
          const std::ptrdiff_t dz = p.z - q.z, dy = p.y - q.y, dx = p.x - q.x;
          const std::ptrdiff_t d2 = dz * dz + dy * dy + dx * dx;
          if (d2 < best.dist2) {
            best.dist2 = d2;
            best.from = p;
            best.to = q;
          }
        }
      }
      bridges.push_back(best);
    }
  }
  std::stable_sort(bridges.begin(), bridges.end(), [](const Bridge& l, const Bridge& r) {
    return std::tie(l.dist2, l.a, l.b) < std::tie(r.dist2, r.a, r.b);
  });

  VoxelGrid out = grid;
  DisjointSet forest(k);
  std::size_t joined = 0;
  for (const Bridge& bridge : bridges) {
    if (!forest.unite(bridge.a, bridge.b)) continue;
    for (const Voxel& v : digital_line(bridge.from, bridge.to)) {
      const std::size_t i = linear(d, v);
      if (static_cast<double>(out[i]) < threshold) out.set(i, 1.0f);
    }
    if (++joined == k - 1) break;
  }
  return out;
}

// ---- geometric transforms ------------------------------------------------------

VoxelGrid reflect(const VoxelGrid& grid, AxisSet axes) {
  const Dims& d = grid.dims();
  std::vector<float> values(grid.size());
  for (std::size_t z = 0; z < d.nz; ++z) {
    const std::size_t sz = axes.has_z() ? d.nz - 1 - z : z;
    for (std::size_t y = 0; y < d.ny; ++y) {
      const std::size_t sy = axes.has_y() ? d.ny - 1 - y : y;
      for (std::size_t x = 0; x < d.nx; ++x) {
        const std::size_t sx = axes.has_x() ? d.nx - 1 - x : x;
        values[grid.index(z, y, x)] = grid(sz, sy, sx);
      }
    }
  }
  return VoxelGrid(grid.geometry(), std::move(values));
}

VoxelGrid shift_half_pixel(const VoxelGrid& grid) {
  const Dims& d = grid.dims();
  std::vector<float> values(grid.size());
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      const std::size_t y1 = std::min(y + 1, d.ny - 1);
      for (std::size_t x = 0; x < d.nx; ++x) {
        const std::size_t x1 = std::min(x + 1, d.nx - 1);
        const double sum = static_cast<double>(grid(z, y, x)) + grid(z, y, x1) +
                           grid(z, y1, x) + grid(z, y1, x1);
        values[grid.index(z, y, x)] = std::clamp(static_cast<float>(0.25 * sum), 0.0f, 1.0f);
      }
    }
  }
  return VoxelGrid(grid.geometry(), std::move(values));
}

}  // namespace lung
