#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace lung {

/// Grid extent in voxels, z outermost.
struct Dims {
  std::size_t nz = 0;
  std::size_t ny = 0;
  std::size_t nx = 0;

  constexpr std::size_t size() const { return nz * ny * nx; }
  friend constexpr bool operator==(const Dims&, const Dims&) = default;
};

/// Millimeters per voxel along z, y, x.
struct Spacing {
  double sz = 1.0;
  double sy = 1.0;
  double sx = 1.0;

  constexpr double voxel_volume() const { return sz * sy * sx; }
  friend constexpr bool operator==(const Spacing&, const Spacing&) = default;
};

struct Geometry {
  Dims dims;
  Spacing spacing;

  friend constexpr bool operator==(const Geometry&, const Geometry&) = default;
};

inline constexpr Dims kFullScaleDims{20, 40, 40};
inline constexpr Dims kDeskScaleDims{10, 16, 16};
inline constexpr Spacing kDefaultSpacing{1.25, 0.7, 0.7};
inline constexpr double kDefaultThreshold = 0.5;

/// Integer voxel coordinate (z, y, x).
struct Voxel {
  std::ptrdiff_t z = 0;
  std::ptrdiff_t y = 0;
  std::ptrdiff_t x = 0;

  friend constexpr bool operator==(const Voxel&, const Voxel&) = default;
};

/// Dense scalar field in [0, 1], row-major with z outermost.
///
/// Dimensions are fixed at construction. Values are stored as 32-bit floats,
/// which is also the on-disk precision, so a grid survives a file round trip
/// bit for bit.
class VoxelGrid {
 public:
  VoxelGrid() = default;
  explicit VoxelGrid(Geometry geometry);
  VoxelGrid(Geometry geometry, std::vector<float> values);

  const Geometry& geometry() const { return geometry_; }
  const Dims& dims() const { return geometry_.dims; }
  const Spacing& spacing() const { return geometry_.spacing; }
  std::size_t size() const { return values_.size(); }

  std::size_t index(std::size_t z, std::size_t y, std::size_t x) const {
    return (z * geometry_.dims.ny + y) * geometry_.dims.nx + x;
  }
  Voxel voxel(std::size_t linear_index) const;
  bool contains(const Voxel& v) const;

  float operator()(std::size_t z, std::size_t y, std::size_t x) const { return values_[index(z, y, x)]; }
  float operator[](std::size_t i) const { return values_[i]; }

  /// Writes one voxel; throws std::invalid_argument outside [0, 1].
  void set(std::size_t z, std::size_t y, std::size_t x, float value);
  void set(std::size_t linear_index, float value);

  std::span<const float> values() const { return values_; }

  /// Sum of all voxel values.
  double mass() const;

  friend bool operator==(const VoxelGrid&, const VoxelGrid&) = default;

 private:
  Geometry geometry_{};
  std::vector<float> values_;
};

/// On/off view of a grid after thresholding.
struct BinaryMask {
  Dims dims;
  std::vector<std::uint8_t> bits;

  std::size_t on_count() const;
  bool on(std::size_t i) const { return bits[i] != 0; }
};

/// 6-connected components of a mask. Label 0 is background; component ids
/// are 1..component_count, numbered in order of each component's smallest
/// linear index. `component_sizes[k - 1]` is the voxel count of id k.
struct ComponentLabeling {
  Dims dims;
  std::vector<std::uint32_t> labels;
  std::size_t component_count = 0;
  std::vector<std::size_t> component_sizes;
};

/// Bit flags selecting the axes a reflection mirrors.
struct AxisSet {
  static constexpr unsigned kX = 1;
  static constexpr unsigned kY = 2;
  static constexpr unsigned kZ = 4;

  unsigned bits = 0;

  constexpr bool has_x() const { return (bits & kX) != 0; }
  constexpr bool has_y() const { return (bits & kY) != 0; }
  constexpr bool has_z() const { return (bits & kZ) != 0; }
  friend constexpr bool operator==(const AxisSet&, const AxisSet&) = default;
};

/// All eight reflections; index 0 is the identity.
inline constexpr std::array<AxisSet, 8> kAllReflections{
    AxisSet{0}, AxisSet{1}, AxisSet{2}, AxisSet{3},
    AxisSet{4}, AxisSet{5}, AxisSet{6}, AxisSet{7}};

/// On where grid >= threshold. Requires 0 < threshold < 1.
BinaryMask binarize(const VoxelGrid& grid, double threshold = kDefaultThreshold);

ComponentLabeling label_components(const BinaryMask& mask);

/// Number of 6-connected components of the grid at `threshold`.
std::size_t count_components(const VoxelGrid& grid, double threshold = kDefaultThreshold);

/// Face-connected digital line from `from` to `to`, both endpoints included.
/// Consecutive voxels differ by one step along exactly one axis, so the path
/// has |dz| + |dy| + |dx| + 1 voxels.
std::vector<Voxel> digital_line(const Voxel& from, const Voxel& to);

/// Joins every component of the binarized grid into one.
///
/// Components are linked along a minimum spanning tree whose edge weights are
/// the Euclidean distances between the closest voxel pair of each component
/// pair; each tree edge is rasterized with `digital_line` and the off voxels
/// on it are set to 1. A single-component grid is returned unchanged.
/// Throws EmptyNodule if nothing is on.
VoxelGrid reconnect(const VoxelGrid& grid, double threshold = kDefaultThreshold);

/// Mirrors values along each selected axis.
VoxelGrid reflect(const VoxelGrid& grid, AxisSet axes);

/// Resamples every z-plane at (+0.5, +0.5) in (y, x): each output voxel is the
/// mean of the 2x2 in-plane block starting at it, clamping at the far edges.
VoxelGrid shift_half_pixel(const VoxelGrid& grid);

}  // namespace lung
