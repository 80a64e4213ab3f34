#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lung/voxel.hpp"

namespace lung {

// Grid file layout (all little-endian):
//   8 bytes   magic "LUNGGRD1"
//   3 x u64   nz, ny, nx
//   3 x f64   sz, sy, sx (mm)
//   n x f32   voxel values, row-major, z outermost
inline constexpr char kGridMagic[8] = {'L', 'U', 'N', 'G', 'G', 'R', 'D', '1'};

std::vector<std::uint8_t> encode_grid(const VoxelGrid& grid);
VoxelGrid decode_grid(std::span<const std::uint8_t> bytes);

void write_grid(const std::filesystem::path& path, const VoxelGrid& grid);
VoxelGrid read_grid(const std::filesystem::path& path);

/// Binary P5 PGM of one z-slice, 0..1 mapped to 0..255.
void write_pgm_slice(const std::filesystem::path& path, const VoxelGrid& grid, std::size_t z);

/// One row per grid, holding its middle `slices` z-planes side by side with a
/// one-pixel gray gutter. With 20-slice grids and slices = 8 this is the
/// familiar "middle 8 of 20" nodule strip.
void write_montage(const std::filesystem::path& path, std::span<const VoxelGrid> grids,
                   std::size_t slices = 8);

namespace le {

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void put_f64(std::vector<std::uint8_t>& out, double v);
void put_f32(std::vector<std::uint8_t>& out, float v);

/// Sequential little-endian reader over a byte span; throws FormatError on
/// truncation.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t u64();
  double f64();
  float f32();
  void expect_magic(const char (&magic)[8], const char* what);
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> take(std::size_t n);

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace le

}  // namespace lung
