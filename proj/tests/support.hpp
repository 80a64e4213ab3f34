#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "lung/voxel.hpp"

namespace test {

inline lung::Geometry geometry(std::size_t nz, std::size_t ny, std::size_t nx,
                               lung::Spacing spacing = {1.0, 1.0, 1.0}) {
  return {{nz, ny, nx}, spacing};
}

inline lung::VoxelGrid random_grid(const lung::Geometry& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> v(g.dims.size());
  for (auto& x : v) x = u(rng);
  return lung::VoxelGrid(g, std::move(v));
}

// Grid with value 1 at the listed voxels and 0 elsewhere.
inline lung::VoxelGrid grid_with(const lung::Geometry& g, const std::vector<lung::Voxel>& on) {
  lung::VoxelGrid grid(g);
  for (const auto& v : on) grid.set(v.z, v.y, v.x, 1.0f);
  return grid;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("lung_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace test
