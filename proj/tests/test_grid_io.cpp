#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "lung/error.hpp"
#include "lung/grid_io.hpp"
#include "support.hpp"

using namespace lung;

namespace {

struct Pgm {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;
};

Pgm read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  int maxval = 0;
  Pgm p;
  in >> magic >> p.width >> p.height >> maxval;
  REQUIRE(magic == "P5");
  REQUIRE(maxval == 255);
  in.get();
  p.pixels.resize(p.width * p.height);
  in.read(reinterpret_cast<char*>(p.pixels.data()), std::streamsize(p.pixels.size()));
  REQUIRE(in.gcount() == std::streamsize(p.pixels.size()));
  return p;
}

}  // namespace

TEST_CASE("grid bytes round-trip bit-exactly") {
  std::mt19937_64 rng(4);
  const VoxelGrid grid = test::random_grid(test::geometry(3, 5, 7, {1.25, 0.7, 0.7}), rng);
  const auto bytes = encode_grid(grid);
  CHECK(bytes.size() == 8 + 3 * 8 + 3 * 8 + 4 * grid.size());
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "LUNGGRD1");
  CHECK(decode_grid(bytes) == grid);

  const auto dir = test::scratch_dir("grid_io");
  write_grid(dir / "a.grid", grid);
  CHECK(read_grid(dir / "a.grid") == grid);
}

TEST_CASE("malformed grid bytes are rejected") {
  const VoxelGrid grid(test::geometry(2, 2, 2));
  auto bytes = encode_grid(grid);
  SUBCASE("bad magic") {
    bytes[0] = 'X';
    CHECK_THROWS_AS(decode_grid(bytes), FormatError);
  }
  SUBCASE("truncated") {
    bytes.pop_back();
    CHECK_THROWS_AS(decode_grid(bytes), FormatError);
  }
  SUBCASE("trailing bytes") {
    bytes.push_back(0);
    CHECK_THROWS_AS(decode_grid(bytes), FormatError);
  }
  SUBCASE("missing file") { CHECK_THROWS(read_grid("/nonexistent/lung.grid")); }
}

TEST_CASE("pgm slice and montage layout") {
  const auto g = test::geometry(10, 4, 3);
  VoxelGrid grid(g);
  grid.set(5, 1, 2, 1.0f);
  const auto dir = test::scratch_dir("pgm");

  write_pgm_slice(dir / "s.pgm", grid, 5);
  const Pgm s = read_pgm(dir / "s.pgm");
  CHECK(s.width == 3);
  CHECK(s.height == 4);
  CHECK(s.pixels[1 * 3 + 2] == 255);
  CHECK(s.pixels[0] == 0);

  const std::vector<VoxelGrid> grids{grid, VoxelGrid(g)};
  write_montage(dir / "m.pgm", grids, 4);
  const Pgm m = read_pgm(dir / "m.pgm");
  CHECK(m.width == 4 * 4 - 1);
  CHECK(m.height == 2 * 5 - 1);
  // Middle slices 3..6; slice 5 is the third tile.
  CHECK(m.pixels[1 * m.width + 2 * 4 + 2] == 255);
  CHECK(m.pixels[4 * m.width + 0] == 128);
  CHECK(m.pixels[0 * m.width + 3] == 128);
}
