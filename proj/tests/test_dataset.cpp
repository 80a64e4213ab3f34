#include <cmath>

#include "doctest.h"
#include "lung/analyzer.hpp"
#include "lung/dataset.hpp"
#include "lung/error.hpp"
#include "support.hpp"

using namespace lung;

namespace {

const Geometry kDesk{kDeskScaleDims, kDefaultSpacing};

// Ball of radius r (voxels) around the grid center, symmetric under every reflection.
VoxelGrid sphere(const Geometry& g, double r) {
  VoxelGrid grid(g);
  const double cz = (g.dims.nz - 1) / 2.0, cy = (g.dims.ny - 1) / 2.0, cx = (g.dims.nx - 1) / 2.0;
  for (std::size_t z = 0; z < g.dims.nz; ++z)
    for (std::size_t y = 0; y < g.dims.ny; ++y)
      for (std::size_t x = 0; x < g.dims.nx; ++x) {
        const double d = std::sqrt((z - cz) * (z - cz) + (y - cy) * (y - cy) + (x - cx) * (x - cx));
        grid.set(z, y, x, d <= r ? 1.0f : 0.0f);
      }
  return grid;
}

}  // namespace

TEST_CASE("synthetic seeds are reproducible, single-component and pass the static filter") {
  const NoduleSet a = synth_seeds(20, kDesk, 7);
  REQUIRE(a.size() == 20);
  CHECK(a == synth_seeds(20, kDesk, 7));
  CHECK(synth_seeds(1, kDesk, 7) == synth_seeds(1, kDesk, 7));
  CHECK_FALSE(a == synth_seeds(20, kDesk, 8));
  for (const auto& r : a) {
    CHECK(r.provenance == Provenance::seed);
    CHECK(r.grid.geometry() == kDesk);
    CHECK(count_components(r.grid) == 1);
    CHECK(static_filter(extract_features(r.grid)));
    for (float v : r.grid.values()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
  // Seeds are not all the same shape.
  CHECK_FALSE(a[0].grid == a[1].grid);
  CHECK_THROWS_AS(synth_seeds(0, kDesk, 1), std::invalid_argument);
}

TEST_CASE("augmentation yields sixteen variants per seed") {
  const NoduleSet seeds = synth_seeds(51, kDesk, 3);
  const NoduleSet base = augment(seeds);
  CHECK(base.size() == 816);

  const NoduleSet one = augment(synth_seeds(1, kDesk, 3));
  REQUIRE(one.size() == 16);
  const NoduleSet first = synth_seeds(1, kDesk, 3);
  std::size_t identical = 0;
  for (const auto& r : one) identical += r.grid == first[0].grid ? 1 : 0;
  CHECK(identical == 1);
  CHECK(one[0].grid == first[0].grid);
  CHECK(one[0].provenance == Provenance::seed);
  for (std::size_t i = 1; i < 8; ++i) CHECK(one[i].provenance == Provenance::reflection);
  for (std::size_t i = 8; i < 16; ++i) CHECK(one[i].provenance == Provenance::shifted_reflection);
  for (std::size_t i = 0; i < 8; ++i) CHECK(one[i].grid == reflect(first[0].grid, kAllReflections[i]));
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(one[8 + i].grid == reflect(shift_half_pixel(first[0].grid), kAllReflections[i]));
  }
  CHECK_THROWS_AS(augment(NoduleSet(kDesk)), EmptySet);
}

TEST_CASE("a symmetric sphere has eight identical unshifted variants") {
  const Geometry g{{9, 11, 11}, kDefaultSpacing};
  NoduleSet seeds(g);
  seeds.add(sphere(g, 3.2), Provenance::seed, "ball");
  const NoduleSet base = augment(seeds);
  for (std::size_t i = 1; i < 8; ++i) CHECK(base[i].grid == base[0].grid);
}

TEST_CASE("feedback injection appends one reflection per accepted nodule") {
  const NoduleSet base = augment(synth_seeds(2, kDesk, 5));
  CHECK(inject_feedback(base, NoduleSet(kDesk), 1) == base);

  NoduleSet accepted(kDesk);
  const NoduleSet extra = synth_seeds(5, kDesk, 99);
  for (const auto& r : extra) accepted.add(r.grid, Provenance::generated, r.source_id);
  const NoduleSet out = inject_feedback(base, accepted, 1);
  REQUIRE(out.size() == base.size() + accepted.size());
  CHECK(out == inject_feedback(base, accepted, 1));
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(out[i].grid == base[i].grid);
  for (std::size_t k = 0; k < accepted.size(); ++k) {
    const auto& r = out[base.size() + k];
    CHECK(r.provenance == Provenance::accepted_feedback);
    bool matches = false;
    for (const AxisSet a : kAllReflections) matches = matches || r.grid == reflect(accepted[k].grid, a);
    CHECK(matches);
  }
}

TEST_CASE("816 base plus 302 accepted makes 1118 records") {
  const NoduleSet base = augment(synth_seeds(51, kDesk, 3));
  NoduleSet accepted(kDesk);
  for (std::size_t i = 0; i < 302; ++i) accepted.add(base[i].grid, Provenance::generated, "g");
  CHECK(inject_feedback(base, accepted, 4).size() == 1118);
}

TEST_CASE("sets reject mixed geometry and round-trip through a directory") {
  NoduleSet set(kDesk);
  CHECK_THROWS_AS(set.add(VoxelGrid(test::geometry(2, 2, 2)), Provenance::seed, "x"), DimensionMismatch);

  const NoduleSet seeds = synth_seeds(3, kDesk, 12);
  const auto dir = test::scratch_dir("dataset");
  save_set(seeds, dir);
  CHECK(std::filesystem::exists(dir / "manifest.txt"));
  CHECK(std::filesystem::exists(dir / "00002.grid"));
  CHECK(load_set(dir) == seeds);

  const auto empty_dir = test::scratch_dir("dataset_empty");
  save_set(NoduleSet(kDesk), empty_dir);
  const NoduleSet reloaded = load_set(empty_dir);
  CHECK(reloaded.empty());
  CHECK(reloaded.geometry() == kDesk);
}

TEST_CASE("provenance names round-trip") {
  for (auto p : {Provenance::seed, Provenance::reflection, Provenance::shifted_reflection, Provenance::generated,
                 Provenance::accepted_feedback}) {
    CHECK(parse_provenance(to_string(p)) == p);
  }
  CHECK_THROWS_AS(parse_provenance("mystery"), FormatError);
}
