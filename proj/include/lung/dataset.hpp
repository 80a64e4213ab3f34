#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lung/voxel.hpp"

namespace lung {

/// Where a record came from. The order is the only allowed direction of
/// derivation: a record may only be derived from one with an earlier tag.
enum class Provenance : std::uint8_t {
  seed = 0,
  reflection = 1,
  shifted_reflection = 2,
  generated = 3,
  accepted_feedback = 4,
};

std::string_view to_string(Provenance p);
Provenance parse_provenance(std::string_view text);

struct NoduleRecord {
  VoxelGrid grid;
  Provenance provenance = Provenance::seed;
  std::string source_id;

  friend bool operator==(const NoduleRecord&, const NoduleRecord&) = default;
};

/// Ordered records that all share one geometry.
class NoduleSet {
 public:
  NoduleSet() = default;
  explicit NoduleSet(Geometry geometry) : geometry_(geometry) {}

  const Geometry& geometry() const { return geometry_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  /// Throws DimensionMismatch if the grid geometry differs from the set's.
  void add(NoduleRecord record);
  void add(VoxelGrid grid, Provenance provenance, std::string source_id);

  const NoduleRecord& operator[](std::size_t i) const { return records_[i]; }
  const std::vector<NoduleRecord>& records() const { return records_; }
  auto begin() const { return records_.begin(); }
  auto end() const { return records_.end(); }

  std::vector<VoxelGrid> grids() const;

  friend bool operator==(const NoduleSet&, const NoduleSet&) = default;

 private:
  Geometry geometry_{};
  std::vector<NoduleRecord> records_;
};

/// Number of training variants produced per seed by `augment`.
inline constexpr std::size_t kVariantsPerSeed = 16;

/// Procedural stand-ins for segmented nodules: smoothed unions of one to four
/// randomly rotated ellipsoids, centered and fully inside the grid, each a
/// single 6-connected component above the static volume criterion.
NoduleSet synth_seeds(std::size_t count, Geometry geometry, std::uint64_t rng_seed);

/// 16 variants per seed, seed-major: the 8 axis reflections of the seed
/// (index 0 is the seed itself), then the 8 reflections of its half-pixel
/// shifted copy.
NoduleSet augment(const NoduleSet& seeds);

/// `base` followed by one uniformly chosen axis reflection of every accepted
/// nodule, tagged accepted_feedback.
NoduleSet inject_feedback(const NoduleSet& base, const NoduleSet& accepted, std::uint64_t rng_seed);

/// Writes `dir/NNNNN.grid` per record plus `dir/manifest.txt` with one
/// "filename provenance source_id" line per record.
void save_set(const NoduleSet& set, const std::filesystem::path& dir);
NoduleSet load_set(const std::filesystem::path& dir);

}  // namespace lung
