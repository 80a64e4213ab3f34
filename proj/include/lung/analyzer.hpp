#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "lung/dataset.hpp"
#include "lung/rng.hpp"
#include "lung/voxel.hpp"

namespace lung {

inline constexpr std::size_t kFeatureCount = 12;

enum class Feature : std::size_t {
  volume,               // mm^3
  surface_area,         // mm^2, exposed voxel faces
  sa_to_vol,            // 1/mm
  compactness,          // surface_area^3 / volume^2
  extent_x,             // mm
  extent_y,             // mm
  extent_z,             // mm
  elongation,           // sqrt(lambda_max / lambda_min)
  flatness,             // sqrt(lambda_mid / lambda_min)
  sphericity,           // pi^(1/3) (6V)^(2/3) / A
  equivalent_diameter,  // mm, diameter of the sphere of equal volume
  fill_fraction,        // volume / bounding-box volume
};

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames{
    "volume",     "surface_area", "sa_to_vol",  "compactness",         "extent_x",     "extent_y",
    "extent_z",   "elongation",   "flatness",   "sphericity", "equivalent_diameter", "fill_fraction"};

using FeatureArray = std::array<double, kFeatureCount>;

struct FeatureVector {
  FeatureArray values{};

  double operator[](Feature f) const { return values[static_cast<std::size_t>(f)]; }
  double& operator[](Feature f) { return values[static_cast<std::size_t>(f)]; }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// Shape descriptors of a binarized nodule, in millimeter units.
///
/// Principal axes come from the second-moment matrix of the on-voxels, each
/// voxel treated as a solid box (its own s^2/12 variance per axis is added),
/// so a single voxel or a flat slab still has a finite elongation.
/// Throws EmptyNodule / MultiComponent when the mask is not one component.
FeatureVector extract_features(const VoxelGrid& grid, double threshold = kDefaultThreshold);

inline constexpr double kMinVolumeMm3 = 4.0;

/// Static pre-filter: volume strictly above 4 mm^3.
bool static_filter(const FeatureVector& fv);

/// |(y + 3 * running_mean - 4 * mu) / sigma|
double weighted_distance(double y, double running_mean, double mu, double sigma);

/// Keep probability for one feature: 0.7 + 0.9 / d when both the sample and the
/// running mean sit on the same side of mu and d > 3, otherwise 1.
double p_keep(double y, double running_mean, double mu, double d);

/// Per-feature mean and sample standard deviation over the seed nodules.
struct SeedStats {
  FeatureArray mu{};
  FeatureArray sigma{};

  /// Sigmas of zero (single seed, constant feature) are floored to a tiny
  /// positive value so distances stay finite.
  static SeedStats from_features(std::span<const FeatureVector> seeds);

  friend bool operator==(const SeedStats&, const SeedStats&) = default;
};

/// Running mean of the accepted stream plus the stream of keep draws.
class AcceptanceState {
 public:
  AcceptanceState(const SeedStats& stats, std::uint64_t rng_seed);

  /// Mean of accepted features so far; equals the seed means until the first
  /// acceptance.
  const FeatureArray& running_mean() const { return mean_; }
  std::size_t accepted_count() const { return count_; }

  void record(const FeatureVector& fv);
  Rng& rng() { return rng_; }

 private:
  FeatureArray sum_{};
  FeatureArray mean_{};
  std::size_t count_ = 0;
  Rng rng_;
};

/// One Bernoulli draw per feature whose keep probability is below 1 (no draw
/// otherwise); the nodule is kept iff every draw keeps. Acceptance folds its
/// features into the running mean. Rejection leaves mean and count untouched.
bool accept(const FeatureVector& fv, const SeedStats& stats, AcceptanceState& state);

enum class Verdict : std::uint8_t {
  accepted,
  rejected_statistical,
  rejected_static,
  rejected_empty,
  rejected_multicomponent,
};

std::string_view to_string(Verdict v);

struct NoduleVerdict {
  Verdict verdict = Verdict::rejected_empty;
  std::optional<FeatureVector> features;
};

struct BatchAnalysis {
  NoduleSet accepted;
  std::vector<FeatureVector> accepted_features;
  std::vector<NoduleVerdict> verdicts;  // one per input record, in input order
  AcceptanceState state;
};

std::vector<FeatureVector> extract_all(const NoduleSet& set, double threshold = kDefaultThreshold);

/// Sequential analyzer pass; acceptance depends on order through the running mean.
BatchAnalysis analyze_batch(const NoduleSet& nodules, const SeedStats& stats, std::uint64_t rng_seed,
                            double threshold = kDefaultThreshold);

/// Header: index, source_id, provenance, the 12 feature names, status.
void write_feature_csv(const std::filesystem::path& path, const NoduleSet& nodules,
                       std::span<const NoduleVerdict> verdicts);

void write_seed_stats(const std::filesystem::path& path, const SeedStats& stats);
SeedStats read_seed_stats(const std::filesystem::path& path);

}  // namespace lung
