#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "lung/analyzer.hpp"

namespace lung {

/// Mean over accepted nodules of the sigma-scaled Euclidean distance to the
/// nearest seed in feature space. Throws EmptySet if either side is empty.
double ft_dist(std::span<const FeatureVector> accepted, std::span<const FeatureVector> seeds,
               const SeedStats& stats);

/// Mean over features of the squared sigma-scaled gap between the accepted
/// and seed feature means. Throws EmptySet if either side is empty.
double ft_mmse(std::span<const FeatureVector> accepted, std::span<const FeatureVector> seeds,
               const SeedStats& stats);

/// (ft_dist - 1) / ((ft_mmse + 0.1) (mse + 0.1) (1 - ac)).
/// Throws DegenerateAcceptance when ac == 1 and std::invalid_argument when ac
/// lies outside [0, 1].
double score(double ft_dist, double ft_mmse, double mse, double ac);

struct GenerationCounts {
  std::size_t generated = 0;
  std::size_t clean = 0;        // single component straight out of the decoder
  std::size_t reconnected = 0;  // repaired by reconnection
  std::size_t inverted = 0;     // majority-on decodes, left unrepaired
  std::size_t empty = 0;        // nothing above threshold
  std::size_t accepted = 0;

  friend bool operator==(const GenerationCounts&, const GenerationCounts&) = default;
};

struct MetricsReport {
  double ac = 0.0;
  double mse = 0.0;  // raw per-voxel value; displayed x1000
  double ft_dist = 0.0;
  double ft_mmse = 0.0;
  double score = 0.0;
  bool score_degenerate = false;  // ac == 1; `score` is then NaN
  GenerationCounts counts;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Assembles a report; ac = accepted / generated. A fully accepted batch is
/// flagged instead of throwing.
MetricsReport make_report(const GenerationCounts& counts, double seed_mse,
                          std::span<const FeatureVector> accepted, std::span<const FeatureVector> seeds,
                          const SeedStats& stats);

/// Flat CSV row (raw values, full precision) and its header.
std::string metrics_csv_header();
std::string to_csv_row(const MetricsReport& report);
MetricsReport parse_csv_row(const std::string& row);

/// Human-readable row in the table convention: AC as a percentage, MSE x1000.
std::string format_table_header();
std::string format_table_row(const std::string& label, const MetricsReport& report);

}  // namespace lung
