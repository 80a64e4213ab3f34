#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lung/analyzer.hpp"
#include "lung/dataset.hpp"
#include "lung/metrics.hpp"
#include "lung/net.hpp"

namespace lung {

enum class FeedbackMode { none, one_reflection };

std::string_view to_string(FeedbackMode m);
FeedbackMode parse_feedback_mode(std::string_view text);

/// A stretch of training. With `inject`, a batch is generated and analyzed
/// first, and the segment trains on the base set plus one reflection of every
/// accepted nodule; otherwise it trains on the base set alone.
struct Segment {
  std::size_t iterations = 0;
  bool inject = false;

  friend bool operator==(const Segment&, const Segment&) = default;
};

struct TrainConfig {
  std::string layer_spec = "32_3_64_256";
  Geometry geometry{kDeskScaleDims, kDefaultSpacing};
  std::size_t seed_count = 20;
  std::size_t total_iterations = 6000;
  FeedbackMode feedback_mode = FeedbackMode::none;
  std::vector<Segment> segments;  // empty: derived from the mode
  std::size_t batch_size = 64;
  std::uint64_t rng_seed = 1;
  std::size_t generation_batch = 400;
  double learning_rate = 1e-3;
  double threshold = kDefaultThreshold;

  /// Explicit segments if given; otherwise one base-only segment for mode
  /// none, or a 1:1:1:3 split (base, inject, inject, base) for one_reflection.
  std::vector<Segment> effective_segments() const;

  /// Throws std::invalid_argument on any inconsistency.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Flat "key = value" text; '#' starts a comment. Unknown keys are rejected.
TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::filesystem::path& path);
std::string to_config_text(const TrainConfig& config);

struct GenerationFlags {
  bool clean = false;        // one component before repair
  bool reconnected = false;  // several components, repaired into one
  bool inverted = false;     // more than half the grid on
  bool empty = false;        // nothing on

  friend bool operator==(const GenerationFlags&, const GenerationFlags&) = default;
};

struct GeneratedBatch {
  NoduleSet nodules;  // post-repair, provenance generated
  std::vector<GenerationFlags> flags;
  GenerationCounts counts;  // accepted stays 0 here
};

/// Decodes `count` latents drawn uniformly from [-1, 1]^d and repairs each.
/// Every multi-component decode is reconnected, inverted ones included; only
/// empty decodes stay without a component.
GeneratedBatch generate(const Network& net, const Geometry& geometry, std::size_t count, std::uint64_t rng_seed,
                        double threshold = kDefaultThreshold, std::string_view id_prefix = "gen");

struct Interpolation {
  std::vector<LatentVector> latents;
  NoduleSet raw;       // decoder outputs
  NoduleSet repaired;  // raw after reconnection
};

/// `steps` evenly spaced decodes on the latent segment between the encodings
/// of `a` and `b`, both endpoints included exactly.
Interpolation interpolate(const Network& net, const VoxelGrid& a, const VoxelGrid& b, std::size_t steps,
                          double threshold = kDefaultThreshold);

struct LatentScatter {
  std::vector<std::pair<double, double>> points;
  std::vector<double> variance;  // per latent dimension, over all seeds
};

/// Seed encodings projected onto latent dimensions (dim_a, dim_b).
LatentScatter latent_scatter(const Network& net, const NoduleSet& seeds, std::size_t dim_a, std::size_t dim_b);

/// Mean loss_mse of the autoencoder over the given images.
double reconstruction_mse(const Network& net, const NoduleSet& images);

struct SegmentSummary {
  std::size_t iterations = 0;
  bool inject = false;
  std::size_t injected = 0;
  std::size_t training_set_size = 0;
  double first_loss = 0.0;
  double last_loss = 0.0;
};

struct RunReport {
  TrainConfig config;
  MetricsReport metrics;
  std::vector<SegmentSummary> segments;
  std::vector<std::filesystem::path> artifacts;
  bool failed = false;
  std::string failure;
};

struct RunResult {
  RunReport report;
  Network net;
  NoduleSet seeds;
  NoduleSet accepted;
  std::vector<FeatureVector> accepted_features;
  std::vector<LossPoint> loss_history;
};

/// Seeds -> augment -> train (with feedback segments) -> generate -> repair ->
/// analyze -> metrics. Fully determined by the config. With `out_dir`, writes
/// config.txt, weights.bin, loss.csv, seed_stats.json, features.csv,
/// metrics.csv, report.txt, samples.pgm and accepted/. Failures are caught and
/// returned as a report marked failed.
RunResult run(const TrainConfig& config, const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// Field-wise means over the successful runs of one config.
struct SweepRow {
  std::string label;
  std::size_t runs = 0;
  std::size_t failures = 0;
  double ac = 0.0;
  double mse = 0.0;
  double ft_dist = 0.0;
  double ft_mmse = 0.0;
  double score = 0.0;
  bool score_degenerate = false;  // some run accepted everything
  double clean = 0.0;
  double reconnected = 0.0;
  double inverted = 0.0;
  double accepted = 0.0;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

struct SweepReport {
  std::vector<SweepRow> rows;  // sorted by mean score, best first
};

/// Runs every config `repeats` times, repeat r seeded with
/// derive_seed(config.rng_seed, r), and averages the metrics.
SweepReport sweep(std::span<const TrainConfig> configs, std::size_t repeats,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// One CSV row per config, in report order.
void write_sweep_csv(const std::filesystem::path& path, const SweepReport& report);

/// Label used in sweep tables, e.g. "32_3_64_256 none".
std::string config_label(const TrainConfig& config);

}  // namespace lung
