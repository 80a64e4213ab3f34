#include <cmath>
#include <cstring>
#include <fstream>

#include "doctest.h"
#include "lung/error.hpp"
#include "lung/pipeline.hpp"
#include "support.hpp"

using namespace lung;

namespace {

const Geometry kDesk{kDeskScaleDims, kDefaultSpacing};

TrainConfig quick_config() {
  TrainConfig c;
  c.seed_count = 4;
  c.total_iterations = 60;
  c.generation_batch = 24;
  c.batch_size = 16;
  c.learning_rate = 3e-3;
  c.rng_seed = 3;
  return c;
}

}  // namespace

TEST_CASE("config text round-trips and rejects bad input") {
  TrainConfig c = quick_config();
  c.layer_spec = "16_4_32";
  c.feedback_mode = FeedbackMode::one_reflection;
  c.segments = {{20, false}, {10, true}, {10, true}, {20, false}};
  c.geometry = {{8, 12, 12}, {1.0, 0.5, 0.5}};
  c.threshold = 0.4;
  CHECK(parse_config(to_config_text(c)) == c);
  CHECK(parse_config("# all defaults\n\n") == TrainConfig{});

  CHECK_THROWS_AS(parse_config("colour = blue\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("seed_count\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("seed_count = -3\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("threshold = 1.0\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("layer_spec = 3__4\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("total_iterations = 100\nsegments = 50:0,40:1\nfeedback_mode = one_reflection\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_config("feedback_mode = none\nsegments = 1000:0,1000:1\n"), std::invalid_argument);
}

TEST_CASE("default feedback schedule") {
  TrainConfig c;
  CHECK(c.effective_segments() == std::vector<Segment>{{6000, false}});
  c.feedback_mode = FeedbackMode::one_reflection;
  c.total_iterations = 6000;
  CHECK(c.effective_segments() ==
        std::vector<Segment>{{1000, false}, {1000, true}, {1000, true}, {3000, false}});
  c.total_iterations = 6001;
  const auto s = c.effective_segments();
  CHECK(s.back().iterations == 3001);
}

TEST_CASE("generation flags and repair") {
  Rng rng(1);
  const Network net = Network::from_spec("8_3_8", kDesk.dims.size(), rng);
  const GeneratedBatch b = generate(net, kDesk, 30, 5);
  REQUIRE(b.nodules.size() == 30);
  CHECK(b.counts.generated == 30);
  CHECK(b.counts.clean + b.counts.reconnected + b.counts.empty == 30);
  for (std::size_t i = 0; i < 30; ++i) {
    CHECK(b.nodules[i].provenance == Provenance::generated);
    if (!b.flags[i].empty) CHECK(count_components(b.nodules[i].grid) == 1);
  }
  const GeneratedBatch again = generate(net, kDesk, 30, 5);
  CHECK(again.nodules == b.nodules);
  CHECK_THROWS_AS(generate(net, kDesk, 0, 5), std::invalid_argument);

  // A decoder biased fully on produces an inverted, clean grid.
  Network on({kDesk.dims.size(), 3, kDesk.dims.size()}, 1);
  on.params().back().bias.setConstant(5.0);
  const GeneratedBatch inv = generate(on, kDesk, 2, 1);
  CHECK(inv.flags[0].inverted);
  CHECK(inv.flags[0].clean);
  CHECK(inv.counts.inverted == 2);

  Network off({kDesk.dims.size(), 3, kDesk.dims.size()}, 1);
  off.params().back().bias.setConstant(-5.0);
  const GeneratedBatch none = generate(off, kDesk, 2, 1);
  CHECK(none.flags[0].empty);
  CHECK(none.counts.empty == 2);
}

TEST_CASE("interpolation endpoints are the reconstructions") {
  Rng rng(2);
  const Network net = Network::from_spec("8_3_8", kDesk.dims.size(), rng);
  const NoduleSet seeds = synth_seeds(2, kDesk, 9);
  for (std::size_t steps : {2u, 6u}) {
    const Interpolation p = interpolate(net, seeds[0].grid, seeds[1].grid, steps);
    REQUIRE(p.raw.size() == steps);
    CHECK(p.repaired.size() == steps);
    CHECK(p.latents.size() == steps);
    CHECK(p.raw[0].grid == forward(net, seeds[0].grid).reconstruction);
    CHECK(p.raw[steps - 1].grid == forward(net, seeds[1].grid).reconstruction);
    for (const auto& r : p.repaired)
      if (binarize(r.grid).on_count() > 0) CHECK(count_components(r.grid) == 1);
  }
  CHECK_THROWS_AS(interpolate(net, seeds[0].grid, seeds[1].grid, 1), std::invalid_argument);
}

TEST_CASE("latent scatter") {
  Rng rng(3);
  const Network net = Network::from_spec("8_3_8", kDesk.dims.size(), rng);
  const NoduleSet seeds = synth_seeds(6, kDesk, 10);
  const LatentScatter s = latent_scatter(net, seeds, 0, 2);
  CHECK(s.points.size() == 6);
  CHECK(s.variance.size() == 3);
  for (auto [a, b] : s.points) {
    CHECK(std::abs(a) <= 1.0);
    CHECK(std::abs(b) <= 1.0);
  }
  CHECK_THROWS_AS(latent_scatter(net, seeds, 0, 3), std::invalid_argument);
}

TEST_CASE("a short run is deterministic and writes its artifacts") {
  const TrainConfig c = quick_config();
  const auto dir = test::scratch_dir("pipeline_run");
  const RunResult a = run(c, dir);
  REQUIRE_FALSE(a.report.failed);
  CHECK(a.loss_history.size() == 60);
  for (const auto& path : a.report.artifacts) CHECK(std::filesystem::exists(path));
  for (const char* name : {"config.txt", "weights.bin", "loss.csv", "seed_stats.json", "features.csv", "metrics.csv",
                           "report.txt", "samples.pgm", "interpolation.pgm"}) {
    CHECK(std::filesystem::exists(dir / name));
  }
  CHECK(load_network(dir / "weights.bin") == a.net);
  CHECK(load_config(dir / "config.txt") == c);

  const RunResult b = run(c);
  CHECK(b.net == a.net);
  CHECK(b.accepted == a.accepted);
  CHECK(b.report.metrics.counts == a.report.metrics.counts);
  CHECK(std::memcmp(&a.report.metrics.score, &b.report.metrics.score, sizeof(double)) == 0);
  for (const auto& r : a.accepted) CHECK(count_components(r.grid) == 1);
}

TEST_CASE("feedback schedule injects exactly twice and ends on the base set") {
  TrainConfig c = quick_config();
  c.feedback_mode = FeedbackMode::one_reflection;
  c.total_iterations = 75;
  c.segments = {{25, false}, {12, true}, {13, true}, {25, false}};
  const RunResult r = run(c);
  REQUIRE_FALSE(r.report.failed);
  REQUIRE(r.report.segments.size() == 4);
  std::size_t injections = 0;
  for (const auto& s : r.report.segments) injections += s.inject ? 1 : 0;
  CHECK(injections == 2);
  CHECK_FALSE(r.report.segments.back().inject);
  CHECK(r.report.segments.back().training_set_size == 16 * c.seed_count);
  for (const auto& s : r.report.segments)
    if (s.inject) CHECK(s.training_set_size == 16 * c.seed_count + s.injected);
}

TEST_CASE("invalid configs are reported as failed runs") {
  TrainConfig c = quick_config();
  c.layer_spec = "nonsense";
  const RunResult r = run(c);
  CHECK(r.report.failed);
  CHECK_FALSE(r.report.failure.empty());
}

TEST_CASE("sweeps average repeats and sort by score") {
  std::vector<TrainConfig> configs;
  for (const char* spec : {"8_2_8", "8_3_8"}) {
    TrainConfig c = quick_config();
    c.layer_spec = spec;
    c.total_iterations = 30;
    configs.push_back(c);
  }
  const auto dir = test::scratch_dir("pipeline_sweep");
  const SweepReport a = sweep(configs, 2, dir);
  REQUIRE(a.rows.size() == 2);
  for (const auto& row : a.rows) CHECK(row.runs == 2);
  if (std::isfinite(a.rows[0].score) && std::isfinite(a.rows[1].score)) CHECK(a.rows[0].score >= a.rows[1].score);
  CHECK(std::filesystem::exists(dir / "sweep.csv"));
  CHECK(std::filesystem::exists(dir / "c1_r1" / "metrics.csv"));

  const SweepReport b = sweep(configs, 2);
  REQUIRE(b.rows.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(a.rows[i].label == b.rows[i].label);
    CHECK(a.rows[i].ac == b.rows[i].ac);
    CHECK(a.rows[i].mse == b.rows[i].mse);
  }
  CHECK_THROWS_AS(sweep(configs, 0), std::invalid_argument);
}
