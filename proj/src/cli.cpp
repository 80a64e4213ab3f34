#include "lung/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lung/analyzer.hpp"
#include "lung/dataset.hpp"
#include "lung/error.hpp"
#include "lung/grid_io.hpp"
#include "lung/metrics.hpp"
#include "lung/net.hpp"
#include "lung/pipeline.hpp"

namespace lung::cli {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::uint64_t seed = 1;
  std::string out;
  std::string in;
  std::string run_dir;
  std::string stats;
  std::size_t count = 0;
  std::size_t steps = 6;
  double threshold = kDefaultThreshold;
  std::size_t iterations = 0;
  std::size_t repeats = 2;
  std::size_t first = 0;
  std::size_t second = 1;
  std::vector<std::size_t> bottlenecks;
  std::vector<std::string> archs;
};

TrainConfig base_config(const Options& o) {
  TrainConfig c = o.config.empty() ? TrainConfig{} : load_config(o.config);
  c.threshold = o.threshold;
  return c;
}

struct LoadedRun {
  TrainConfig config;
  Network net;
};

LoadedRun load_run(const fs::path& dir) {
  return {load_config(dir / "config.txt"), load_network(dir / "weights.bin")};
}

// Replaces the narrowest hidden width of `spec` with `width`.
std::string with_bottleneck(const std::string& spec, std::size_t width) {
  std::vector<std::size_t> hidden = parse_hidden_spec(spec);
  *std::min_element(hidden.begin(), hidden.end()) = width;
  return format_hidden_spec(hidden);
}

int cmd_seeds(const Options& o, std::ostream& out) {
  const TrainConfig c = base_config(o);
  const std::size_t count = o.count ? o.count : c.seed_count;
  const NoduleSet seeds = synth_seeds(count, c.geometry, o.seed);
  save_set(seeds, o.out);
  out << "wrote " << seeds.size() << " seeds to " << o.out << '\n';
  return kExitOk;
}

int cmd_augment(const Options& o, std::ostream& out) {
  const NoduleSet base = augment(load_set(o.in));
  save_set(base, o.out);
  out << "wrote " << base.size() << " base records to " << o.out << '\n';
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  TrainConfig c = base_config(o);
  c.rng_seed = o.seed;
  if (o.iterations) {
    c.total_iterations = o.iterations;
    c.segments.clear();
  }
  const RunResult r = run(c, fs::path(o.out));
  if (r.report.failed) throw Error("run failed: " + r.report.failure);
  out << format_table_header() << '\n' << format_table_row(config_label(c), r.report.metrics) << '\n';
  return kExitOk;
}

int cmd_generate(const Options& o, std::ostream& out) {
  const LoadedRun run = load_run(o.run_dir);
  const std::size_t count = o.count ? o.count : run.config.generation_batch;
  const GeneratedBatch batch = generate(run.net, run.config.geometry, count, o.seed, o.threshold);
  save_set(batch.nodules, o.out);
  const auto& c = batch.counts;
  out << "generated " << c.generated << ": clean " << c.clean << ", reconnected " << c.reconnected
      << ", inverted " << c.inverted << ", empty " << c.empty << '\n';
  return kExitOk;
}

int cmd_interpolate(const Options& o, std::ostream& out) {
  const LoadedRun run = load_run(o.run_dir);
  const NoduleSet seeds = load_set(o.in.empty() ? fs::path(o.run_dir) / "seeds" : fs::path(o.in));
  if (o.first >= seeds.size() || o.second >= seeds.size()) throw std::out_of_range("seed index out of range");
  const Interpolation path = interpolate(run.net, seeds[o.first].grid, seeds[o.second].grid, o.steps, o.threshold);
  fs::create_directories(o.out);
  save_set(path.repaired, fs::path(o.out) / "repaired");
  const auto grids = path.repaired.grids();
  write_montage(fs::path(o.out) / "interpolation.pgm", grids);
  for (std::size_t k = 0; k < path.latents.size(); ++k) {
    out << "step " << k << ':';
    for (Eigen::Index i = 0; i < path.latents[k].values.size(); ++i) out << ' ' << path.latents[k].values(i);
    out << '\n';
  }
  return kExitOk;
}

int cmd_analyze(const Options& o, std::ostream& out) {
  const NoduleSet nodules = load_set(o.in);
  SeedStats stats;
  if (!o.stats.empty()) {
    stats = read_seed_stats(o.stats);
  } else if (!o.run_dir.empty()) {
    stats = read_seed_stats(fs::path(o.run_dir) / "seed_stats.json");
  } else {
    throw CLI::ValidationError("--stats", "analyze needs --stats or --run");
  }
  const BatchAnalysis a = analyze_batch(nodules, stats, o.seed, o.threshold);
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_feature_csv(fs::path(o.out) / "features.csv", nodules, a.verdicts);
    save_set(a.accepted, fs::path(o.out) / "accepted");
  }
  out << "accepted " << a.accepted.size() << " of " << nodules.size() << '\n';
  return kExitOk;
}

int cmd_score(const Options& o, std::ostream& out) {
  const fs::path dir = o.run_dir;
  const TrainConfig c = load_config(dir / "config.txt");
  std::ifstream in(dir / "metrics.csv");
  if (!in) throw Error("cannot open " + (dir / "metrics.csv").string());
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  if (header != metrics_csv_header()) throw FormatError("metrics.csv: unexpected header");
  out << format_table_header() << '\n' << format_table_row(config_label(c), parse_csv_row(row)) << '\n';
  return kExitOk;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  TrainConfig base = base_config(o);
  base.rng_seed = o.seed;
  if (o.iterations) {
    base.total_iterations = o.iterations;
    base.segments.clear();
  }
  std::vector<TrainConfig> configs;
  for (const auto& spec : o.archs) {
    TrainConfig c = base;
    c.layer_spec = spec;
    configs.push_back(c);
  }
  for (std::size_t b : o.bottlenecks) {
    TrainConfig c = base;
    c.layer_spec = with_bottleneck(base.layer_spec, b);
    configs.push_back(c);
  }
  if (configs.empty()) configs.push_back(base);
  for (const auto& c : configs) c.validate();

  std::optional<fs::path> dir;
  if (!o.out.empty()) dir = fs::path(o.out);
  const SweepReport report = sweep(configs, o.repeats, dir);
  out << format_table_header() << '\n';
  for (const SweepRow& r : report.rows) {
    MetricsReport m;
    m.ac = r.ac;
    m.mse = r.mse;
    m.ft_dist = r.ft_dist;
    m.ft_mmse = r.ft_mmse;
    m.score = r.score;
    m.score_degenerate = r.score_degenerate || r.failures == r.runs;
    m.counts.clean = static_cast<std::size_t>(std::lround(r.clean));
    m.counts.inverted = static_cast<std::size_t>(std::lround(r.inverted));
    out << format_table_row(r.label, m);
    if (r.failures) out << "  (" << r.failures << '/' << r.runs << " failed)";
    out << '\n';
  }
  return kExitOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  const std::size_t networks = o.count ? o.count : 20;
  const double worst = gradient_check(networks, o.seed);
  out << "max relative gradient error over " << networks << " networks: " << std::scientific
      << std::setprecision(3) << worst << '\n';
  return worst < 1e-4 ? kExitOk : kExitFailure;
}

int cmd_export_montage(const Options& o, std::ostream& out) {
  const NoduleSet set = load_set(o.in);
  std::vector<VoxelGrid> grids;
  const std::size_t n = o.count ? std::min(o.count, set.size()) : set.size();
  for (std::size_t i = 0; i < n; ++i) grids.push_back(set[i].grid);
  write_montage(o.out, grids);
  out << "wrote " << n << " rows to " << o.out << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Autoencoder-based lung nodule shape generation", "lung"};
  app.require_subcommand(1, 1);
  Options o;

  auto seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Base random seed")->capture_default_str(); };
  auto threshold = [&](CLI::App* c) {
    c->add_option("--threshold", o.threshold, "Binarization threshold")->check(CLI::Range(0.0, 1.0));
  };
  auto config = [&](CLI::App* c) { c->add_option("--config", o.config, "Config file")->check(CLI::ExistingFile); };

  auto* seeds = app.add_subcommand("seeds", "Synthesize seed nodules");
  config(seeds);
  seed(seeds);
  seeds->add_option("--count", o.count, "Number of seeds (default from config)");
  seeds->add_option("--out", o.out, "Output set directory")->required();

  auto* aug = app.add_subcommand("augment", "Expand seeds into the 16-variant base set");
  aug->add_option("--in", o.in, "Seed set directory")->required()->check(CLI::ExistingDirectory);
  aug->add_option("--out", o.out, "Output set directory")->required();

  auto* train = app.add_subcommand("train", "Run the full pipeline and write its artifacts");
  config(train);
  seed(train);
  threshold(train);
  train->add_option("--iterations", o.iterations, "Override total_iterations");
  train->add_option("--out", o.out, "Run directory")->required();

  auto* gen = app.add_subcommand("generate", "Decode random latents with a trained network");
  gen->add_option("--run", o.run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  seed(gen);
  threshold(gen);
  gen->add_option("--count", o.count, "Number of nodules (default generation_batch)");
  gen->add_option("--out", o.out, "Output set directory")->required();

  auto* interp = app.add_subcommand("interpolate", "Decode along the latent segment between two seeds");
  interp->add_option("--run", o.run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  interp->add_option("--in", o.in, "Seed set directory (default <run>/seeds)");
  interp->add_option("--a", o.first, "First seed index")->capture_default_str();
  interp->add_option("--b", o.second, "Second seed index")->capture_default_str();
  interp->add_option("--steps", o.steps, "Number of decodes")->capture_default_str()->check(CLI::Range(2, 1000));
  threshold(interp);
  interp->add_option("--out", o.out, "Output directory")->required();

  auto* analyze = app.add_subcommand("analyze", "Run the acceptance filter over a set");
  analyze->add_option("--in", o.in, "Nodule set directory")->required()->check(CLI::ExistingDirectory);
  analyze->add_option("--stats", o.stats, "Seed statistics JSON")->check(CLI::ExistingFile);
  analyze->add_option("--run", o.run_dir, "Run directory supplying seed_stats.json")->check(CLI::ExistingDirectory);
  seed(analyze);
  threshold(analyze);
  analyze->add_option("--out", o.out, "Output directory for features.csv and accepted/");

  auto* score = app.add_subcommand("score", "Print the metrics row of a finished run");
  score->add_option("--run", o.run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  auto* sw = app.add_subcommand("sweep", "Train several architectures and tabulate averaged metrics");
  config(sw);
  seed(sw);
  threshold(sw);
  sw->add_option("--bottlenecks", o.bottlenecks, "Bottleneck widths, e.g. 2,3,4,8")->delimiter(',');
  sw->add_option("--arch", o.archs, "Hidden-layer specs, e.g. 32_3_64_256")->delimiter(',');
  sw->add_option("--repeats", o.repeats, "Runs per configuration")->capture_default_str()->check(CLI::PositiveNumber);
  sw->add_option("--iterations", o.iterations, "Override total_iterations");
  sw->add_option("--out", o.out, "Output directory");

  auto* grad = app.add_subcommand("gradcheck", "Compare backprop with finite differences");
  seed(grad);
  grad->add_option("--count", o.count, "Number of random networks (default 20)");

  auto* montage = app.add_subcommand("export-montage", "Write middle slices of a set as one PGM");
  montage->add_option("--in", o.in, "Nodule set directory")->required()->check(CLI::ExistingDirectory);
  montage->add_option("--count", o.count, "Number of nodules (default all)");
  montage->add_option("--out", o.out, "Output PGM path")->required();

  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  try {
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (seeds->parsed()) return cmd_seeds(o, out);
    if (aug->parsed()) return cmd_augment(o, out);
    if (train->parsed()) return cmd_train(o, out);
    if (gen->parsed()) return cmd_generate(o, out);
    if (interp->parsed()) return cmd_interpolate(o, out);
    if (analyze->parsed()) return cmd_analyze(o, out);
    if (score->parsed()) return cmd_score(o, out);
    if (sw->parsed()) return cmd_sweep(o, out);
    if (grad->parsed()) return cmd_gradcheck(o, out);
    if (montage->parsed()) return cmd_export_montage(o, out);
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace lung::cli
