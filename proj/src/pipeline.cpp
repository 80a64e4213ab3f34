#include "lung/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "lung/error.hpp"
#include "lung/grid_io.hpp"

namespace lung {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos) {
    throw std::invalid_argument("config: " + key + " needs a non-negative integer, got '" + value + "'");
  }
  return std::stoull(value);
}

double parse_real(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) throw std::invalid_argument("config: " + key + " needs a number");
  return v;
}

// Shortest text that parses back to the same double.
std::string fmt_real(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string record_id(std::string_view prefix, std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "-%05zu", i);
  return std::string(prefix) + buf;
}

void write_report_text(const std::filesystem::path& path, const RunReport& r) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "# config\n" << to_config_text(r.config) << "\n# segments\n";
  out.precision(6);
  for (std::size_t i = 0; i < r.segments.size(); ++i) {
    const auto& s = r.segments[i];
    out << "segment " << i << ": iterations=" << s.iterations << " inject=" << (s.inject ? 1 : 0)
        << " injected=" << s.injected << " training_set=" << s.training_set_size << " first_loss=" << s.first_loss
        << " last_loss=" << s.last_loss << '\n';
  }
  out << "\n# metrics\n";
  if (r.failed) {
    out << "FAILED: " << r.failure << '\n';
  } else {
    out << format_table_header() << '\n' << format_table_row(r.config.layer_spec, r.metrics) << '\n';
  }
}

}  // namespace

// ---- configuration -----------------------------------------------------------------

std::string_view to_string(FeedbackMode m) { return m == FeedbackMode::none ? "none" : "one_reflection"; }

FeedbackMode parse_feedback_mode(std::string_view text) {
  if (text == "none") return FeedbackMode::none;
  if (text == "one_reflection") return FeedbackMode::one_reflection;
  throw std::invalid_argument("unknown feedback mode: " + std::string(text));
}

std::vector<Segment> TrainConfig::effective_segments() const {
  if (!segments.empty()) return segments;
  if (feedback_mode == FeedbackMode::none) return {{total_iterations, false}};
  const std::size_t part = total_iterations / 6;
  return {{part, false}, {part, true}, {part, true}, {total_iterations - 3 * part, false}};
}

void TrainConfig::validate() const {
  (void)parse_hidden_spec(layer_spec);
  if (geometry.dims.size() == 0) throw std::invalid_argument("config: dims must be positive");
  if (!(geometry.spacing.sz > 0 && geometry.spacing.sy > 0 && geometry.spacing.sx > 0)) {
    throw std::invalid_argument("config: spacing must be positive");
  }
  if (seed_count == 0) throw std::invalid_argument("config: seed_count must be positive");
  if (total_iterations == 0) throw std::invalid_argument("config: total_iterations must be positive");
  if (batch_size == 0) throw std::invalid_argument("config: batch_size must be positive");
  if (generation_batch == 0) throw std::invalid_argument("config: generation_batch must be positive");
  if (!(learning_rate > 0)) throw std::invalid_argument("config: learning_rate must be positive");
  if (!(threshold > 0 && threshold < 1)) throw std::invalid_argument("config: threshold must lie in (0, 1)");
  if (feedback_mode == FeedbackMode::one_reflection && segments.empty() && total_iterations < 6) {
    throw std::invalid_argument("config: one_reflection needs at least 6 iterations");
  }
  const auto segs = effective_segments();
  std::size_t sum = 0;
  for (const auto& s : segs) {
    if (s.iterations == 0) throw std::invalid_argument("config: empty training segment");
    sum += s.iterations;
  }
  if (sum != total_iterations) throw std::invalid_argument("config: segment iterations must sum to total_iterations");
  if (feedback_mode == FeedbackMode::none && (segs.size() != 1 || segs.front().inject)) {
    throw std::invalid_argument("config: feedback_mode none takes a single base-only segment");
  }
}

TrainConfig parse_config(std::string_view text) {
  TrainConfig c;
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key == "layer_spec") {
      (void)parse_hidden_spec(value);
      c.layer_spec = value;
    } else if (key == "dims") {
      const auto p = split(value, 'x');
      if (p.size() != 3) throw std::invalid_argument("config: dims must be NZxNYxNX");
      c.geometry.dims = {parse_count(key, p[0]), parse_count(key, p[1]), parse_count(key, p[2])};
    } else if (key == "spacing") {
      const auto p = split(value, 'x');
      if (p.size() != 3) throw std::invalid_argument("config: spacing must be SZxSYxSX");
      c.geometry.spacing = {parse_real(key, p[0]), parse_real(key, p[1]), parse_real(key, p[2])};
    } else if (key == "seed_count") {
      c.seed_count = parse_count(key, value);
    } else if (key == "total_iterations") {
      c.total_iterations = parse_count(key, value);
    } else if (key == "feedback_mode") {
      c.feedback_mode = parse_feedback_mode(value);
    } else if (key == "segments") {
      c.segments.clear();
      for (const auto& item : split(value, ',')) {
        const auto p = split(item, ':');
        if (p.size() != 2 || (p[1] != "0" && p[1] != "1")) {
          throw std::invalid_argument("config: segments are ITERATIONS:INJECT pairs, INJECT 0 or 1");
        }
        c.segments.push_back({parse_count(key, p[0]), p[1] == "1"});
      }
    } else if (key == "batch_size") {
      c.batch_size = parse_count(key, value);
    } else if (key == "rng_seed") {
      c.rng_seed = parse_count(key, value);
    } else if (key == "generation_batch") {
      c.generation_batch = parse_count(key, value);
    } else if (key == "learning_rate") {
      c.learning_rate = parse_real(key, value);
    } else if (key == "threshold") {
      c.threshold = parse_real(key, value);
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string to_config_text(const TrainConfig& c) {
  std::ostringstream out;
  const auto& d = c.geometry.dims;
  const auto& s = c.geometry.spacing;
  out << "layer_spec = " << c.layer_spec << '\n'
      << "dims = " << d.nz << 'x' << d.ny << 'x' << d.nx << '\n'
      << "spacing = " << fmt_real(s.sz) << 'x' << fmt_real(s.sy) << 'x' << fmt_real(s.sx) << '\n'
      << "seed_count = " << c.seed_count << '\n'
      << "total_iterations = " << c.total_iterations << '\n'
      << "feedback_mode = " << to_string(c.feedback_mode) << '\n';
  if (!c.segments.empty()) {
    out << "segments = ";
    for (std::size_t i = 0; i < c.segments.size(); ++i) {
      out << (i ? "," : "") << c.segments[i].iterations << ':' << (c.segments[i].inject ? 1 : 0);
    }
    out << '\n';
  }
  out << "batch_size = " << c.batch_size << '\n'
      << "rng_seed = " << c.rng_seed << '\n'
      << "generation_batch = " << c.generation_batch << '\n'
      << "learning_rate = " << fmt_real(c.learning_rate) << '\n'
      << "threshold = " << fmt_real(c.threshold) << '\n';
  return out.str();
}

// ---- generation ----------------------------------------------------------------------

GeneratedBatch generate(const Network& net, const Geometry& geometry, std::size_t count, std::uint64_t rng_seed,
                        double threshold, std::string_view id_prefix) {
  if (count == 0) throw std::invalid_argument("generate: count must be positive");
  GeneratedBatch out{NoduleSet(geometry), {}, {}};
  out.flags.reserve(count);
  Rng rng(derive_seed(rng_seed, "generate"));
  for (std::size_t i = 0; i < count; ++i) {
    const LatentVector latent = sample_latent(net.latent_dim(), rng);
    VoxelGrid grid = decode(net, latent, geometry);
    const BinaryMask mask = binarize(grid, threshold);
    const std::size_t on = mask.on_count();
    const std::size_t components = label_components(mask).component_count;

    GenerationFlags f;
    f.clean = components == 1;
    f.empty = on == 0;
    f.inverted = 2 * on > mask.bits.size();
    if (components > 1) {
      grid = reconnect(grid, threshold);
      f.reconnected = true;
    }
    out.counts.generated += 1;
    out.counts.clean += f.clean ? 1 : 0;
    out.counts.reconnected += f.reconnected ? 1 : 0;
    out.counts.inverted += f.inverted ? 1 : 0;
    out.counts.empty += f.empty ? 1 : 0;
    out.flags.push_back(f);
    out.nodules.add(std::move(grid), Provenance::generated, record_id(id_prefix, i));
  }
  return out;
}

Interpolation interpolate(const Network& net, const VoxelGrid& a, const VoxelGrid& b, std::size_t steps,
                          double threshold) {
  if (steps < 2) throw std::invalid_argument("interpolate: need at least 2 steps");
  if (a.geometry() != b.geometry()) throw DimensionMismatch("interpolate: endpoint geometries differ");
  const LatentVector la = encode(net, a);
  const LatentVector lb = encode(net, b);
  Interpolation out{{}, NoduleSet(a.geometry()), NoduleSet(a.geometry())};
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(steps - 1);
    // (1 - t) a + t b reproduces both endpoints exactly at t = 0 and t = 1
    LatentVector latent{((1.0 - t) * la.values + t * lb.values).eval()};
    VoxelGrid raw = decode(net, latent, a.geometry());
    VoxelGrid repaired = binarize(raw, threshold).on_count() > 0 ? reconnect(raw, threshold) : raw;
    out.latents.push_back(std::move(latent));
    out.raw.add(std::move(raw), Provenance::generated, record_id("interp", k));
    out.repaired.add(std::move(repaired), Provenance::generated, record_id("interp", k));
  }
  return out;
}

LatentScatter latent_scatter(const Network& net, const NoduleSet& seeds, std::size_t dim_a, std::size_t dim_b) {
  if (dim_a >= net.latent_dim() || dim_b >= net.latent_dim()) {
    throw std::invalid_argument("latent_scatter: dimension index out of range");
  }
  LatentScatter out;
  std::vector<Eigen::VectorXd> codes;
  for (const auto& r : seeds) {
    codes.push_back(encode(net, r.grid).values);
    out.points.emplace_back(codes.back()(static_cast<Eigen::Index>(dim_a)),
                            codes.back()(static_cast<Eigen::Index>(dim_b)));
  }
  out.variance.assign(net.latent_dim(), 0.0);
  if (codes.empty()) return out;
  for (std::size_t d = 0; d < net.latent_dim(); ++d) {
    const auto i = static_cast<Eigen::Index>(d);
    double mean = 0.0;
    for (const auto& c : codes) mean += c(i);
    mean /= static_cast<double>(codes.size());
    double ss = 0.0;
    for (const auto& c : codes) ss += (c(i) - mean) * (c(i) - mean);
    out.variance[d] = ss / static_cast<double>(codes.size());
  }
  return out;
}

double reconstruction_mse(const Network& net, const NoduleSet& images) {
  if (images.empty()) throw EmptySet("reconstruction_mse: no images");
  double total = 0.0;
  for (const auto& r : images) total += loss_mse(forward(net, r.grid).reconstruction, r.grid);
  return total / static_cast<double>(images.size());
}

// ---- end-to-end run ------------------------------------------------------------------

RunResult run(const TrainConfig& config, const std::optional<std::filesystem::path>& out_dir) {
  RunResult result;
  RunReport& report = result.report;
  report.config = config;
  const std::uint64_t seed = config.rng_seed;
  try {
    config.validate();
    const Geometry& geometry = config.geometry;

    result.seeds = synth_seeds(config.seed_count, geometry, derive_seed(seed, "seeds"));
    const NoduleSet base = augment(result.seeds);
    const std::vector<FeatureVector> seed_features = extract_all(result.seeds, config.threshold);
    const SeedStats stats = SeedStats::from_features(seed_features);

    Rng init_rng(derive_seed(seed, "init"));
    result.net = Network::from_spec(config.layer_spec, geometry.dims.size(), init_rng);
    AdamState adam = AdamState::for_network(result.net, {config.learning_rate, 0.9, 0.999, 1e-8});
    Rng train_rng(derive_seed(seed, "train"));

    const auto segments = config.effective_segments();
    std::size_t iteration = 0;
    for (std::size_t k = 0; k < segments.size(); ++k) {
      SegmentSummary summary{segments[k].iterations, segments[k].inject, 0, base.size(), 0.0, 0.0};
      NoduleSet training = base;
      if (segments[k].inject) {
        const GeneratedBatch batch = generate(result.net, geometry, config.generation_batch,
                                              derive_seed(seed, "feedback-generate", k), config.threshold,
                                              "fb" + std::to_string(k));
        const BatchAnalysis analysis =
            analyze_batch(batch.nodules, stats, derive_seed(seed, "feedback-analyze", k), config.threshold);
        training = inject_feedback(base, analysis.accepted, derive_seed(seed, "feedback-inject", k));
        summary.injected = analysis.accepted.size();
        summary.training_set_size = training.size();
      }
      const std::vector<VoxelGrid> images = training.grids();
      const auto history =
          train(result.net, adam, images, {segments[k].iterations, config.batch_size}, train_rng, iteration);
      summary.first_loss = history.front().mse;
      summary.last_loss = history.back().mse;
      iteration += history.size();
      result.loss_history.insert(result.loss_history.end(), history.begin(), history.end());
      report.segments.push_back(summary);
    }

    const GeneratedBatch batch = generate(result.net, geometry, config.generation_batch,
                                          derive_seed(seed, "final-generate"), config.threshold);
    BatchAnalysis analysis =
        analyze_batch(batch.nodules, stats, derive_seed(seed, "final-analyze"), config.threshold);
    GenerationCounts counts = batch.counts;
    counts.accepted = analysis.accepted.size();
    const double mse = reconstruction_mse(result.net, result.seeds);
    report.metrics = make_report(counts, mse, analysis.accepted_features, seed_features, stats);
    result.accepted = analysis.accepted;
    result.accepted_features = analysis.accepted_features;

    if (out_dir) {
      const auto& dir = *out_dir;
      std::filesystem::create_directories(dir);
      auto note = [&](const std::filesystem::path& p) { report.artifacts.push_back(p); };

      {
        std::ofstream cfg(dir / "config.txt", std::ios::trunc);
        cfg << to_config_text(config);
      }
      note(dir / "config.txt");
      save_network(dir / "weights.bin", result.net);
      note(dir / "weights.bin");
      write_loss_csv(dir / "loss.csv", result.loss_history);
      note(dir / "loss.csv");
      write_seed_stats(dir / "seed_stats.json", stats);
      note(dir / "seed_stats.json");
      write_feature_csv(dir / "features.csv", batch.nodules, analysis.verdicts);
      note(dir / "features.csv");
      {
        std::ofstream m(dir / "metrics.csv", std::ios::trunc);
        m << metrics_csv_header() << '\n' << to_csv_row(report.metrics) << '\n';
      }
      note(dir / "metrics.csv");
      save_set(result.seeds, dir / "seeds");
      note(dir / "seeds");
      save_set(result.accepted, dir / "accepted");
      note(dir / "accepted");

      const NoduleSet& shown = result.accepted.empty() ? batch.nodules : result.accepted;
      std::vector<VoxelGrid> sample;
      for (std::size_t i = 0; i < std::min<std::size_t>(6, shown.size()); ++i) sample.push_back(shown[i].grid);
      write_montage(dir / "samples.pgm", sample);
      note(dir / "samples.pgm");
      if (result.seeds.size() >= 2) {
        const Interpolation path = interpolate(result.net, result.seeds[0].grid, result.seeds[1].grid, 6,
                                               config.threshold);
        const auto grids = path.repaired.grids();
        write_montage(dir / "interpolation.pgm", grids);
        note(dir / "interpolation.pgm");
      }
      write_report_text(dir / "report.txt", report);
      note(dir / "report.txt");
    }
  } catch (const std::exception& e) {
    report.failed = true;
    report.failure = e.what();
    if (out_dir) {
      try {
        std::filesystem::create_directories(*out_dir);
        write_report_text(*out_dir / "report.txt", report);
      } catch (const std::exception&) {
      }
    }
  }
  return result;
}

// ---- sweeps ----------------------------------------------------------------------------

std::string config_label(const TrainConfig& config) {
  return config.layer_spec + " " + std::string(to_string(config.feedback_mode));
}

SweepReport sweep(std::span<const TrainConfig> configs, std::size_t repeats,
                  const std::optional<std::filesystem::path>& out_dir) {
  if (repeats == 0) throw std::invalid_argument("sweep: repeats must be positive");
  SweepReport report;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    SweepRow row;
    row.label = config_label(configs[c]);
    std::size_t ok = 0;
    for (std::size_t r = 0; r < repeats; ++r) {
      TrainConfig cfg = configs[c];
      cfg.rng_seed = derive_seed(configs[c].rng_seed, r);
      std::optional<std::filesystem::path> dir;
      if (out_dir) dir = *out_dir / ("c" + std::to_string(c) + "_r" + std::to_string(r));
      const RunResult res = run(cfg, dir);
      ++row.runs;
      if (res.report.failed) {
        ++row.failures;
        continue;
      }
      const MetricsReport& m = res.report.metrics;
      ++ok;
      row.ac += m.ac;
      row.mse += m.mse;
      row.ft_dist += m.ft_dist;
      row.ft_mmse += m.ft_mmse;
      row.score_degenerate = row.score_degenerate || m.score_degenerate;
      if (!m.score_degenerate) row.score += m.score;
      row.clean += static_cast<double>(m.counts.clean);
      row.reconnected += static_cast<double>(m.counts.reconnected);
      row.inverted += static_cast<double>(m.counts.inverted);
      row.accepted += static_cast<double>(m.counts.accepted);
    }
    if (ok > 0) {
      const double n = static_cast<double>(ok);
      for (double* v : {&row.ac, &row.mse, &row.ft_dist, &row.ft_mmse, &row.score, &row.clean, &row.reconnected,
                        &row.inverted, &row.accepted}) {
        *v /= n;
      }
    }
    if (ok == 0 || row.score_degenerate) row.score = std::numeric_limits<double>::quiet_NaN();
    report.rows.push_back(row);
  }
  // best score first; rows without a finite score go last
  std::stable_sort(report.rows.begin(), report.rows.end(), [](const SweepRow& a, const SweepRow& b) {
    const bool fa = std::isfinite(a.score), fb = std::isfinite(b.score);
    if (fa != fb) return fa;
    return fa && a.score > b.score;
  });
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_sweep_csv(*out_dir / "sweep.csv", report);
  }
  return report;
}

void write_sweep_csv(const std::filesystem::path& path, const SweepReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  out << "label,runs,failures,ac,mse,ft_dist,ft_mmse,score,score_degenerate,clean,reconnected,inverted,accepted\n";
  for (const SweepRow& r : report.rows) {
    out << r.label << ',' << r.runs << ',' << r.failures << ',' << r.ac << ',' << r.mse << ',' << r.ft_dist << ','
        << r.ft_mmse << ',';
    if (std::isfinite(r.score)) {
      out << r.score;
    } else {
      out << "nan";
    }
    out << ',' << (r.score_degenerate ? 1 : 0) << ',' << r.clean << ',' << r.reconnected << ',' << r.inverted << ','
        << r.accepted << '\n';
  }
}

}  // namespace lung
