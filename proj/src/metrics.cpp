#include "lung/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "lung/error.hpp"

namespace lung {

double ft_dist(std::span<const FeatureVector> accepted, std::span<const FeatureVector> seeds,
               const SeedStats& stats) {
  if (accepted.empty() || seeds.empty()) throw EmptySet("ft_dist: empty feature set");
  double total = 0.0;
  for (const FeatureVector& y : accepted) {
    double nearest = std::numeric_limits<double>::infinity();
    for (const FeatureVector& s : seeds) {
      double sq = 0.0;
      for (std::size_t i = 0; i < kFeatureCount; ++i) {
        const double z = (y.values[i] - s.values[i]) / stats.sigma[i];
        sq += z * z;
      }
      nearest = std::min(nearest, std::sqrt(sq));
    }
    total += nearest;
  }
  return total / static_cast<double>(accepted.size());
}

double ft_mmse(std::span<const FeatureVector> accepted, std::span<const FeatureVector> seeds,
               const SeedStats& stats) {
  if (accepted.empty() || seeds.empty()) throw EmptySet("ft_mmse: empty feature set");
  auto means = [](std::span<const FeatureVector> set) {
    FeatureArray m{};
    for (const auto& f : set) {
      for (std::size_t i = 0; i < kFeatureCount; ++i) m[i] += f.values[i];
    }
    for (double& v : m) v /= static_cast<double>(set.size());
    return m;
  };
  const FeatureArray my = means(accepted);
  const FeatureArray ms = means(seeds);
  double total = 0.0;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const double z = (my[i] - ms[i]) / stats.sigma[i];
    total += z * z;
  }
  return total / static_cast<double>(kFeatureCount);
}

double score(double ft_dist, double ft_mmse, double mse, double ac) {
  if (!(ac >= 0.0 && ac <= 1.0)) throw std::invalid_argument("score: acceptance outside [0, 1]");
  if (ac == 1.0) throw DegenerateAcceptance("score: undefined when every image is accepted");
  return (ft_dist - 1.0) / ((ft_mmse + 0.1) * (mse + 0.1) * (1.0 - ac));
}

MetricsReport make_report(const GenerationCounts& counts, double seed_mse,
                          std::span<const FeatureVector> accepted, std::span<const FeatureVector> seeds,
                          const SeedStats& stats) {
  if (counts.generated == 0) throw EmptySet("make_report: nothing generated");
  MetricsReport r;
  r.counts = counts;
  r.mse = seed_mse;
  r.ac = static_cast<double>(counts.accepted) / static_cast<double>(counts.generated);
  r.ft_dist = ft_dist(accepted, seeds, stats);
  r.ft_mmse = ft_mmse(accepted, seeds, stats);
  try {
    r.score = score(r.ft_dist, r.ft_mmse, r.mse, r.ac);
  } catch (const DegenerateAcceptance&) {
    r.score = std::numeric_limits<double>::quiet_NaN();
    r.score_degenerate = true;
  }
  return r;
}

std::string metrics_csv_header() {
  return "ac,mse,ft_dist,ft_mmse,score,score_degenerate,generated,clean,reconnected,inverted,empty,accepted";
}

std::string to_csv_row(const MetricsReport& r) {
  std::ostringstream out;
  out.precision(17);
  const auto& c = r.counts;
  out << r.ac << ',' << r.mse << ',' << r.ft_dist << ',' << r.ft_mmse << ',';
  if (r.score_degenerate) {
    out << "nan";
  } else {
    out << r.score;
  }
  out << ',' << (r.score_degenerate ? 1 : 0) << ',' << c.generated << ',' << c.clean << ','
      << c.reconnected << ',' << c.inverted << ',' << c.empty << ',' << c.accepted;
  return out.str();
}

MetricsReport parse_csv_row(const std::string& row) {
  std::vector<std::string> cells;
  std::istringstream in(row);
  for (std::string cell; std::getline(in, cell, ',');) cells.push_back(cell);
  if (cells.size() != 12) throw FormatError("metrics row: expected 12 fields");
  MetricsReport r;
  try {
    r.ac = std::stod(cells[0]);
    r.mse = std::stod(cells[1]);
    r.ft_dist = std::stod(cells[2]);
    r.ft_mmse = std::stod(cells[3]);
    r.score_degenerate = cells[5] == "1";
    r.score = r.score_degenerate ? std::numeric_limits<double>::quiet_NaN() : std::stod(cells[4]);
    auto& c = r.counts;
    c.generated = std::stoul(cells[6]);
    c.clean = std::stoul(cells[7]);
    c.reconnected = std::stoul(cells[8]);
    c.inverted = std::stoul(cells[9]);
    c.empty = std::stoul(cells[10]);
    c.accepted = std::stoul(cells[11]);
  } catch (const std::logic_error&) {
    throw FormatError("metrics row: malformed number");
  }
  return r;
}

std::string format_table_header() {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-28s %6s %8s %7s %7s %9s %6s %6s", "network", "AC%", "MSEx1000",
                "FtDist", "FtMMSE", "Score", "Clean", "Invert");
  return buf;
}

std::string format_table_row(const std::string& label, const MetricsReport& r) {
  char score_text[32];
  if (r.score_degenerate) {
    std::snprintf(score_text, sizeof score_text, "%s", "unbounded");
  } else {
    std::snprintf(score_text, sizeof score_text, "%.2f", r.score);
  }
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-28s %6.1f %8.2f %7.2f %7.2f %9s %6zu %6zu", label.c_str(), 100.0 * r.ac,
                1000.0 * r.mse, r.ft_dist, r.ft_mmse, score_text, r.counts.clean, r.counts.inverted);
  return buf;
}

}  // namespace lung
