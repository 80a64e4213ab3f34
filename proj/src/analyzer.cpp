#include "lung/analyzer.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "lung/error.hpp"

namespace lung {

namespace {

constexpr std::array<std::string_view, 5> kVerdictNames{
    "accepted", "rejected_statistical", "rejected_static", "rejected_empty", "rejected_multicomponent"};

}  // namespace

FeatureVector extract_features(const VoxelGrid& grid, double threshold) {
  const BinaryMask mask = binarize(grid, threshold);
  const ComponentLabeling labeling = label_components(mask);
  if (labeling.component_count == 0) throw EmptyNodule("extract_features: empty nodule");
  if (labeling.component_count > 1) {
    throw MultiComponent("extract_features: " + std::to_string(labeling.component_count) + " components");
  }

  const Dims& d = grid.dims();
  const Spacing& s = grid.spacing();
  const double face_z = s.sy * s.sx;  // faces normal to z
  const double face_y = s.sz * s.sx;
  const double face_x = s.sz * s.sy;

  auto on = [&](std::ptrdiff_t z, std::ptrdiff_t y, std::ptrdiff_t x) {
    if (z < 0 || y < 0 || x < 0 || z >= static_cast<std::ptrdiff_t>(d.nz) ||
        y >= static_cast<std::ptrdiff_t>(d.ny) || x >= static_cast<std::ptrdiff_t>(d.nx)) {
      return false;
    }
    return mask.on(grid.index(static_cast<std::size_t>(z), static_cast<std::size_t>(y),
                              static_cast<std::size_t>(x)));
  };

  std::size_t count = 0;
  double area = 0.0;
  std::array<std::size_t, 3> lo{d.nz, d.ny, d.nx};
  std::array<std::size_t, 3> hi{0, 0, 0};
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  std::vector<Eigen::Vector3d> centers;

  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t x = 0; x < d.nx; ++x) {
        if (!mask.on(grid.index(z, y, x))) continue;
        ++count;
        const auto iz = static_cast<std::ptrdiff_t>(z), iy = static_cast<std::ptrdiff_t>(y),
                   ix = static_cast<std::ptrdiff_t>(x);
        area += face_z * ((on(iz - 1, iy, ix) ? 0 : 1) + (on(iz + 1, iy, ix) ? 0 : 1));
        area += face_y * ((on(iz, iy - 1, ix) ? 0 : 1) + (on(iz, iy + 1, ix) ? 0 : 1));
        area += face_x * ((on(iz, iy, ix - 1) ? 0 : 1) + (on(iz, iy, ix + 1) ? 0 : 1));
        lo = {std::min(lo[0], z), std::min(lo[1], y), std::min(lo[2], x)};
        hi = {std::max(hi[0], z), std::max(hi[1], y), std::max(hi[2], x)};
        const Eigen::Vector3d c(z * s.sz, y * s.sy, x * s.sx);
        sum += c;
        centers.push_back(c);
      }
    }
  }

  const double volume = static_cast<double>(count) * s.voxel_volume();
  const Eigen::Vector3d mean = sum / static_cast<double>(count);
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& c : centers) {
    const Eigen::Vector3d r = c - mean;
    cov += r * r.transpose();
  }
  cov /= static_cast<double>(count);
  cov(0, 0) += s.sz * s.sz / 12.0;
  cov(1, 1) += s.sy * s.sy / 12.0;
  cov(2, 2) += s.sx * s.sx / 12.0;
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov, Eigen::EigenvaluesOnly);
  const Eigen::Vector3d lambda = eig.eigenvalues();  // ascending

  const double ext_z = static_cast<double>(hi[0] - lo[0] + 1) * s.sz;
  const double ext_y = static_cast<double>(hi[1] - lo[1] + 1) * s.sy;
  const double ext_x = static_cast<double>(hi[2] - lo[2] + 1) * s.sx;

  FeatureVector fv;
  fv[Feature::volume] = volume;
  fv[Feature::surface_area] = area;
  fv[Feature::sa_to_vol] = area / volume;
  fv[Feature::compactness] = area * area * area / (volume * volume);
  fv[Feature::extent_x] = ext_x;
  fv[Feature::extent_y] = ext_y;
  fv[Feature::extent_z] = ext_z;
  fv[Feature::elongation] = std::max(1.0, std::sqrt(lambda(2) / lambda(0)));
  fv[Feature::flatness] = std::max(1.0, std::sqrt(lambda(1) / lambda(0)));
  fv[Feature::sphericity] = std::cbrt(std::numbers::pi) * std::pow(6.0 * volume, 2.0 / 3.0) / area;
  fv[Feature::equivalent_diameter] = std::cbrt(6.0 * volume / std::numbers::pi);
  fv[Feature::fill_fraction] = volume / (ext_x * ext_y * ext_z);
  return fv;
}

bool static_filter(const FeatureVector& fv) { return fv[Feature::volume] > kMinVolumeMm3; }

double weighted_distance(double y, double running_mean, double mu, double sigma) {
  return std::abs((y + 3.0 * running_mean - 4.0 * mu) / sigma);
}

double p_keep(double y, double running_mean, double mu, double d) {
  const bool both_above = y > mu && running_mean > mu;
  const bool both_below = y < mu && running_mean < mu;
  if ((both_above || both_below) && d > 3.0) return std::min(1.0, 0.7 + 0.9 / d);
  return 1.0;
}

SeedStats SeedStats::from_features(std::span<const FeatureVector> seeds) {
  if (seeds.empty()) throw EmptySet("SeedStats: no seed features");
  SeedStats st;
  const double n = static_cast<double>(seeds.size());
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    double sum = 0.0;
    for (const auto& f : seeds) sum += f.values[i];
    const double mu = sum / n;
    double ss = 0.0;
    for (const auto& f : seeds) ss += (f.values[i] - mu) * (f.values[i] - mu);
    const double sigma = seeds.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    st.mu[i] = mu;
    st.sigma[i] = std::max(sigma, 1e-9 * std::max(1.0, std::abs(mu)));
  }
  return st;
}

AcceptanceState::AcceptanceState(const SeedStats& stats, std::uint64_t rng_seed)
    : mean_(stats.mu), rng_(rng_seed) {}

void AcceptanceState::record(const FeatureVector& fv) {
  ++count_;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    sum_[i] += fv.values[i];
    mean_[i] = sum_[i] / static_cast<double>(count_);
  }
}

bool accept(const FeatureVector& fv, const SeedStats& stats, AcceptanceState& state) {
  bool keep = true;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const double y = fv.values[i];
    const double ybar = state.running_mean()[i];
    const double d = weighted_distance(y, ybar, stats.mu[i], stats.sigma[i]);
    const double p = p_keep(y, ybar, stats.mu[i], d);
    if (p < 1.0 && uniform(state.rng(), 0.0, 1.0) >= p) keep = false;
  }
  if (keep) state.record(fv);
  return keep;
}

std::string_view to_string(Verdict v) { return kVerdictNames.at(static_cast<std::size_t>(v)); }

std::vector<FeatureVector> extract_all(const NoduleSet& set, double threshold) {
  std::vector<FeatureVector> out;
  out.reserve(set.size());
  for (const auto& r : set) out.push_back(extract_features(r.grid, threshold));
  return out;
}

BatchAnalysis analyze_batch(const NoduleSet& nodules, const SeedStats& stats, std::uint64_t rng_seed,
                            double threshold) {
  BatchAnalysis out{NoduleSet(nodules.geometry()), {}, {}, AcceptanceState(stats, rng_seed)};
  out.verdicts.reserve(nodules.size());
  for (const NoduleRecord& r : nodules) {
    NoduleVerdict v;
    try {
      v.features = extract_features(r.grid, threshold);
    } catch (const EmptyNodule&) {
      v.verdict = Verdict::rejected_empty;
    } catch (const MultiComponent&) {
      v.verdict = Verdict::rejected_multicomponent;
    }
    if (v.features) {
      if (!static_filter(*v.features)) {
        v.verdict = Verdict::rejected_static;
      } else if (accept(*v.features, stats, out.state)) {
        v.verdict = Verdict::accepted;
        out.accepted.add(r);
        out.accepted_features.push_back(*v.features);
      } else {
        v.verdict = Verdict::rejected_statistical;
      }
    }
    out.verdicts.push_back(v);
  }
  return out;
}

void write_feature_csv(const std::filesystem::path& path, const NoduleSet& nodules,
                       std::span<const NoduleVerdict> verdicts) {
  if (verdicts.size() != nodules.size()) throw DimensionMismatch("write_feature_csv: size mismatch");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  out << "index,source_id,provenance";
  for (const auto name : kFeatureNames) out << ',' << name;
  out << ",status\n";
  for (std::size_t i = 0; i < nodules.size(); ++i) {
    out << i << ',' << nodules[i].source_id << ',' << to_string(nodules[i].provenance);
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      out << ',';
      if (verdicts[i].features) out << verdicts[i].features->values[f];
    }
    out << ',' << to_string(verdicts[i].verdict) << '\n';
  }
}

void write_seed_stats(const std::filesystem::path& path, const SeedStats& stats) {
  nlohmann::json features = nlohmann::json::array();
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    features.push_back({{"name", kFeatureNames[i]}, {"mu", stats.mu[i]}, {"sigma", stats.sigma[i]}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << nlohmann::json{{"features", features}}.dump(2) << '\n';
}

SeedStats read_seed_stats(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("seed stats: ") + e.what());
  }
  const auto& features = doc.at("features");
  if (!features.is_array() || features.size() != kFeatureCount) throw FormatError("seed stats: need 12 features");
  SeedStats st;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (features[i].at("name").get<std::string>() != kFeatureNames[i]) {
      throw FormatError("seed stats: unexpected feature order");
    }
    st.mu[i] = features[i].at("mu").get<double>();
    st.sigma[i] = features[i].at("sigma").get<double>();
    if (!(st.sigma[i] > 0.0)) throw FormatError("seed stats: sigma must be positive");
  }
  return st;
}

}  // namespace lung
