#include "lung/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "lung/analyzer.hpp"
#include "lung/error.hpp"
#include "lung/grid_io.hpp"
#include "lung/rng.hpp"

namespace lung {

namespace {

constexpr std::array<std::string_view, 5> kProvenanceNames{
    "seed", "reflection", "shifted_reflection", "generated", "accepted_feedback"};

using Vec3 = std::array<double, 3>;   // (z, y, x) in mm
using Mat3 = std::array<Vec3, 3>;     // row-major

struct Ellipsoid {
  Vec3 center;
  Vec3 semi_axes;
  Mat3 rotation;  // columns are the ellipsoid's principal directions
};

// Uniformly distributed rotation from a random unit quaternion (Shoemake).
Mat3 random_rotation(Rng& rng) {
  const double u1 = uniform(rng, 0.0, 1.0);
  const double u2 = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double u3 = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double w = a * std::sin(u2), x = a * std::cos(u2), y = b * std::sin(u3), z = b * std::cos(u3);
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
           {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
           {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}}};
}

Vec3 rotate(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
          m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

Vec3 apply_transpose(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
          m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
          m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2]};
}

// Approximate signed distance (mm) of p to the ellipsoid surface, positive inside.
double signed_depth(const Ellipsoid& e, const Vec3& p) {
  const Vec3 local = apply_transpose(e.rotation, {p[0] - e.center[0], p[1] - e.center[1], p[2] - e.center[2]});
  double r2 = 0.0;
  for (std::size_t k = 0; k < 3; ++k) r2 += (local[k] / e.semi_axes[k]) * (local[k] / e.semi_axes[k]);
  const double min_axis = std::min({e.semi_axes[0], e.semi_axes[1], e.semi_axes[2]});
  return (1.0 - std::sqrt(r2)) * min_axis;
}

constexpr double kEdgeWidthMm = 0.3;

VoxelGrid rasterize(const std::vector<Ellipsoid>& parts, const Geometry& g) {
  std::vector<float> values(g.dims.size());
  std::size_t i = 0;
  for (std::size_t z = 0; z < g.dims.nz; ++z) {
    for (std::size_t y = 0; y < g.dims.ny; ++y) {
      for (std::size_t x = 0; x < g.dims.nx; ++x, ++i) {
        const Vec3 p{z * g.spacing.sz, y * g.spacing.sy, x * g.spacing.sx};
        double depth = -1e300;
        for (const Ellipsoid& e : parts) depth = std::max(depth, signed_depth(e, p));
        values[i] = static_cast<float>(1.0 / (1.0 + std::exp(-depth / kEdgeWidthMm)));
      }
    }
  }
  return VoxelGrid(g, std::move(values));
}

std::vector<Ellipsoid> random_blob(Rng& rng, const Geometry& g) {
  const Dims& d = g.dims;
  const Spacing& s = g.spacing;
  const Vec3 center{(d.nz - 1) * s.sz / 2.0, (d.ny - 1) * s.sy / 2.0, (d.nx - 1) * s.sx / 2.0};
  const double half = std::min({d.nz * s.sz, d.ny * s.sy, d.nx * s.sx}) / 2.0;

  std::vector<Ellipsoid> parts;
  Ellipsoid main{center, {}, random_rotation(rng)};
  for (double& a : main.semi_axes) a = uniform(rng, 0.28, 0.55) * half;
  parts.push_back(main);

  const auto lobes = uniform_index(rng, 4);
  for (std::uint64_t l = 0; l < lobes; ++l) {
    // Lobe centers sit strictly inside the main body so the union stays connected.
    Vec3 dir{uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)};
    const double norm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
    const double reach = uniform(rng, 0.4, 0.9);
    for (std::size_t k = 0; k < 3; ++k) dir[k] = dir[k] / std::max(norm, 1e-12) * reach * main.semi_axes[k];
    const Vec3 offset = rotate(main.rotation, dir);
    Ellipsoid lobe{{center[0] + offset[0], center[1] + offset[1], center[2] + offset[2]}, {}, random_rotation(rng)};
    for (double& a : lobe.semi_axes) a = uniform(rng, 0.2, 0.4) * half;
    parts.push_back(lobe);
  }
  return parts;
}

// Translate all parts so the value-weighted centroid lands on the grid center.
void recenter(std::vector<Ellipsoid>& parts, const VoxelGrid& grid) {
  const Dims& d = grid.dims();
  const Spacing& s = grid.spacing();
  Vec3 sum{0, 0, 0};
  double mass = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Voxel v = grid.voxel(i);
    const double w = grid[i];
    sum[0] += w * v.z * s.sz;
    sum[1] += w * v.y * s.sy;
    sum[2] += w * v.x * s.sx;
    mass += w;
  }
  if (mass <= 0.0) return;
  const Vec3 target{(d.nz - 1) * s.sz / 2.0, (d.ny - 1) * s.sy / 2.0, (d.nx - 1) * s.sx / 2.0};
  for (Ellipsoid& e : parts) {
    for (std::size_t k = 0; k < 3; ++k) e.center[k] += target[k] - sum[k] / mass;
  }
}

// On-voxels must keep one voxel of clearance from every face of the grid.
bool clear_of_border(const BinaryMask& mask) {
  const Dims& d = mask.dims;
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (!mask.on(i)) continue;
    const std::size_t x = i % d.nx, y = (i / d.nx) % d.ny, z = i / (d.nx * d.ny);
    if (z == 0 || y == 0 || x == 0 || z + 1 == d.nz || y + 1 == d.ny || x + 1 == d.nx) return false;
  }
  return true;
}

bool acceptable_seed(const VoxelGrid& grid) {
  const BinaryMask mask = binarize(grid, kDefaultThreshold);
  if (!clear_of_border(mask)) return false;
  if (label_components(mask).component_count != 1) return false;
  return static_filter(extract_features(grid, kDefaultThreshold));
}

std::string seed_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "seed-%04zu", i);
  return buf;
}

}  // namespace

std::string_view to_string(Provenance p) { return kProvenanceNames.at(static_cast<std::size_t>(p)); }

Provenance parse_provenance(std::string_view text) {
  for (std::size_t i = 0; i < kProvenanceNames.size(); ++i) {
    if (kProvenanceNames[i] == text) return static_cast<Provenance>(i);
  }
  throw FormatError("unknown provenance: " + std::string(text));
}

void NoduleSet::add(NoduleRecord record) {
  if (records_.empty() && geometry_.dims.size() == 0) geometry_ = record.grid.geometry();
  if (record.grid.geometry() != geometry_) {
    throw DimensionMismatch("NoduleSet: record geometry differs from set geometry");
  }
  records_.push_back(std::move(record));
}

void NoduleSet::add(VoxelGrid grid, Provenance provenance, std::string source_id) {
  add(NoduleRecord{std::move(grid), provenance, std::move(source_id)});
}

std::vector<VoxelGrid> NoduleSet::grids() const {
  std::vector<VoxelGrid> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.grid);
  return out;
}

NoduleSet synth_seeds(std::size_t count, Geometry geometry, std::uint64_t rng_seed) {
  if (count == 0) throw std::invalid_argument("synth_seeds: count must be positive");
  constexpr int kMaxAttempts = 1000;
  NoduleSet out(geometry);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(rng_seed, "synth-seed", i));
    bool done = false;
    for (int attempt = 0; attempt < kMaxAttempts && !done; ++attempt) {
      auto parts = random_blob(rng, geometry);
      recenter(parts, rasterize(parts, geometry));
      VoxelGrid grid = rasterize(parts, geometry);
      if (acceptable_seed(grid)) {
        out.add(std::move(grid), Provenance::seed, seed_id(i));
        done = true;
      }
    }
    if (!done) throw Error("synth_seeds: grid too small to place a nodule");
  }
  return out;
}

NoduleSet augment(const NoduleSet& seeds) {
  if (seeds.empty()) throw EmptySet("augment: no seeds");
  NoduleSet out(seeds.geometry());
  for (const NoduleRecord& seed : seeds) {
    for (const AxisSet axes : kAllReflections) {
      out.add(reflect(seed.grid, axes), axes.bits == 0 ? seed.provenance : Provenance::reflection,
              seed.source_id);
    }
    const VoxelGrid shifted = shift_half_pixel(seed.grid);
    for (const AxisSet axes : kAllReflections) {
      out.add(reflect(shifted, axes), Provenance::shifted_reflection, seed.source_id);
    }
  }
  return out;
}

NoduleSet inject_feedback(const NoduleSet& base, const NoduleSet& accepted, std::uint64_t rng_seed) {
  NoduleSet out = base;
  Rng rng(derive_seed(rng_seed, "inject-feedback"));
  for (const NoduleRecord& r : accepted) {
    const AxisSet axes = kAllReflections[uniform_index(rng, kAllReflections.size())];
    out.add(reflect(r.grid, axes), Provenance::accepted_feedback, r.source_id);
  }
  return out;
}

void save_set(const NoduleSet& set, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
  if (!manifest) throw Error("cannot write manifest in " + dir.string());
  const Geometry& g = set.geometry();
  manifest.precision(17);
  manifest << "# geometry " << g.dims.nz << ' ' << g.dims.ny << ' ' << g.dims.nx << ' '
           << g.spacing.sz << ' ' << g.spacing.sy << ' ' << g.spacing.sx << '\n';
  for (std::size_t i = 0; i < set.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%05zu.grid", i);
    write_grid(dir / name, set[i].grid);
    manifest << name << ' ' << to_string(set[i].provenance) << ' ' << set[i].source_id << '\n';
  }
}

NoduleSet load_set(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw Error("no manifest.txt in " + dir.string());
  NoduleSet out;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    if (line.starts_with("# geometry")) {
      std::string hash, word;
      Geometry g;
      fields >> hash >> word >> g.dims.nz >> g.dims.ny >> g.dims.nx >> g.spacing.sz >> g.spacing.sy >>
          g.spacing.sx;
      if (!fields) throw FormatError("manifest: bad geometry line");
      out = NoduleSet(g);
      continue;
    }
    if (line.starts_with('#')) continue;
    std::string name, provenance, source;
    fields >> name >> provenance >> source;
    if (!fields) throw FormatError("manifest: bad record line: " + line);
    out.add(read_grid(dir / name), parse_provenance(provenance), source);
  }
  return out;
}

}  // namespace lung
