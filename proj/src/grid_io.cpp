#include "lung/grid_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "lung/error.hpp"

namespace lung {

namespace le {

namespace {

template <typename U>
void put_uint(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
}

template <typename U>
U get_uint(std::span<const std::uint8_t> b) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) { put_uint(out, v); }
void put_f64(std::vector<std::uint8_t>& out, double v) { put_uint(out, std::bit_cast<std::uint64_t>(v)); }
void put_f32(std::vector<std::uint8_t>& out, float v) { put_uint(out, std::bit_cast<std::uint32_t>(v)); }

std::span<const std::uint8_t> Reader::take(std::size_t n) {
  if (bytes_.size() - pos_ < n) throw FormatError("unexpected end of data");
  auto s = bytes_.subspan(pos_, n);
  pos_ += n;
  return s;
}

std::uint64_t Reader::u64() { return get_uint<std::uint64_t>(take(8)); }
double Reader::f64() { return std::bit_cast<double>(get_uint<std::uint64_t>(take(8))); }
float Reader::f32() { return std::bit_cast<float>(get_uint<std::uint32_t>(take(4))); }

void Reader::expect_magic(const char (&magic)[8], const char* what) {
  const auto got = take(8);
  if (!std::equal(got.begin(), got.end(), magic, magic + 8,
                  [](std::uint8_t a, char b) { return a == static_cast<std::uint8_t>(b); })) {
    throw FormatError(std::string("bad magic: not a ") + what + " file");
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace le

std::vector<std::uint8_t> encode_grid(const VoxelGrid& grid) {
  std::vector<std::uint8_t> out(std::begin(kGridMagic), std::end(kGridMagic));
  out.reserve(8 + 48 + 4 * grid.size());
  const Dims& d = grid.dims();
  le::put_u64(out, d.nz);
  le::put_u64(out, d.ny);
  le::put_u64(out, d.nx);
  const Spacing& s = grid.spacing();
  le::put_f64(out, s.sz);
  le::put_f64(out, s.sy);
  le::put_f64(out, s.sx);
  for (const float v : grid.values()) le::put_f32(out, v);
  return out;
}

VoxelGrid decode_grid(std::span<const std::uint8_t> bytes) {
  le::Reader r(bytes);
  r.expect_magic(kGridMagic, "grid");
  Dims d;
  d.nz = r.u64();
  d.ny = r.u64();
  d.nx = r.u64();
  Spacing s;
  s.sz = r.f64();
  s.sy = r.f64();
  s.sx = r.f64();
  if (d.size() == 0 || d.size() > (std::size_t{1} << 30)) throw FormatError("grid: implausible dims");
  std::vector<float> values(d.size());
  for (float& v : values) v = r.f32();
  if (!r.done()) throw FormatError("grid: trailing bytes");
  return VoxelGrid({d, s}, std::move(values));
}

void write_grid(const std::filesystem::path& path, const VoxelGrid& grid) {
  le::write_file(path, encode_grid(grid));
}

VoxelGrid read_grid(const std::filesystem::path& path) { return decode_grid(le::read_file(path)); }

namespace {

std::uint8_t to_gray(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               const std::vector<std::uint8_t>& pixels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

}  // namespace

void write_pgm_slice(const std::filesystem::path& path, const VoxelGrid& grid, std::size_t z) {
  const Dims& d = grid.dims();
  if (z >= d.nz) throw std::out_of_range("write_pgm_slice: z out of range");
  std::vector<std::uint8_t> pixels(d.ny * d.nx);
  for (std::size_t y = 0; y < d.ny; ++y) {
    for (std::size_t x = 0; x < d.nx; ++x) pixels[y * d.nx + x] = to_gray(grid(z, y, x));
  }
  write_pgm(path, d.nx, d.ny, pixels);
}

void write_montage(const std::filesystem::path& path, std::span<const VoxelGrid> grids,
                   std::size_t slices) {
  if (grids.empty()) throw EmptySet("write_montage: no grids");
  const Dims d = grids.front().dims();
  slices = std::clamp<std::size_t>(slices, 1, d.nz);
  const std::size_t first = (d.nz - slices) / 2;
  constexpr std::uint8_t kGutter = 128;
  const std::size_t width = slices * (d.nx + 1) - 1;
  const std::size_t height = grids.size() * (d.ny + 1) - 1;
  std::vector<std::uint8_t> pixels(width * height, kGutter);
  for (std::size_t g = 0; g < grids.size(); ++g) {
    if (grids[g].dims() != d) throw DimensionMismatch("write_montage: mixed grid dims");
    for (std::size_t s = 0; s < slices; ++s) {
      for (std::size_t y = 0; y < d.ny; ++y) {
        for (std::size_t x = 0; x < d.nx; ++x) {
          const std::size_t row = g * (d.ny + 1) + y;
          const std::size_t col = s * (d.nx + 1) + x;
          pixels[row * width + col] = to_gray(grids[g](first + s, y, x));
        }
      }
    }
  }
  write_pgm(path, width, height, pixels);
}

}  // namespace lung
