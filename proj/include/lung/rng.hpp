#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace lung {

/// Every random stream in the project is one of these, seeded explicitly.
using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent substream seeds.
std::uint64_t mix_seed(std::uint64_t x);

/// Seed for substream `stream` of a run seeded with `base`.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Same, keyed by a stable tag (e.g. "final-generation") instead of an index.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index = 0);

/// Uniform double in [lo, hi) built from the raw 64-bit output, so the
/// sequence does not depend on the standard library's distribution code.
double uniform(Rng& rng, double lo, double hi);

/// Uniform integer in [0, n). `n` must be positive.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

}  // namespace lung
