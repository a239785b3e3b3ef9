#pragma once

#include <cstdint>
#include <random>

namespace cdma {

// Counter-based stream derivation: every unit of work gets its own engine,
// seeded from (seed, stream, substream) alone, so results never depend on
// which worker ran the unit or in what order.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

using Engine = std::mt19937_64;

inline Engine stream_engine(std::uint64_t seed, std::uint64_t stream,
                            std::uint64_t substream = 0) {
  const std::uint64_t a = splitmix64(seed);
  const std::uint64_t b = splitmix64(a ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
  const std::uint64_t c = splitmix64(b ^ splitmix64(substream + 0x8CB92BA72F3D8DD7ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return Engine(seq);
}

// Substream tags, so that spreading and noise draws for the same work unit
// come from unrelated engines.
enum class Substream : std::uint64_t {
  spreading = 1,
  noise = 2,
  input = 3,
  perturbation = 4,
};

inline Engine stream_engine(std::uint64_t seed, std::uint64_t stream, Substream tag) {
  return stream_engine(seed, stream, static_cast<std::uint64_t>(tag));
}

template <class Vec>
void fill_standard_normal(Engine& eng, Vec& v) {
  std::normal_distribution<double> normal;
  for (auto& x : v) x = normal(eng);
}

}  // namespace cdma
