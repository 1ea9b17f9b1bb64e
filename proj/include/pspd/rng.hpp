#pragma once

#include <cstdint>
#include <random>

namespace pspd::rng {

// splitmix64 finalizer; full-avalanche 64-bit mix.
inline std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent substream for (seed, cycle, channel). Every random decision in
// the simulator draws from such a stream, so per-cycle output does not depend
// on the order in which cycles are generated.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t cycle, std::uint64_t channel) {
  return std::mt19937_64(mix(seed ^ mix(cycle ^ mix(channel))));
}

// Channel ids. Per-pixel channels use the pixel index directly.
inline constexpr std::uint64_t kSourceChannel = 0x736f757263650000ULL;   // photon generation
inline constexpr std::uint64_t kDetectorChannel = 0x6465746563740000ULL; // thinning + jitter
inline constexpr std::uint64_t kDarkChannelBase = 0x6461726b00000000ULL; // + pixel

} // namespace pspd::rng
