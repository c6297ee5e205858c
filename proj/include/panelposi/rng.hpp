#pragma once

#include <cstdint>
#include <random>

namespace panelposi {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; derives independent child seeds from
/// (master seed, stream id) so parallel work stays reproducible.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace panelposi
