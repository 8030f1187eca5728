#ifndef CELLWEIGHTS_RNG_HPP
#define CELLWEIGHTS_RNG_HPP

#include <cstdint>
#include <random>

namespace cellweights {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Key for an independent random stream identified by (seed, replication, tag).
/// Streams are order-free: any replication can be generated without the others.
inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t replication, std::uint64_t tag) {
  std::uint64_t k = splitmix64(seed);
  k = splitmix64(k ^ replication);
  return splitmix64(k ^ tag);
}

inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t replication,
                                  std::uint64_t tag) {
  return std::mt19937_64(stream_key(seed, replication, tag));
}

}  // namespace cellweights

#endif
