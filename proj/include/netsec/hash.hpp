#pragma once

#include <cstdint>
#include <string_view>

namespace netsec {

// Non-cryptographic helpers used for deterministic derivations (hardware
// addresses, ISNs, symbolic mac fingerprints). Nothing here is meant to resist
// an adversary; the symbolic term model does that job.

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a(std::string_view data, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : data) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic 64-bit value for (seed, label, counter).
constexpr std::uint64_t derive(std::uint64_t seed, std::string_view label, std::uint64_t counter) {
  return splitmix64(fnv1a(label, splitmix64(seed)) ^ splitmix64(counter + 0x51ED));
}

}  // namespace netsec
