#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace affield {

using Rng = std::mt19937_64;

/// Independent seed for a named stream ("data", "init", "shuffle", ...)
/// derived from a root seed: FNV-1a of the name mixed through splitmix64.
inline std::uint64_t substream_seed(std::uint64_t root, std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char ch : name) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ull;
  }
  std::uint64_t z = root ^ h;
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t root, std::uint64_t index) {
  return substream_seed(root ^ (index * 0x9e3779b97f4a7c15ull), "index");
}

}  // namespace affield
