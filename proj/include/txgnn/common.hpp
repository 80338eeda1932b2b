#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>

namespace txgnn {

// Error categories, aligned with the CLI exit codes:
//   ArgumentError -> 1 (usage), DataError -> 2, NumericalFault -> 3.
struct ArgumentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using NodeId = std::uint32_t;
using EdgeId = std::uint32_t;

// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_label(std::string_view s) {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Every random subsystem derives its seed from the single global seed plus a
// textual label and a few integer coordinates. Keeps runs reproducible no
// matter how work is scheduled.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label,
                                 std::initializer_list<std::uint64_t> coords = {}) {
  std::uint64_t h = mix64(base ^ hash_label(label));
  for (std::uint64_t c : coords) h = mix64(h ^ c);
  return h;
}

}  // namespace txgnn
