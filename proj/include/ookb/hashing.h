#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace ookb {

/// SplitMix64 step; advances `state` and returns the next output.
std::uint64_t splitmix64(std::uint64_t& state);

/// Seeded 64-bit FNV-1a with a SplitMix finalizer. Stable across platforms.
std::uint64_t hash64(std::string_view bytes, std::uint64_t seed);

/// 128-bit digest of `key` rendered as 32 lowercase hex chars.
std::string hash128_hex(std::string_view key);

/// 32 hex chars drawn from the OS entropy source.
std::string random_artifact_id();

/// Portable seeded generator. std::uniform_int_distribution is not specified
/// bit-for-bit across standard libraries, so bounded draws use rejection here.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, bound).
  std::size_t below(std::size_t bound);

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

  std::string hex_id();

 private:
  std::mt19937_64 engine_;
};

}  // namespace ookb
