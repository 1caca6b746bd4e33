#include "ookb/hashing.h"

#include <array>
#include <cstdio>
#include <limits>

namespace ookb {

namespace {

std::string to_hex(std::uint64_t hi, std::uint64_t lo) {
  std::array<char, 33> buf{};
  std::snprintf(buf.data(), buf.size(), "%016llx%016llx", static_cast<unsigned long long>(hi),
                static_cast<unsigned long long>(lo));
  return std::string(buf.data(), 32);
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t hash64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t state = h;
  return splitmix64(state);
}

std::string hash128_hex(std::string_view key) {
  return to_hex(hash64(key, 0x6f6f6b62'00000001ULL), hash64(key, 0x6f6f6b62'00000002ULL));
}

std::string random_artifact_id() {
  std::random_device rd;
  auto draw = [&rd] {
    return (static_cast<std::uint64_t>(rd()) << 32) ^ static_cast<std::uint64_t>(rd());
  };
  std::uint64_t hi = draw();
  std::uint64_t lo = draw();
  return to_hex(hi, lo);
}

std::size_t SeededRng::below(std::size_t bound) {
  if (bound <= 1) return 0;
  const std::uint64_t b = bound;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              (std::numeric_limits<std::uint64_t>::max() % b);
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return static_cast<std::size_t>(x % b);
}

std::string SeededRng::hex_id() {
  std::uint64_t hi = engine_();
  std::uint64_t lo = engine_();
  return to_hex(hi, lo);
}

}  // namespace ookb
