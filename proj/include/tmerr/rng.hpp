#pragma once

#include <cstdint>
#include <string_view>

namespace tmerr {

/// SplitMix64 output finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a, used to turn stream names into keys.
constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/**
 * Counter-based random stream.
 *
 * The i-th 64-bit output is mix64(key + (i+1) * golden), so a stream is fully
 * described by (key, counter) and two streams with different keys never share
 * state. Streams are cheap values: copying one replays the same sequence,
 * `split` derives an independent child keyed by an index.
 *
 * A stream must not be shared between concurrent callers.
 */
class RngStream {
 public:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  RngStream() = default;
  explicit RngStream(std::uint64_t key) : key_(key) {}

  /// Stream for (seed, name), e.g. named(seed, "x-batch").
  static RngStream named(std::uint64_t seed, std::string_view name) {
    return RngStream(mix64(seed ^ mix64(fnv1a(name))));
  }

  RngStream split(std::uint64_t index) const {
    return RngStream(mix64(key_ ^ mix64(index + 0x632be59bd9b4e019ULL)));
  }

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() noexcept;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace tmerr
