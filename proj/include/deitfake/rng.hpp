#pragma once

#include <cstdint>

namespace deitfake {

// Counter-based SplitMix64 stream. Draw k of a stream is a pure function of
// (seed, k), so sequences are identical on every platform and a stream can be
// reconstructed from its two fields alone.
class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(std::uint64_t seed, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

  // Stream for one (global seed, epoch, sample) triple. Independent of the
  // order in which samples are visited.
  static RngStream for_sample(std::uint64_t seed, std::uint64_t epoch, std::uint64_t sample);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;
  // Standard normal via Box-Muller; consumes two draws.
  double normal() noexcept;
  // Standard normal conditioned on |z| <= bound (rejection).
  double truncated_normal(double bound = 2.0) noexcept;

  friend bool operator==(const RngStream&, const RngStream&) = default;

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x) noexcept;
std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept;

}  // namespace deitfake
