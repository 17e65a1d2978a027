#include "deitfake/rng.hpp"

#include <cmath>
#include <numbers>

namespace deitfake {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(a ^ (mix64(b + kGolden) + kGolden + (a << 6) + (a >> 2)));
}

RngStream RngStream::for_sample(std::uint64_t seed, std::uint64_t epoch, std::uint64_t sample) {
  return RngStream(hash_combine(hash_combine(seed, epoch), sample));
}

std::uint64_t RngStream::next_u64() noexcept {
  ++counter_;
  return mix64(seed_ + counter_ * kGolden);
}

double RngStream::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::below(std::uint64_t n) noexcept {
  // Rejection on the top of the range keeps the result unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

double RngStream::normal() noexcept {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RngStream::truncated_normal(double bound) noexcept {
  for (;;) {
    const double z = normal();
    if (std::abs(z) <= bound) return z;
  }
}

}  // namespace deitfake
