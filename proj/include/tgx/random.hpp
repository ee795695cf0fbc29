#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace tgx {

// SplitMix64 finalizer; used to derive independent streams from one seed.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                    std::uint64_t c = 0) {
  return mix64(mix64(mix64(mix64(seed) ^ a) ^ b) ^ c);
}

// Uniform [0, 1) with 53 random bits, a pure function of its counters.
constexpr double counter_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                                 std::uint64_t c, std::uint64_t index) {
  const std::uint64_t bits = mix64(derive_seed(seed, a, b, c) ^ mix64(index));
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

using Rng = std::mt19937_64;

// He (fan-in) normal initialization: N(0, 2 / fan_in).
template <typename T>
void he_normal_fill(std::span<T> values, std::size_t fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, fan_in ? std::sqrt(2.0 / static_cast<double>(fan_in)) : 1.0);
  for (auto& v : values) v = static_cast<T>(dist(rng));
}

template <typename T>
void normal_fill(std::span<T> values, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : values) v = static_cast<T>(dist(rng));
}

}  // namespace tgx
