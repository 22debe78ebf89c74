#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <random>

namespace refldiff {

// Philox4x32-10 counter-based generator (Salmon et al., "Parallel random
// numbers: as easy as 1, 2, 3"). A stream is identified by (key, stream id);
// the position inside a stream is a 64-bit block counter. Two generators with
// the same (key, stream) produce the same sequence on every platform.
class Philox4x32 {
 public:
  using result_type = std::uint32_t;
  using Block = std::array<std::uint32_t, 4>;

  Philox4x32(std::uint64_t key, std::uint64_t stream);

  static Block bijection(Block counter, std::array<std::uint32_t, 2> key);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  std::uint64_t block_counter() const { return counter_; }

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  Block buffer_{};
  int index_ = 4;
};

// Convenience wrapper used throughout the library: uniform and Gaussian draws
// on top of one Philox stream. Not thread-safe; give each chain its own.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : engine_(seed, stream) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on (0, 1), never exactly zero.
  double uniform_open();
  double normal() { return normal_(engine_); }
  double gamma(double shape) { return std::gamma_distribution<double>(shape, 1.0)(engine_); }
  std::uint64_t next_u64();

  Philox4x32& engine() { return engine_; }

 private:
  Philox4x32 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// Stream ids reserved by the samplers; chains draw from disjoint streams.
inline constexpr std::uint64_t kCorrectorStreamBit = std::uint64_t{1} << 62;

}  // namespace refldiff
