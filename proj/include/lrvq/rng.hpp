#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "lrvq/matrix.hpp"

namespace lrvq {

/// Philox-4x32-10 counter-based generator.
///
/// The output at any position is a pure function of (seed, stream,
/// counter), so streams are reproducible on every platform and can be
/// split per layer or per worker without coordinating state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  /// Independent generator on a derived stream; does not advance *this.
  Rng split(std::uint64_t stream_id) const;

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1].
  double uniform_open_low();
  /// Uniform integer in [0, n) without modulo bias.
  std::size_t uniform_index(std::size_t n);
  /// Standard normal (Box-Muller, no cached second value).
  double normal();

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  unsigned used_ = 4;
};

/// Single Philox-4x32-10 block; exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// i.i.d. N(mean, variance) samples. Throws Errc::invalid_variance when
/// variance <= 0.
Matrix normal_matrix(Rng& rng, std::size_t rows, std::size_t cols, double mean,
                     double variance);

}  // namespace lrvq
