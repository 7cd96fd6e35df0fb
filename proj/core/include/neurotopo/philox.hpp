#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace ntopo {

/// Philox4x32-10 counter-based block function (Salmon, Moraes, Dror, Shaw,
/// "Parallel random numbers: as easy as 1, 2, 3", SC'11).  Every stochastic
/// component draws from this generator so streams can be reproduced in any
/// language from (seed, stream id) alone.
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter counter, Key key) noexcept;
};

/// FNV-1a 64-bit hash; used to derive stream ids from names and sample ids.
std::uint64_t fnv1a64(std::string_view text) noexcept;

/// Sequential view over a Philox stream.
///
/// key     = (seed low 32 bits, seed high 32 bits)
/// counter = (block low, block high, stream low, stream high)
///
/// Each block yields four 32-bit words consumed in order.  uniform() takes two
/// words (a, b) and returns ((a >> 5) * 2^26 + (b >> 6)) * 2^-53 in [0, 1).
/// normal() is Box-Muller on (1 - uniform(), uniform()); the sine branch is
/// cached and returned on the next call.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream) noexcept;

  std::uint32_t next_u32() noexcept;
  double uniform() noexcept;
  double normal() noexcept;
  /// Unbiased integer in [0, bound) by rejection; bound must be positive.
  std::uint64_t below(std::uint64_t bound) noexcept;

  /// Fisher-Yates permutation of [0, n).
  std::vector<std::uint32_t> permutation(std::uint32_t n);
  /// k distinct values from [0, n), in draw order.
  std::vector<std::uint32_t> sample_without_replacement(std::uint32_t n,
                                                        std::uint32_t k);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  void refill() noexcept;

  Philox4x32::Key key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  Philox4x32::Counter buffer_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ntopo
