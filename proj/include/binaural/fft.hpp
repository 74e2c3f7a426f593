#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "binaural/constants.hpp"

namespace binaural {

constexpr bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// Iterative radix-2 FFT plan. Forward transform is unnormalized; inverse
/// scales by 1/N, so inverse(forward(x)) == x.
class Fft {
 public:
  explicit Fft(std::size_t size);

  std::size_t size() const { return size_; }

  void forward(std::span<Complex> data) const;
  void inverse(std::span<Complex> data) const;

 private:
  void transform(std::span<Complex> data, bool invert) const;

  std::size_t size_;
  std::vector<std::size_t> bit_reverse_;
  std::vector<Complex> twiddles_;  // exp(-2*pi*i*k/N), k < N/2
};

/// Shared, immutable plan for `size`. Thread-safe.
const Fft& fft_plan(std::size_t size);

}  // namespace binaural
