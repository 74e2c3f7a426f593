#include "binaural/fft.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <utility>

#include "binaural/error.hpp"

namespace binaural {

Fft::Fft(std::size_t size) : size_(size) {
  if (!is_power_of_two(size)) {
    throw Error(Errc::not_power_of_two,
                "FFT size " + std::to_string(size) + " is not a power of two");
  }
  std::size_t log2n = 0;
  while ((std::size_t{1} << log2n) < size) ++log2n;

  bit_reverse_.resize(size);
  for (std::size_t i = 0; i < size; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < log2n; ++b) {
      if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (log2n - 1 - b);
    }
    bit_reverse_[i] = r;
  }

  twiddles_.resize(size / 2);
  for (std::size_t k = 0; k < size / 2; ++k) {
    const double angle = -kTwoPi * static_cast<double>(k) / static_cast<double>(size);
    twiddles_[k] = Complex(std::cos(angle), std::sin(angle));
  }
}

void Fft::forward(std::span<Complex> data) const { transform(data, false); }

void Fft::inverse(std::span<Complex> data) const {
  transform(data, true);
  const double scale = 1.0 / static_cast<double>(size_);
  for (auto& v : data) v *= scale;
}

void Fft::transform(std::span<Complex> data, bool invert) const {
  if (data.size() != size_) {
    throw Error(Errc::shape_mismatch, "FFT input length does not match plan size");
  }
  for (std::size_t i = 0; i < size_; ++i) {
    const std::size_t j = bit_reverse_[i];
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= size_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = size_ / len;
    for (std::size_t start = 0; start < size_; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        Complex w = twiddles_[k * stride];
        if (invert) w = std::conj(w);
        const Complex u = data[start + k];
        const Complex v = data[start + k + half] * w;
        data[start + k] = u + v;
        data[start + k + half] = u - v;
      }
    }
  }
}

const Fft& fft_plan(std::size_t size) {
  static std::mutex mutex;
  static std::map<std::size_t, std::unique_ptr<const Fft>> plans;
  std::lock_guard lock(mutex);
  auto it = plans.find(size);
  if (it == plans.end()) {
    it = plans.emplace(size, std::make_unique<const Fft>(size)).first;
  }
  return *it->second;
}

}  // namespace binaural
