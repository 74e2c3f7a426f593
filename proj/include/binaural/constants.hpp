#pragma once

#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

namespace binaural {

using Complex = std::complex<double>;
using Spectrum = std::vector<Complex>;

inline constexpr int kSampleRate = 44100;
inline constexpr std::size_t kFftSize = 2048;
// 44100 / 62.5 = 705.6 is not an integer; 705 gives a 62.55 Hz frame rate.
inline constexpr std::size_t kHop = 705;
inline constexpr std::size_t kDirectionCount = 326;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

constexpr double bin_hz(std::size_t bin, double sample_rate = kSampleRate,
                        std::size_t fft_size = kFftSize) {
  return static_cast<double>(bin) * sample_rate / static_cast<double>(fft_size);
}

constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace binaural
