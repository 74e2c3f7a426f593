#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "binaural/constants.hpp"

namespace binaural {

/// Two synchronized real-valued channels.
struct PcmStream {
  std::vector<double> left;
  std::vector<double> right;
  int sample_rate = kSampleRate;

  std::size_t size() const { return left.size(); }

  /// Throws invalid_argument when channel lengths differ or the rate is not positive.
  void validate() const;
};

struct Frame {
  std::vector<double> values;
  std::size_t start_index = 0;
};

struct FramePair {
  Frame left;
  Frame right;
};

/// One analysis frame: full-length complex spectra of both ears.
struct BinauralFrame {
  Spectrum left;
  Spectrum right;
  std::size_t frame_index = 0;
};

/// Splits a stream into aligned kFftSize-sample frame pairs at offsets
/// 0, hop, 2*hop, ... Throws empty_stream when the stream is shorter than
/// one frame.
std::vector<FramePair> frame_stream(const PcmStream& stream, std::size_t hop = kHop);

/// (0.54 - 0.46 cos(2 pi t / (N - 1))) * x[t]
Frame hamming_window(const Frame& frame);

/// Coefficient of the Hamming window at sample t of an n-sample frame.
double hamming_coefficient(std::size_t t, std::size_t n);

/// Unnormalized forward DFT of a real frame. Throws not_power_of_two.
Spectrum fft_spectrum(std::span<const double> samples);

/// frame_stream -> hamming_window -> fft_spectrum for both channels.
std::vector<BinauralFrame> binaural_spectra(const PcmStream& stream, std::size_t hop = kHop);

/// Debug dump: frame_index,bin,re_l,im_l,re_r,im_r for bins [0, N/2].
void write_spectra_csv(std::ostream& out, std::span<const BinauralFrame> frames);

}  // namespace binaural
