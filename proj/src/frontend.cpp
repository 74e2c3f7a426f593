#include "binaural/frontend.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include "binaural/error.hpp"
#include "binaural/fft.hpp"

namespace binaural {

void PcmStream::validate() const {
  if (left.size() != right.size()) {
    throw Error(Errc::invalid_argument, "left/right channel lengths differ");
  }
  if (sample_rate <= 0) {
    throw Error(Errc::invalid_argument, "sample rate must be positive");
  }
}

std::vector<FramePair> frame_stream(const PcmStream& stream, std::size_t hop) {
  stream.validate();
  if (hop == 0) throw Error(Errc::invalid_argument, "hop must be >= 1");
  if (stream.size() < kFftSize) {
    throw Error(Errc::empty_stream, "stream has " + std::to_string(stream.size()) +
                                        " samples, need at least " + std::to_string(kFftSize));
  }
  const std::size_t count = (stream.size() - kFftSize) / hop + 1;
  std::vector<FramePair> frames;
  frames.reserve(count);
  for (std::size_t f = 0; f < count; ++f) {
    const std::size_t start = f * hop;
    FramePair pair;
    pair.left.start_index = start;
    pair.right.start_index = start;
    pair.left.values.assign(stream.left.begin() + start, stream.left.begin() + start + kFftSize);
    pair.right.values.assign(stream.right.begin() + start,
                             stream.right.begin() + start + kFftSize);
    frames.push_back(std::move(pair));
  }
  return frames;
}

double hamming_coefficient(std::size_t t, std::size_t n) {
  if (n < 2) return 1.0;
  return 0.54 - 0.46 * std::cos(kTwoPi * static_cast<double>(t) / static_cast<double>(n - 1));
}

Frame hamming_window(const Frame& frame) {
  Frame out = frame;
  const std::size_t n = frame.values.size();
  for (std::size_t t = 0; t < n; ++t) out.values[t] *= hamming_coefficient(t, n);
  return out;
}

Spectrum fft_spectrum(std::span<const double> samples) {
  if (!is_power_of_two(samples.size())) {
    throw Error(Errc::not_power_of_two,
                "frame length " + std::to_string(samples.size()) + " is not a power of two");
  }
  Spectrum spectrum(samples.begin(), samples.end());
  fft_plan(samples.size()).forward(spectrum);
  return spectrum;
}

std::vector<BinauralFrame> binaural_spectra(const PcmStream& stream, std::size_t hop) {
  const auto pairs = frame_stream(stream, hop);
  std::vector<BinauralFrame> frames(pairs.size());
  for (std::size_t f = 0; f < pairs.size(); ++f) {
    frames[f].frame_index = f;
    frames[f].left = fft_spectrum(hamming_window(pairs[f].left).values);
    frames[f].right = fft_spectrum(hamming_window(pairs[f].right).values);
  }
  return frames;
}

void write_spectra_csv(std::ostream& out, std::span<const BinauralFrame> frames) {
  out << "frame_index,bin,re_l,im_l,re_r,im_r\n";
  out.precision(17);
  for (const auto& frame : frames) {
    const std::size_t half = frame.left.size() / 2;
    for (std::size_t k = 0; k <= half && k < frame.left.size(); ++k) {
      out << frame.frame_index << ',' << k << ',' << frame.left[k].real() << ','
          << frame.left[k].imag() << ',' << frame.right[k].real() << ','
          << frame.right[k].imag() << '\n';
    }
  }
}

}  // namespace binaural
