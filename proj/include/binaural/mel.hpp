#pragma once

#include <cstddef>
#include <span>

#include <Eigen/Dense>

#include "binaural/constants.hpp"
#include "binaural/frontend.hpp"

namespace binaural {

inline constexpr std::size_t kMelBands = 128;
inline constexpr std::size_t kMelFrames = 25;

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters with peaks equally spaced on the mel scale. Row m spans
/// the centres of filters m-1 and m+1; columns are FFT bins [0, N/2].
class MelFilterbank {
 public:
  MelFilterbank(std::size_t n_mel = kMelBands, double f_lo = 0.0,
                double f_hi = kSampleRate / 2.0, std::size_t fft_size = kFftSize,
                int sample_rate = kSampleRate);

  std::size_t bands() const { return static_cast<std::size_t>(matrix_.rows()); }
  const Eigen::MatrixXd& matrix() const { return matrix_; }

  /// Peak frequency of band m.
  double center_hz(std::size_t m) const { return edges_hz_[m + 1]; }

  /// Triangle m evaluated at an arbitrary frequency.
  double response(std::size_t m, double hz) const;

  /// Band powers of one spectrum (|X|^2 summed through each triangle).
  Eigen::VectorXd apply(const Spectrum& spectrum) const;

 private:
  std::vector<double> edges_hz_;  // n_mel + 2 points
  std::size_t fft_size_;
  Eigen::MatrixXd matrix_;
};

const MelFilterbank& default_mel_filterbank();

enum class Ear { left, right };

struct MelSpectrogram {
  Eigen::MatrixXd values;  // band x frame
  Ear ear = Ear::left;
};

/// log(1 + band power) per frame, divided by the largest entry; a matrix
/// whose largest entry is below 1e-12 is returned as zeros. Takes exactly
/// kMelFrames spectra of one ear.
MelSpectrogram mel_spectrogram(std::span<const Spectrum> frames, Ear ear = Ear::left,
                               const MelFilterbank& fb = default_mel_filterbank());

/// Convenience: the chosen ear of kMelFrames consecutive binaural frames from `first`.
MelSpectrogram mel_spectrogram(std::span<const BinauralFrame> frames, std::size_t first, Ear ear,
                               const MelFilterbank& fb = default_mel_filterbank());

}  // namespace binaural
