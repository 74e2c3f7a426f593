#include "binaural/mel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "binaural/error.hpp"

namespace binaural {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank::MelFilterbank(std::size_t n_mel, double f_lo, double f_hi, std::size_t fft_size,
                             int sample_rate)
    : fft_size_(fft_size) {
  if (n_mel < 2) throw Error(Errc::invalid_argument, "mel filterbank needs at least 2 bands");
  if (!(f_lo >= 0.0 && f_hi > f_lo && f_hi <= sample_rate / 2.0)) {
    throw Error(Errc::invalid_argument, "mel band edges must satisfy 0 <= f_lo < f_hi <= fs/2");
  }
  const double m_lo = hz_to_mel(f_lo);
  const double m_hi = hz_to_mel(f_hi);
  edges_hz_.resize(n_mel + 2);
  for (std::size_t i = 0; i < edges_hz_.size(); ++i) {
    edges_hz_[i] = mel_to_hz(m_lo + (m_hi - m_lo) * static_cast<double>(i) /
                                        static_cast<double>(n_mel + 1));
  }
  // Pin the ends so rounding in the mel round trip cannot shift them.
  edges_hz_.front() = f_lo;
  edges_hz_.back() = f_hi;

  const std::size_t bins = fft_size / 2 + 1;
  matrix_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_mel), static_cast<Eigen::Index>(bins));
  for (std::size_t m = 0; m < n_mel; ++m) {
    for (std::size_t k = 0; k < bins; ++k) {
      matrix_(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) =
          response(m, bin_hz(k, sample_rate, fft_size));
    }
  }
}

double MelFilterbank::response(std::size_t m, double hz) const {
  const double lo = edges_hz_[m];
  const double mid = edges_hz_[m + 1];
  const double hi = edges_hz_[m + 2];
  if (hz <= lo || hz >= hi) return 0.0;
  return hz <= mid ? (hz - lo) / (mid - lo) : (hi - hz) / (hi - mid);
}

Eigen::VectorXd MelFilterbank::apply(const Spectrum& spectrum) const {
  const auto bins = matrix_.cols();
  if (spectrum.size() < static_cast<std::size_t>(bins)) {
    throw Error(Errc::shape_mismatch, "spectrum shorter than the filterbank");
  }
  Eigen::VectorXd power(bins);
  for (Eigen::Index k = 0; k < bins; ++k) power(k) = std::norm(spectrum[static_cast<std::size_t>(k)]);
  return matrix_ * power;
}

const MelFilterbank& default_mel_filterbank() {
  static const MelFilterbank fb;
  return fb;
}

MelSpectrogram mel_spectrogram(std::span<const Spectrum> frames, Ear ear, const MelFilterbank& fb) {
  if (frames.size() != kMelFrames) {
    throw Error(Errc::shape_mismatch, "mel spectrogram needs exactly " +
                                          std::to_string(kMelFrames) + " frames, got " +
                                          std::to_string(frames.size()));
  }
  MelSpectrogram out;
  out.ear = ear;
  out.values.resize(static_cast<Eigen::Index>(fb.bands()), static_cast<Eigen::Index>(kMelFrames));
  for (std::size_t t = 0; t < frames.size(); ++t) {
    out.values.col(static_cast<Eigen::Index>(t)) = fb.apply(frames[t]).array().log1p();
  }
  const double peak = out.values.maxCoeff();
  if (peak < 1e-12) {
    out.values.setZero();
  } else {
    out.values /= peak;
  }
  return out;
}

MelSpectrogram mel_spectrogram(std::span<const BinauralFrame> frames, std::size_t first, Ear ear,
                               const MelFilterbank& fb) {
  if (first + kMelFrames > frames.size()) {
    throw Error(Errc::shape_mismatch, "not enough frames for a mel window");
  }
  std::vector<Spectrum> slice;
  slice.reserve(kMelFrames);
  for (std::size_t t = first; t < first + kMelFrames; ++t) {
    slice.push_back(ear == Ear::left ? frames[t].left : frames[t].right);
  }
  return mel_spectrogram(slice, ear, fb);
}

}  // namespace binaural
