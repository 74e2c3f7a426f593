#include "binaural/music.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "binaural/error.hpp"

namespace binaural {

Hermitian2 spatial_correlation(std::span<const BinauralFrame> frames, std::size_t bin) {
  if (frames.size() < 2) {
    throw Error(Errc::invalid_argument, "spatial correlation needs at least two frames");
  }
  Hermitian2 r;
  for (const auto& f : frames) {
    if (bin >= f.left.size() || bin >= f.right.size()) {
      throw Error(Errc::invalid_argument, "bin out of range");
    }
    const Complex xl = f.left[bin];
    const Complex xr = f.right[bin];
    r.a += std::norm(xl);
    r.b += xl * std::conj(xr);
    r.c += std::norm(xr);
  }
  const double m = static_cast<double>(frames.size());
  r.a /= m;
  r.b /= m;
  r.c /= m;
  r.frames = frames.size();
  return r;
}

Eigen2 eig2(const Hermitian2& r) {
  const double mean = 0.5 * (r.a + r.c);
  const double half_diff = 0.5 * (r.a - r.c);
  const double d = std::hypot(half_diff, std::abs(r.b));
  Eigen2 out;
  out.lambda1 = mean + d;
  out.lambda2 = mean - d;

  // Of the two null vectors of R - lambda1 I, use the one with the larger norm.
  std::array<Complex, 2> v;
  if (d == 0.0) {
    v = {Complex(1.0), Complex(0.0)};
  } else if (half_diff >= 0.0) {
    v = {Complex(d + half_diff), std::conj(r.b)};
  } else {
    v = {r.b, Complex(d - half_diff)};
  }
  const double n = std::sqrt(std::norm(v[0]) + std::norm(v[1]));
  out.e1 = {v[0] / n, v[1] / n};
  out.e2 = {-std::conj(out.e1[1]), std::conj(out.e1[0])};
  return out;
}

std::vector<double> music_spectrum(const Hermitian2& r, const HrtfSet& steering, std::size_t bin) {
  if (bin >= steering.bins()) throw Error(Errc::invalid_argument, "bin out of range");
  const auto e = eig2(r);
  std::vector<double> score(steering.directions());
  for (std::size_t k = 0; k < steering.directions(); ++k) {
    const auto a = steering.normalized(k, bin);
    const double p = std::norm(std::conj(a.left) * e.e2[0] + std::conj(a.right) * e.e2[1]);
    score[k] = p > 1.0 / kMusicScoreCap ? 1.0 / p : kMusicScoreCap;
  }
  return score;
}

std::vector<std::size_t> select_bins_by_eigratio(std::span<const Hermitian2> correlations,
                                                 std::span<const std::size_t> bins,
                                                 double threshold) {
  if (!(threshold > 1.0)) throw Error(Errc::invalid_argument, "eigenratio threshold must exceed 1");
  if (correlations.size() != bins.size()) {
    throw Error(Errc::shape_mismatch, "one correlation matrix per bin expected");
  }
  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const auto e = eig2(correlations[i]);
    if (!(e.lambda1 > 0.0)) continue;  // silent bin
    const double ratio = e.lambda2 > 0.0 ? e.lambda1 / e.lambda2
                                         : std::numeric_limits<double>::infinity();
    if (ratio >= threshold) selected.push_back(bins[i]);
  }
  return selected;
}

MusicEstimate music_estimate(std::span<const BinauralFrame> frames, const HrtfSet& steering,
                             const MusicOptions& options) {
  if (frames.size() < 2) throw Error(Errc::invalid_argument, "MUSIC needs at least two frames");
  const std::size_t half = std::min(frames.front().left.size() / 2, steering.bins());
  std::vector<std::size_t> bins;
  std::vector<Hermitian2> correlations;
  for (std::size_t b = 1; b < half; ++b) {
    bins.push_back(b);
    correlations.push_back(spatial_correlation(frames, b));
  }
  MusicEstimate out;
  out.selected_bins = select_bins_by_eigratio(correlations, bins, options.eigratio_threshold);
  if (out.selected_bins.empty()) {
    throw Error(Errc::no_valid_frequency, "no bin passed the eigenvalue-ratio test");
  }
  out.spectrum.assign(steering.directions(), 0.0);
  for (auto b : out.selected_bins) {
    const auto s = music_spectrum(correlations[b - 1], steering, b);
    for (std::size_t k = 0; k < s.size(); ++k) out.spectrum[k] += s[k];
  }
  const auto best = std::max_element(out.spectrum.begin(), out.spectrum.end());
  out.direction = static_cast<std::size_t>(best - out.spectrum.begin());
  out.score = *best;
  return out;
}

}  // namespace binaural
