#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "binaural/constants.hpp"
#include "binaural/frontend.hpp"
#include "binaural/hrtf.hpp"

namespace binaural {

/// 2x2 Hermitian matrix [[a, b], [conj(b), c]].
struct Hermitian2 {
  double a = 0.0;
  Complex b{};
  double c = 0.0;
  std::size_t frames = 0;  // snapshots averaged

  Complex operator()(int i, int j) const {
    if (i == 0) return j == 0 ? Complex(a) : b;
    return j == 0 ? std::conj(b) : Complex(c);
  }
};

/// (1/M) sum x x^H with x = (X_l, X_r) at `bin`. Needs at least two frames.
Hermitian2 spatial_correlation(std::span<const BinauralFrame> frames, std::size_t bin);

struct Eigen2 {
  double lambda1 = 0.0;  // lambda1 >= lambda2
  double lambda2 = 0.0;
  std::array<Complex, 2> e1{};
  std::array<Complex, 2> e2{};
};

/// Closed-form eigendecomposition with orthonormal eigenvectors.
Eigen2 eig2(const Hermitian2& r);

inline constexpr double kMusicScoreCap = 1e24;

/// 1 / |a_k^H e2|^2 over all directions, steering vectors a_k the unit-energy
/// HRTF pairs at `bin`. Scores are capped at kMusicScoreCap.
std::vector<double> music_spectrum(const Hermitian2& r, const HrtfSet& steering, std::size_t bin);

/// Bins whose eigenvalue ratio lambda1 / lambda2 reaches `threshold`.
/// A zero lambda2 counts as an infinite ratio. `correlations[i]` belongs to `bins[i]`.
std::vector<std::size_t> select_bins_by_eigratio(std::span<const Hermitian2> correlations,
                                                 std::span<const std::size_t> bins,
                                                 double threshold);

struct MusicOptions {
  double eigratio_threshold = 10.0;
};

struct MusicEstimate {
  std::size_t direction = 0;
  double score = 0.0;
  std::vector<double> spectrum;
  std::vector<std::size_t> selected_bins;
};

/// Sums per-bin spectra over the eigenratio-selected bins in [1, N/2) and
/// takes the argmax (ties to the lowest id). Throws no_valid_frequency.
MusicEstimate music_estimate(std::span<const BinauralFrame> frames, const HrtfSet& steering,
                             const MusicOptions& options = {});

}  // namespace binaural
