#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>

#include "binaural/constants.hpp"
#include "binaural/frontend.hpp"

namespace binaural {

/// Energy floor below which a bin is treated as silent.
inline constexpr double kSilentEpsilon = 1e-12;

/// Spectrum pair scaled to unit joint energy: |l|^2 + |r|^2 == 1.
struct NormalizedPair {
  Complex left;
  Complex right;
};

/// Interaural features of one frequency bin. The network input order is
/// fixed: ILD first, then the four IPD components.
struct IldIpdFeature {
  double ild = 0.0;
  std::array<double, 4> ipd{};  // Re l/|l|, Im l/|l|, Re r/|r|, Im r/|r|
  std::size_t bin = 0;

  std::array<double, 5> vector() const { return {ild, ipd[0], ipd[1], ipd[2], ipd[3]}; }
};

/// Throws Errc::silent_bin when |xl|^2 + |xr|^2 <= kSilentEpsilon.
NormalizedPair normalize_pair(Complex xl, Complex xr);

/// ln|l| - ln|r|. Throws Errc::silent_channel if either magnitude is <= kSilentEpsilon.
double ild(const NormalizedPair& pair);

/// Unit-circle projections of each channel's phase.
std::array<double, 4> ipd(const NormalizedPair& pair);

/// Feature of one bin of a raw spectrum pair.
IldIpdFeature pair_feature(Complex xl, Complex xr, std::size_t bin);

/// Feature at `bin` of a frame. Only bins in [1, N/2) are eligible.
IldIpdFeature feature_vector(const BinauralFrame& frame, std::size_t bin);

/// Debug dump: bin,ild,ipd0,ipd1,ipd2,ipd3.
void write_features_csv(std::ostream& out, std::span<const IldIpdFeature> features);

}  // namespace binaural
