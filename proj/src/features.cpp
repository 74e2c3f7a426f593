#include "binaural/features.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include "binaural/error.hpp"

namespace binaural {

NormalizedPair normalize_pair(Complex xl, Complex xr) {
  const double energy = std::norm(xl) + std::norm(xr);
  if (!(energy > kSilentEpsilon)) throw Error(Errc::silent_bin, "bin energy below threshold");
  const double scale = 1.0 / std::sqrt(energy);
  return {xl * scale, xr * scale};
}

namespace {

void require_audible(const NormalizedPair& pair) {
  if (!(std::abs(pair.left) > kSilentEpsilon)) {
    throw Error(Errc::silent_channel, "left channel is silent");
  }
  if (!(std::abs(pair.right) > kSilentEpsilon)) {
    throw Error(Errc::silent_channel, "right channel is silent");
  }
}

}  // namespace

double ild(const NormalizedPair& pair) {
  require_audible(pair);
  return std::log(std::abs(pair.left)) - std::log(std::abs(pair.right));
}

std::array<double, 4> ipd(const NormalizedPair& pair) {
  require_audible(pair);
  const Complex l = pair.left / std::abs(pair.left);
  const Complex r = pair.right / std::abs(pair.right);
  return {l.real(), l.imag(), r.real(), r.imag()};
}

IldIpdFeature pair_feature(Complex xl, Complex xr, std::size_t bin) {
  const auto pair = normalize_pair(xl, xr);
  return {ild(pair), ipd(pair), bin};
}

IldIpdFeature feature_vector(const BinauralFrame& frame, std::size_t bin) {
  const std::size_t n = frame.left.size();
  if (bin < 1 || bin >= n / 2) {
    throw Error(Errc::invalid_argument, "bin " + std::to_string(bin) + " outside [1, N/2)");
  }
  return pair_feature(frame.left[bin], frame.right[bin], bin);
}

void write_features_csv(std::ostream& out, std::span<const IldIpdFeature> features) {
  out << "bin,ild,ipd0,ipd1,ipd2,ipd3\n";
  out.precision(17);
  for (const auto& f : features) {
    out << f.bin << ',' << f.ild << ',' << f.ipd[0] << ',' << f.ipd[1] << ',' << f.ipd[2]
        << ',' << f.ipd[3] << '\n';
  }
}

}  // namespace binaural
