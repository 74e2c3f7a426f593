#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "binaural/frontend.hpp"
#include "binaural/grid.hpp"
#include "binaural/hrtf.hpp"
#include "binaural/random.hpp"

namespace binaural {

enum class WaveKind { sine, triangle, square, sawtooth, white_noise };

struct WaveSpec {
  WaveKind kind = WaveKind::white_noise;
  double fundamental_hz = 0.0;  // ignored for white noise
  double duration_s = 0.5;
  double amplitude = 1.0;

  /// "sine_500", "white_noise", ...
  std::string tag() const;
};

std::string to_string(WaveKind kind);

/// Band-limited Fourier-series synthesis (harmonics below Nyquist) with a
/// random start phase, or seeded Gaussian noise of standard deviation `amplitude`.
std::vector<double> gen_wave(const WaveSpec& spec, Rng& rng, int sample_rate = kSampleRate);

/// Convolves mono signals with the unit-energy HRTF pair of a grid direction.
/// Each pair becomes an N-tap FIR (inverse DFT of the per-bin pairs, Nyquist
/// zeroed, centred on tap N/2); output is advanced by N/2 so a steady signal
/// analysed frame by frame sees exactly the per-bin HRTF product.
class Renderer {
 public:
  explicit Renderer(const HrtfSet& hrtf);

  std::size_t directions() const { return directions_; }
  std::size_t fft_size() const { return fft_size_; }

  /// Throws invalid_argument for an id off the grid.
  PcmStream render(std::span<const double> mono, std::size_t direction) const;

  /// Time-domain impulse responses (left, right) of one direction.
  std::pair<std::vector<double>, std::vector<double>> impulse_response(std::size_t direction) const;

 private:
  std::size_t directions_;
  std::size_t fft_size_;
  std::size_t block_fft_;
  std::vector<std::vector<double>> impulse_left_;
  std::vector<std::vector<double>> impulse_right_;
  std::vector<Spectrum> left_;  // transfer of the zero-padded responses, length block_fft_
  std::vector<Spectrum> right_;
};

enum class NoiseKind { white, diffuse, ego };

std::string to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& s);

/// Where the simulated robot's own fan and motor noise comes from: behind and
/// below the head, in the torso.
Direction default_ego_noise_direction();

/// Background noise added to rendered scenes.
///   white:   independent Gaussian noise per ear.
///   diffuse: an isotropic field heard through the head; the cross-spectrum at
///            every frequency is the mean of a a^H over all grid directions
///            (a the unit-energy HRTF pair), interpolated between set bins.
///   ego:     one broadband point source at a fixed body-relative direction
///            plus independent sensor noise `sensor_db` below it.
/// All kinds produce a flat expected sum-of-ears spectrum, so
/// white_noise_floor() describes each of them.
class BackgroundNoise {
 public:
  /// `renderer` must outlive this object when kind is ego.
  BackgroundNoise(NoiseKind kind, const HrtfSet& hrtf, const Renderer& renderer,
                  const DirectionGrid& grid,
                  const Direction& ego_direction = default_ego_noise_direction(),
                  double sensor_db = -20.0);

  NoiseKind kind() const { return kind_; }
  std::size_t ego_direction_id() const { return ego_id_; }

  /// Two channels of `samples` samples, each with mean power `variance`.
  std::pair<std::vector<double>, std::vector<double>> generate(std::size_t samples,
                                                               double variance, Rng& rng) const;

 private:
  struct CrossSpectrum {
    double ll;
    Complex lr;
    double rr;
  };
  std::pair<std::vector<double>, std::vector<double>> diffuse(std::size_t samples, Rng& rng) const;

  NoiseKind kind_;
  const Renderer* renderer_;
  std::size_t ego_id_ = 0;
  double sensor_share_;
  std::size_t fft_size_;
  // Diffuse-field cross-spectra at the HRTF set's bins [0, N/2].
  std::vector<CrossSpectrum> cross_;
};

/// Adds noise at `snr_db` relative to the mean per-channel power of `stream`.
/// Returns the per-channel noise variance.
double add_noise(PcmStream& stream, double snr_db, const BackgroundNoise& noise, Rng& rng);

struct RenderedSource {
  PcmStream stream;
  double noise_variance = 0.0;  // per-channel sample variance of the added noise
};

RenderedSource render_virtual_source(std::span<const double> mono, std::size_t direction,
                                     const Renderer& renderer, double snr_db, Rng& rng,
                                     const BackgroundNoise& noise);

}  // namespace binaural
