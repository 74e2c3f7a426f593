#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "binaural/constants.hpp"
#include "binaural/grid.hpp"

namespace binaural {

/// Parameters of the analytic rigid-sphere head with pinna cues.
///
/// The transfer function to each ear is the product of
///   - a Woodworth path delay (negative for the lit side, arc length for the shadowed side),
///   - a one-pole/one-zero head-shadow filter whose high-frequency gain depends on
///     the angle between the source and the ear axis,
///   - a zero-phase pinna rear shadow: a high-frequency attenuation that grows as the
///     source moves behind the pinna, whose facing axis is rotated forward of the
///     interaural axis (front-back cue),
///   - a peaking notch whose centre tracks elevation, shifted up for the ipsilateral
///     ear and down for the contralateral ear (elevation cue).
/// The left and right ears are exact mirror images of each other.
struct HeadModel {
  double head_radius_m = 0.0875;
  double speed_of_sound = 343.0;
  double shadow_alpha_min = 0.1;
  double shadow_theta_min_deg = 150.0;
  double pinna_axis_azimuth_deg = 70.0;
  double pinna_rear_db = 15.0;
  double pinna_corner_hz = 4000.0;
  double notch_base_hz = 6000.0;
  double notch_span_hz = 4000.0;
  double notch_depth_db = 15.0;
  double notch_q = 5.0;
  double notch_ear_offset_hz = 200.0;
  double notch_offset_width = 0.02;  // lateral |y| over which the ear offset saturates
  double sample_rate = kSampleRate;

  std::vector<double> to_params() const;
  static HeadModel from_params(const std::vector<double>& params);
  static constexpr std::size_t kParamCount = 14;
};

struct HrtfPair {
  Complex left;
  Complex right;

  bool operator==(const HrtfPair&) const = default;
};

/// Notch centre frequency for one ear. `ear_sign` is +1 for the left ear, -1 for the right.
double notch_center_hz(const Direction& d, int ear_sign, const HeadModel& model);

HrtfPair sphere_hrtf(const Direction& d, double freq_hz, const HeadModel& model);
HrtfPair sphere_hrtf(const Direction& d, std::size_t bin, const HeadModel& model,
                     std::size_t fft_size = kFftSize);

/// Per-direction, per-bin transfer pairs for bins [0, N/2). Immutable after construction.
class HrtfSet {
 public:
  HrtfSet(std::size_t directions, std::size_t fft_size, std::uint64_t grid_hash,
          std::vector<double> params, std::vector<HrtfPair> data);

  std::size_t directions() const { return directions_; }
  std::size_t fft_size() const { return fft_size_; }
  std::size_t bins() const { return fft_size_ / 2; }
  std::uint64_t grid_hash() const { return grid_hash_; }
  const std::vector<double>& params() const { return params_; }
  const std::vector<HrtfPair>& data() const { return data_; }

  const HrtfPair& at(std::size_t direction, std::size_t bin) const {
    return data_[direction * bins() + bin];
  }
  /// The pair scaled to unit joint energy (the rendering and steering normalization).
  HrtfPair normalized(std::size_t direction, std::size_t bin) const;

  bool operator==(const HrtfSet&) const = default;

 private:
  std::size_t directions_;
  std::size_t fft_size_;
  std::uint64_t grid_hash_;
  std::vector<double> params_;
  std::vector<HrtfPair> data_;
};

HrtfSet synthesize_hrtf_set(const DirectionGrid& grid, const HeadModel& model = {},
                            std::size_t fft_size = kFftSize);

/// ln|A_l| - ln|A_r| per direction. Throws silent_channel on a zero magnitude.
std::vector<double> hrtf_ild_map(const HrtfSet& set, std::size_t bin);
/// arg(A_l / A_r) in (-pi, pi] per direction.
std::vector<double> hrtf_ipd_map(const HrtfSet& set, std::size_t bin);

/// Binary container: "HRTF", version, D, N, grid hash, params, then D*(N/2)
/// pairs of little-endian f64 (re_l, im_l, re_r, im_r), direction-major.
void save_hrtf(const HrtfSet& set, const std::filesystem::path& path);
/// Throws Errc::format on bad magic/version/truncation and Errc::compatibility
/// when the grid hash or direction count differ from `grid`.
HrtfSet load_hrtf(const std::filesystem::path& path, const DirectionGrid& grid = default_grid());

/// direction_id,azimuth_deg,elevation_deg,bin,re_l,im_l,re_r,im_r
void write_hrtf_csv(std::ostream& out, const HrtfSet& set, const DirectionGrid& grid);

}  // namespace binaural
