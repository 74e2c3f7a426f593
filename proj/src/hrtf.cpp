#include "binaural/hrtf.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "binaural/error.hpp"
#include "binaural/io.hpp"

namespace binaural {
namespace {

constexpr std::uint32_t kHrtfVersion = 1;

double db_to_gain(double db) { return std::pow(10.0, db / 20.0); }

// Transfer function to the ear on the side given by `lateral`, the source
// component along that ear's outward axis. Using a single signed input for both
// ears makes the left/right mirror symmetry exact in floating point.
Complex ear_response(double x, double lateral, double z, double freq_hz, const HeadModel& m) {
  const double omega = kTwoPi * freq_hz;
  const double a_over_c = m.head_radius_m / m.speed_of_sound;

  // Woodworth path: lit side arrives early, shadowed side travels the arc.
  const double cos_beta = std::clamp(lateral, -1.0, 1.0);
  const double beta = std::acos(cos_beta);
  const double delay = cos_beta >= 0.0 ? -a_over_c * cos_beta : a_over_c * (beta - kPi / 2.0);
  const Complex path = std::polar(1.0, -omega * delay);

  // One-pole/one-zero head shadow.
  const double alpha = (1.0 + m.shadow_alpha_min / 2.0) +
                       (1.0 - m.shadow_alpha_min / 2.0) *
                           std::cos(beta / deg_to_rad(m.shadow_theta_min_deg) * kPi);
  const double half_omega_ratio = omega * a_over_c / 2.0;
  const Complex shadow = Complex(1.0, alpha * half_omega_ratio) / Complex(1.0, half_omega_ratio);

  // Pinna rear shadow, zero phase, active above the corner frequency.
  const double pinna_az = deg_to_rad(m.pinna_axis_azimuth_deg);
  const double facing = std::cos(pinna_az) * x + std::sin(pinna_az) * lateral;
  const double rear = std::max(0.0, -facing);
  const double r4 = std::pow(freq_hz / m.pinna_corner_hz, 4.0);
  const double pinna = db_to_gain(-m.pinna_rear_db * rear * r4 / (1.0 + r4));

  // Elevation notch, shifted up on the ipsilateral side.
  const double elevation = rad_to_deg(std::asin(std::clamp(z, -1.0, 1.0)));
  const double center = m.notch_base_hz + m.notch_span_hz * (elevation + 90.0) / 180.0 +
                        m.notch_ear_offset_hz * std::tanh(lateral / m.notch_offset_width);
  const double r = freq_hz / center;
  const double depth = db_to_gain(-m.notch_depth_db);
  const Complex notch =
      Complex(1.0 - r * r, r * depth / m.notch_q) / Complex(1.0 - r * r, r / m.notch_q);

  return path * shadow * pinna * notch;
}

}  // namespace

std::vector<double> HeadModel::to_params() const {
  return {head_radius_m,      speed_of_sound,  shadow_alpha_min,    shadow_theta_min_deg,
          pinna_axis_azimuth_deg, pinna_rear_db, pinna_corner_hz,   notch_base_hz,
          notch_span_hz,      notch_depth_db,  notch_q,             notch_ear_offset_hz,
          notch_offset_width, sample_rate};
}

HeadModel HeadModel::from_params(const std::vector<double>& p) {
  if (p.size() != kParamCount) {
    throw Error(Errc::format, "head model expects " + std::to_string(kParamCount) +
                                  " parameters, got " + std::to_string(p.size()));
  }
  HeadModel m;
  m.head_radius_m = p[0];
  m.speed_of_sound = p[1];
  m.shadow_alpha_min = p[2];
  m.shadow_theta_min_deg = p[3];
  m.pinna_axis_azimuth_deg = p[4];
  m.pinna_rear_db = p[5];
  m.pinna_corner_hz = p[6];
  m.notch_base_hz = p[7];
  m.notch_span_hz = p[8];
  m.notch_depth_db = p[9];
  m.notch_q = p[10];
  m.notch_ear_offset_hz = p[11];
  m.notch_offset_width = p[12];
  m.sample_rate = p[13];
  return m;
}

double notch_center_hz(const Direction& d, int ear_sign, const HeadModel& m) {
  const double lateral = ear_sign * d.y();
  return m.notch_base_hz + m.notch_span_hz * (d.elevation_deg() + 90.0) / 180.0 +
         m.notch_ear_offset_hz * std::tanh(lateral / m.notch_offset_width);
}

HrtfPair sphere_hrtf(const Direction& d, double freq_hz, const HeadModel& model) {
  return {ear_response(d.x(), 1.0 * d.y(), d.z(), freq_hz, model),
          ear_response(d.x(), -1.0 * d.y(), d.z(), freq_hz, model)};
}

HrtfPair sphere_hrtf(const Direction& d, std::size_t bin, const HeadModel& model,
                     std::size_t fft_size) {
  return sphere_hrtf(d, bin_hz(bin, model.sample_rate, fft_size), model);
}

HrtfSet::HrtfSet(std::size_t directions, std::size_t fft_size, std::uint64_t grid_hash,
                 std::vector<double> params, std::vector<HrtfPair> data)
    : directions_(directions),
      fft_size_(fft_size),
      grid_hash_(grid_hash),
      params_(std::move(params)),
      data_(std::move(data)) {
  if (data_.size() != directions_ * (fft_size_ / 2)) {
    throw Error(Errc::shape_mismatch, "HRTF data size does not match D * N/2");
  }
}

HrtfPair HrtfSet::normalized(std::size_t direction, std::size_t bin) const {
  const auto& p = at(direction, bin);
  const double norm = std::sqrt(std::norm(p.left) + std::norm(p.right));
  if (!(norm > 0.0)) throw Error(Errc::silent_bin, "zero-energy HRTF pair");
  return {p.left / norm, p.right / norm};
}

HrtfSet synthesize_hrtf_set(const DirectionGrid& grid, const HeadModel& model,
                            std::size_t fft_size) {
  const std::size_t bins = fft_size / 2;
  std::vector<HrtfPair> data(grid.size() * bins);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    for (std::size_t b = 0; b < bins; ++b) {
      data[k * bins + b] = sphere_hrtf(grid[k], b, model, fft_size);
    }
  }
  return HrtfSet(grid.size(), fft_size, grid.hash(), model.to_params(), std::move(data));
}

std::vector<double> hrtf_ild_map(const HrtfSet& set, std::size_t bin) {
  if (bin >= set.bins()) throw Error(Errc::invalid_argument, "bin out of range");
  std::vector<double> out(set.directions());
  for (std::size_t k = 0; k < set.directions(); ++k) {
    const auto& p = set.at(k, bin);
    const double l = std::abs(p.left);
    const double r = std::abs(p.right);
    if (!(l > 0.0) || !(r > 0.0)) throw Error(Errc::silent_channel, "zero HRTF magnitude");
    out[k] = std::log(l) - std::log(r);
  }
  return out;
}

std::vector<double> hrtf_ipd_map(const HrtfSet& set, std::size_t bin) {
  if (bin >= set.bins()) throw Error(Errc::invalid_argument, "bin out of range");
  std::vector<double> out(set.directions());
  for (std::size_t k = 0; k < set.directions(); ++k) {
    const auto& p = set.at(k, bin);
    if (!(std::abs(p.left) > 0.0) || !(std::abs(p.right) > 0.0)) {
      throw Error(Errc::silent_channel, "zero HRTF magnitude");
    }
    double phase = std::arg(p.left / p.right);
    if (phase <= -kPi) phase += kTwoPi;
    out[k] = phase;
  }
  return out;
}

void save_hrtf(const HrtfSet& set, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.put_magic("HRTF");
  w.put<std::uint32_t>(kHrtfVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(set.directions()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(set.fft_size()));
  w.put<std::uint64_t>(set.grid_hash());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(set.params().size()));
  w.put_span(std::span<const double>(set.params()));
  for (const auto& p : set.data()) {
    w.put(p.left.real());
    w.put(p.left.imag());
    w.put(p.right.real());
    w.put(p.right.imag());
  }
  io::write_file_atomic(path, w.bytes());
}

HrtfSet load_hrtf(const std::filesystem::path& path, const DirectionGrid& grid) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes);
  if (!r.magic_matches("HRTF")) throw Error(Errc::format, path.string() + ": bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kHrtfVersion) {
    throw Error(Errc::format, "unsupported HRTF container version " + std::to_string(version));
  }
  const auto directions = r.get<std::uint32_t>();
  const auto fft_size = r.get<std::uint32_t>();
  const auto grid_hash = r.get<std::uint64_t>();
  if (directions != grid.size() || grid_hash != grid.hash()) {
    throw Error(Errc::compatibility, "HRTF set was built for a different direction grid");
  }
  if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0) {
    throw Error(Errc::format, "HRTF FFT size is not a power of two");
  }
  std::vector<double> params(r.get<std::uint32_t>());
  r.get_span(std::span(params));
  const std::size_t count = std::size_t{directions} * (fft_size / 2);
  if (r.remaining() != count * 4 * sizeof(double)) {
    throw Error(Errc::format, "HRTF payload has unexpected length (truncated?)");
  }
  std::vector<HrtfPair> data(count);
  for (auto& p : data) {
    const double lr = r.get<double>();
    const double li = r.get<double>();
    const double rr = r.get<double>();
    const double ri = r.get<double>();
    p = {Complex(lr, li), Complex(rr, ri)};
  }
  return HrtfSet(directions, fft_size, grid_hash, std::move(params), std::move(data));
}

void write_hrtf_csv(std::ostream& out, const HrtfSet& set, const DirectionGrid& grid) {
  out << "direction_id,azimuth_deg,elevation_deg,bin,re_l,im_l,re_r,im_r\n";
  out.precision(17);
  for (std::size_t k = 0; k < set.directions(); ++k) {
    const double az = grid[k].azimuth_deg();
    const double el = grid[k].elevation_deg();
    for (std::size_t b = 0; b < set.bins(); ++b) {
      const auto& p = set.at(k, b);
      out << k << ',' << az << ',' << el << ',' << b << ',' << p.left.real() << ','
          << p.left.imag() << ',' << p.right.real() << ',' << p.right.imag() << '\n';
    }
  }
}

}  // namespace binaural
