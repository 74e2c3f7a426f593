#include "binaural/render.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "binaural/error.hpp"
#include "binaural/fft.hpp"

namespace binaural {
namespace {

std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Real signal from the non-negative half of a spectrum of size n.
std::vector<double> real_inverse(Spectrum half, std::size_t n) {
  Spectrum full(n);
  for (std::size_t b = 0; b <= n / 2; ++b) full[b] = half[b];
  for (std::size_t b = 1; b < n / 2; ++b) full[n - b] = std::conj(half[b]);
  fft_plan(n).inverse(full);
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) out[t] = full[t].real();
  return out;
}

double mean_power(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::inner_product(x.begin(), x.end(), x.begin(), 0.0) / static_cast<double>(x.size());
}

}  // namespace

std::string to_string(WaveKind kind) {
  switch (kind) {
    case WaveKind::sine: return "sine";
    case WaveKind::triangle: return "triangle";
    case WaveKind::square: return "square";
    case WaveKind::sawtooth: return "sawtooth";
    case WaveKind::white_noise: return "white_noise";
  }
  return "unknown";
}

std::string WaveSpec::tag() const {
  if (kind == WaveKind::white_noise) return "white_noise";
  return to_string(kind) + "_" + std::to_string(static_cast<long>(std::lround(fundamental_hz)));
}

std::vector<double> gen_wave(const WaveSpec& spec, Rng& rng, int sample_rate) {
  if (!(spec.duration_s > 0.0) || sample_rate <= 0) {
    throw Error(Errc::invalid_argument, "wave duration and sample rate must be positive");
  }
  const auto n = static_cast<std::size_t>(std::lround(spec.duration_s * sample_rate));
  std::vector<double> out(n, 0.0);
  if (spec.kind == WaveKind::white_noise) {
    std::normal_distribution<double> g(0.0, spec.amplitude);
    for (auto& v : out) v = g(rng);
    return out;
  }
  const double nyquist = sample_rate / 2.0;
  if (!(spec.fundamental_hz > 0.0) || spec.fundamental_hz >= nyquist) {
    throw Error(Errc::invalid_argument, "fundamental must lie in (0, Nyquist)");
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double offset = unit(rng) / spec.fundamental_hz;  // random start within one period

  // Sine-series coefficients of the unit-amplitude waveform.
  std::vector<std::pair<int, double>> partials;
  for (int h = 1; h * spec.fundamental_hz < nyquist; ++h) {
    double c = 0.0;
    switch (spec.kind) {
      case WaveKind::sine: c = h == 1 ? 1.0 : 0.0; break;
      case WaveKind::square: c = h % 2 == 1 ? 4.0 / (kPi * h) : 0.0; break;
      case WaveKind::sawtooth: c = (h % 2 == 1 ? 2.0 : -2.0) / (kPi * h); break;
      case WaveKind::triangle:
        c = h % 2 == 1 ? ((h / 2) % 2 == 0 ? 1.0 : -1.0) * 8.0 / (kPi * kPi * h * h) : 0.0;
        break;
      case WaveKind::white_noise: break;
    }
    if (c != 0.0) partials.emplace_back(h, c);
  }
  for (std::size_t t = 0; t < n; ++t) {
    const double phase = kTwoPi * spec.fundamental_hz * (static_cast<double>(t) / sample_rate + offset);
    double v = 0.0;
    for (const auto& [h, c] : partials) v += c * std::sin(h * phase);
    out[t] = spec.amplitude * v;
  }
  return out;
}

Renderer::Renderer(const HrtfSet& hrtf)
    : directions_(hrtf.directions()),
      fft_size_(hrtf.fft_size()),
      block_fft_(2 * hrtf.fft_size()) {
  const std::size_t n = fft_size_;
  const auto& plan = fft_plan(block_fft_);
  for (std::size_t k = 0; k < directions_; ++k) {
    Spectrum hl(n / 2 + 1), hr(n / 2 + 1);
    for (std::size_t b = 0; b < n / 2; ++b) {
      const auto a = hrtf.normalized(k, b);
      hl[b] = a.left;
      hr[b] = a.right;
    }
    const auto tl = real_inverse(std::move(hl), n);
    const auto tr = real_inverse(std::move(hr), n);
    std::vector<double> il(n), ir(n);
    for (std::size_t t = 0; t < n; ++t) {
      il[(t + n / 2) % n] = tl[t];
      ir[(t + n / 2) % n] = tr[t];
    }
    Spectrum l(block_fft_), r(block_fft_);
    for (std::size_t t = 0; t < n; ++t) {
      l[t] = il[t];
      r[t] = ir[t];
    }
    plan.forward(l);
    plan.forward(r);
    impulse_left_.push_back(std::move(il));
    impulse_right_.push_back(std::move(ir));
    left_.push_back(std::move(l));
    right_.push_back(std::move(r));
  }
}

std::pair<std::vector<double>, std::vector<double>> Renderer::impulse_response(
    std::size_t direction) const {
  if (direction >= directions_) throw Error(Errc::invalid_argument, "direction is not on the grid");
  return {impulse_left_[direction], impulse_right_[direction]};
}

PcmStream Renderer::render(std::span<const double> mono, std::size_t direction) const {
  if (direction >= directions_) throw Error(Errc::invalid_argument, "direction is not on the grid");
  const std::size_t n = mono.size();
  const std::size_t half = fft_size_ / 2;
  const std::size_t block = block_fft_ - fft_size_ + 1;  // input samples per block
  const auto& plan = fft_plan(block_fft_);
  std::vector<double> yl(n + block_fft_, 0.0), yr(n + block_fft_, 0.0);
  Spectrum xl(block_fft_), xr(block_fft_);
  for (std::size_t start = 0; start < n; start += block) {
    const std::size_t len = std::min(block, n - start);
    std::fill(xl.begin(), xl.end(), Complex{});
    for (std::size_t t = 0; t < len; ++t) xl[t] = mono[start + t];
    plan.forward(xl);
    for (std::size_t b = 0; b < block_fft_; ++b) {
      xr[b] = xl[b] * right_[direction][b];
      xl[b] *= left_[direction][b];
    }
    plan.inverse(xl);
    plan.inverse(xr);
    for (std::size_t t = 0; t < block_fft_ && start + t < yl.size(); ++t) {
      yl[start + t] += xl[t].real();
      yr[start + t] += xr[t].real();
    }
  }
  PcmStream out;
  out.left.assign(yl.begin() + static_cast<std::ptrdiff_t>(half),
                  yl.begin() + static_cast<std::ptrdiff_t>(half + n));
  out.right.assign(yr.begin() + static_cast<std::ptrdiff_t>(half),
                   yr.begin() + static_cast<std::ptrdiff_t>(half + n));
  return out;
}

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::white: return "white";
    case NoiseKind::diffuse: return "diffuse";
    case NoiseKind::ego: return "ego";
  }
  return "unknown";
}

NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "white") return NoiseKind::white;
  if (s == "diffuse") return NoiseKind::diffuse;
  if (s == "ego") return NoiseKind::ego;
  throw Error(Errc::invalid_argument, "unknown noise kind '" + s + "'");
}

Direction default_ego_noise_direction() { return Direction::from_angles(180.0, -40.0); }

BackgroundNoise::BackgroundNoise(NoiseKind kind, const HrtfSet& hrtf, const Renderer& renderer,
                                 const DirectionGrid& grid, const Direction& ego_direction,
                                 double sensor_db)
    : kind_(kind),
      renderer_(&renderer),
      ego_id_(grid.nearest(ego_direction)),
      sensor_share_(std::pow(10.0, sensor_db / 10.0)),
      fft_size_(hrtf.fft_size()) {
  if (kind_ != NoiseKind::diffuse) return;
  const std::size_t bins = hrtf.bins();
  std::vector<double> c00(bins + 1, 0.0), c11(bins + 1, 0.0);
  std::vector<Complex> c01(bins + 1);
  const double d = static_cast<double>(hrtf.directions());
  for (std::size_t b = 0; b < bins; ++b) {
    for (std::size_t k = 0; k < hrtf.directions(); ++k) {
      const auto a = hrtf.normalized(k, b);
      c00[b] += std::norm(a.left) / d;
      c11[b] += std::norm(a.right) / d;
      c01[b] += a.left * std::conj(a.right) / d;
    }
  }
  // The set stops below Nyquist; hold the last bin.
  c00[bins] = c00[bins - 1];
  c11[bins] = c11[bins - 1];
  c01[bins] = c01[bins - 1];
  for (std::size_t b = 0; b <= bins; ++b) {
    cross_.push_back({c00[b], c01[b], c11[b]});
  }
}

std::pair<std::vector<double>, std::vector<double>> BackgroundNoise::diffuse(std::size_t samples,
                                                                             Rng& rng) const {
  const std::size_t length = next_power_of_two(std::max<std::size_t>(samples, 2));
  const std::size_t bins = cross_.size() - 1;
  Spectrum l(length / 2 + 1), r(length / 2 + 1);
  // DC and Nyquist stay zero so both channels come out real.
  for (std::size_t j = 1; j < length / 2; ++j) {
    const double pos = static_cast<double>(j) * static_cast<double>(fft_size_) /
                       static_cast<double>(length);
    const auto lo = std::min(static_cast<std::size_t>(pos), bins);
    const auto hi = std::min(lo + 1, bins);
    const double w = pos - static_cast<double>(lo);
    const double a = (1 - w) * cross_[lo].ll + w * cross_[hi].ll;
    const Complex b = (1 - w) * cross_[lo].lr + w * cross_[hi].lr;
    const double c = (1 - w) * cross_[lo].rr + w * cross_[hi].rr;
    // Cholesky factor of [[a, b], [conj b, c]].
    const double l00 = std::sqrt(a);
    const Complex l10 = l00 > 0.0 ? std::conj(b) / l00 : Complex{};
    const double l11 = std::sqrt(std::max(0.0, c - std::norm(l10)));
    const Complex z0 = complex_gaussian(rng, 1.0);
    const Complex z1 = complex_gaussian(rng, 1.0);
    l[j] = l00 * z0;
    r[j] = l10 * z0 + l11 * z1;
  }
  auto xl = real_inverse(std::move(l), length);
  auto xr = real_inverse(std::move(r), length);
  xl.resize(samples);
  xr.resize(samples);
  return {std::move(xl), std::move(xr)};
}

std::pair<std::vector<double>, std::vector<double>> BackgroundNoise::generate(
    std::size_t samples, double variance, Rng& rng) const {
  std::vector<double> xl(samples, 0.0), xr(samples, 0.0);
  if (!(variance > 0.0) || samples == 0) return {xl, xr};
  std::normal_distribution<double> unit(0.0, 1.0);
  auto normalize_to = [&](std::vector<double>& a, std::vector<double>& b, double target) {
    const double power = 0.5 * (mean_power(a) + mean_power(b));
    if (power > 0.0) {
      const double g = std::sqrt(target / power);
      for (auto& v : a) v *= g;
      for (auto& v : b) v *= g;
    }
  };
  switch (kind_) {
    case NoiseKind::white:
      for (std::size_t t = 0; t < samples; ++t) {
        xl[t] = unit(rng);
        xr[t] = unit(rng);
      }
      normalize_to(xl, xr, variance);
      break;
    case NoiseKind::diffuse: {
      auto [dl, dr] = diffuse(samples, rng);
      xl = std::move(dl);
      xr = std::move(dr);
      normalize_to(xl, xr, variance);
      break;
    }
    case NoiseKind::ego: {
      // Pad by one FIR length on both sides so the excerpt is steady-state.
      const std::size_t pad = fft_size_;
      std::vector<double> mono(samples + 2 * pad);
      for (auto& v : mono) v = unit(rng);
      const auto full = renderer_->render(mono, ego_id_);
      xl.assign(full.left.begin() + static_cast<std::ptrdiff_t>(pad),
                full.left.begin() + static_cast<std::ptrdiff_t>(pad + samples));
      xr.assign(full.right.begin() + static_cast<std::ptrdiff_t>(pad),
                full.right.begin() + static_cast<std::ptrdiff_t>(pad + samples));
      normalize_to(xl, xr, variance * (1.0 - sensor_share_));
      const double sensor = std::sqrt(variance * sensor_share_);
      for (std::size_t t = 0; t < samples; ++t) {
        xl[t] += sensor * unit(rng);
        xr[t] += sensor * unit(rng);
      }
      break;
    }
  }
  return {std::move(xl), std::move(xr)};
}

double add_noise(PcmStream& stream, double snr_db, const BackgroundNoise& noise, Rng& rng) {
  const double signal = 0.5 * (mean_power(stream.left) + mean_power(stream.right));
  const double variance = signal / std::pow(10.0, snr_db / 10.0);
  if (!(variance > 0.0)) return 0.0;
  auto [nl, nr] = noise.generate(stream.size(), variance, rng);
  for (std::size_t t = 0; t < stream.size(); ++t) {
    stream.left[t] += nl[t];
    stream.right[t] += nr[t];
  }
  return variance;
}

RenderedSource render_virtual_source(std::span<const double> mono, std::size_t direction,
                                     const Renderer& renderer, double snr_db, Rng& rng,
                                     const BackgroundNoise& noise) {
  RenderedSource out;
  out.stream = renderer.render(mono, direction);
  out.noise_variance = add_noise(out.stream, snr_db, noise, rng);
  return out;
}

}  // namespace binaural
