#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "binaural/error.hpp"
#include "binaural/fft.hpp"
#include "binaural/frontend.hpp"

using namespace binaural;

namespace {

PcmStream stereo(std::vector<double> left, std::vector<double> right) {
  PcmStream s;
  s.left = std::move(left);
  s.right = std::move(right);
  return s;
}

std::vector<double> random_frame(std::mt19937_64& rng, std::size_t n = kFftSize) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(n);
  for (auto& v : x) v = g(rng);
  return x;
}

// Textbook O(N^2) transform, independent of the radix-2 plan.
Spectrum naive_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  Spectrum out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc{};
    for (std::size_t t = 0; t < n; ++t) {
      const double a = -kTwoPi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      acc += x[t] * Complex(std::cos(a), std::sin(a));
    }
    out[k] = acc;
  }
  return out;
}

Errc code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return Errc::io;
}

}  // namespace

TEST_CASE("frame_stream counts and offsets") {
  auto pairs = frame_stream(stereo(std::vector<double>(4096), std::vector<double>(4096)), 705);
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[0].left.start_index == 0);
  CHECK(pairs[1].left.start_index == 705);
  CHECK(pairs[2].left.start_index == 1410);
  CHECK(pairs[2].right.start_index == 1410);
  for (const auto& p : pairs) CHECK(p.left.values.size() == kFftSize);

  CHECK(frame_stream(stereo(std::vector<double>(2048), std::vector<double>(2048)), 705).size() == 1);
  CHECK(code_of([] { frame_stream(stereo(std::vector<double>(2047), std::vector<double>(2047))); }) ==
        Errc::empty_stream);
}

TEST_CASE("frame_stream copies the right samples") {
  std::vector<double> l(3000), r(3000);
  for (std::size_t i = 0; i < l.size(); ++i) {
    l[i] = static_cast<double>(i);
    r[i] = -static_cast<double>(i);
  }
  auto pairs = frame_stream(stereo(l, r), 100);
  CHECK(pairs.size() == (3000 - 2048) / 100 + 1);
  CHECK(pairs[4].left.values[0] == 400.0);
  CHECK(pairs[4].right.values[2047] == -2447.0);
}

TEST_CASE("stream validation") {
  CHECK(code_of([] { stereo(std::vector<double>(10), std::vector<double>(9)).validate(); }) ==
        Errc::invalid_argument);
  auto s = stereo(std::vector<double>(10), std::vector<double>(10));
  s.sample_rate = 0;
  CHECK(code_of([&] { s.validate(); }) == Errc::invalid_argument);
  CHECK(code_of([] { frame_stream(stereo(std::vector<double>(4096), std::vector<double>(4096)), 0); }) ==
        Errc::invalid_argument);
}

TEST_CASE("hamming window values") {
  Frame ones{std::vector<double>(kFftSize, 1.0), 0};
  auto w = hamming_window(ones);
  CHECK(w.values[0] == doctest::Approx(0.08).epsilon(1e-12));
  CHECK(w.values[kFftSize - 1] == doctest::Approx(0.08).epsilon(1e-12));
  // N is even so the peak falls between samples N/2-1 and N/2.
  CHECK(w.values[kFftSize / 2] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(hamming_coefficient(3, 7) == doctest::Approx(1.0));
  for (std::size_t t = 0; t < kFftSize; t += 97) {
    CHECK(w.values[t] == doctest::Approx(0.54 - 0.46 * std::cos(kTwoPi * t / 2047.0)));
  }

  Frame zeros{std::vector<double>(kFftSize, 0.0), 0};
  for (double v : hamming_window(zeros).values) CHECK(v == 0.0);
}

TEST_CASE("fft matches a direct DFT") {
  std::mt19937_64 rng(1);
  auto x = random_frame(rng, 256);
  auto fast = fft_spectrum(x);
  auto slow = naive_dft(x);
  double worst = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) worst = std::max(worst, std::abs(fast[k] - slow[k]));
  CHECK(worst < 1e-9);
}

TEST_CASE("fft examples") {
  std::vector<double> cosine(kFftSize);
  for (std::size_t t = 0; t < kFftSize; ++t) cosine[t] = std::cos(kTwoPi * 32.0 * t / kFftSize);
  auto c = fft_spectrum(cosine);
  CHECK(std::abs(c[32]) == doctest::Approx(1024.0).epsilon(1e-12));
  CHECK(std::abs(c[33]) < 1e-9);

  for (auto z : fft_spectrum(std::vector<double>(kFftSize, 0.0))) CHECK(z == Complex{});

  std::vector<double> impulse(kFftSize, 0.0);
  impulse[0] = 1.0;
  for (auto z : fft_spectrum(impulse)) CHECK(std::abs(z) == doctest::Approx(1.0));

  CHECK(code_of([] { fft_spectrum(std::vector<double>(1000, 0.0)); }) == Errc::not_power_of_two);
}

TEST_CASE("fft inverse round trip") {
  std::mt19937_64 rng(2);
  auto x = random_frame(rng);
  Spectrum z(x.begin(), x.end());
  const auto& plan = fft_plan(kFftSize);
  plan.forward(z);
  plan.inverse(z);
  for (std::size_t t = 0; t < x.size(); ++t) CHECK(std::abs(z[t] - x[t]) < 1e-12);
}

TEST_CASE("Parseval on random windowed frames") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto w = hamming_window(Frame{random_frame(rng), 0});
    auto spec = fft_spectrum(w.values);
    double time = 0.0, freq = 0.0;
    for (double v : w.values) time += v * v;
    for (auto z : spec) freq += std::norm(z);
    freq /= static_cast<double>(kFftSize);
    CHECK(std::abs(time - freq) / time < 1e-9);
  }
}

TEST_CASE("fft linearity and conjugate symmetry") {
  std::mt19937_64 rng(4);
  auto f = random_frame(rng);
  auto g = random_frame(rng);
  const double a = 1.7, b = -0.3;
  std::vector<double> mix(kFftSize);
  for (std::size_t t = 0; t < kFftSize; ++t) mix[t] = a * f[t] + b * g[t];
  auto F = fft_spectrum(f), G = fft_spectrum(g), M = fft_spectrum(mix);
  double worst = 0.0, sym = 0.0;
  for (std::size_t k = 0; k < kFftSize; ++k) {
    worst = std::max(worst, std::abs(M[k] - (a * F[k] + b * G[k])));
    sym = std::max(sym, std::abs(F[k] - std::conj(F[(kFftSize - k) % kFftSize])));
  }
  CHECK(worst < 1e-9);
  CHECK(sym < 1e-9);
}

TEST_CASE("binaural_spectra of silence") {
  auto frames = binaural_spectra(stereo(std::vector<double>(44100), std::vector<double>(44100)));
  CHECK(frames.size() == 60);
  for (const auto& fr : frames) {
    CHECK(fr.left.size() == kFftSize);
    for (auto z : fr.left) CHECK(z == Complex{});
  }
  CHECK(frames.back().frame_index == 59);
}

TEST_CASE("binaural_spectra channel relations") {
  std::mt19937_64 rng(5);
  auto x = random_frame(rng, 8000);
  auto same = binaural_spectra(stereo(x, x));
  for (const auto& fr : same) CHECK(fr.left == fr.right);

  // A circular 10-sample delay keeps the windowed content comparable only
  // for a periodic signal, so use a sum of bin-centred cosines.
  std::vector<double> l(6000), r(6000);
  const std::size_t bins[] = {40, 100, 333};
  for (std::size_t t = 0; t < l.size(); ++t) {
    for (auto k : bins) {
      l[t] += std::cos(kTwoPi * k * static_cast<double>(t) / kFftSize);
      r[t] += std::cos(kTwoPi * k * (static_cast<double>(t) - 10.0) / kFftSize);
    }
  }
  auto frames = binaural_spectra(stereo(l, r));
  for (auto k : bins) {
    const double measured = std::arg(frames[0].left[k] / frames[0].right[k]);
    const double expected = std::remainder(kTwoPi * k * 10.0 / kFftSize, kTwoPi);
    CHECK(measured == doctest::Approx(expected).epsilon(1e-6));
  }

  auto again = binaural_spectra(stereo(x, x));
  CHECK(again.size() == same.size());
  for (std::size_t i = 0; i < same.size(); ++i) CHECK(again[i].left == same[i].left);
}
