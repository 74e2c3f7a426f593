#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "binaural/error.hpp"
#include "binaural/eval.hpp"
#include "binaural/features.hpp"
#include "binaural/io.hpp"
#include "binaural/render.hpp"
#include "binaural/ssde.hpp"

using namespace binaural;

namespace {

Errc code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return Errc::io;
}

const HrtfSet& shared_set() {
  static const HrtfSet set = synthesize_hrtf_set(default_grid());
  return set;
}

const Renderer& shared_renderer() {
  static const Renderer r(shared_set());
  return r;
}

// Amplitude of the component at `hz` by projection onto sin and cos; exact
// when the signal holds a whole number of its periods.
double amplitude_at(const std::vector<double>& x, double hz) {
  double s = 0.0, c = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double a = kTwoPi * hz * static_cast<double>(t) / kSampleRate;
    s += x[t] * std::sin(a);
    c += x[t] * std::cos(a);
  }
  return 2.0 * std::hypot(s, c) / static_cast<double>(x.size());
}

double rms(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return std::sqrt(e / static_cast<double>(x.size()));
}

TrialResult trial(std::size_t id, std::size_t truth, std::size_t est) {
  const auto& grid = default_grid();
  TrialResult t;
  t.trial_id = id;
  t.condition = "white_noise";
  t.method = "ssde";
  t.true_id = truth;
  t.estimated_id = est;
  t.error_deg = angle_between(grid[truth], grid[est]);
  t.mirror_error_deg = std::min(t.error_deg, angle_between(front_back_mirror(grid[truth]), grid[est]));
  return t;
}

std::size_t antipode(std::size_t k) {
  const auto& d = default_grid()[k];
  return default_grid().nearest(Direction::normalized(-d.x(), -d.y(), -d.z()));
}

}  // namespace

TEST_CASE("wave synthesis spectra") {
  Rng rng(41);
  auto sine = gen_wave({WaveKind::sine, 500.0, 1.0, 1.0}, rng);
  CHECK(sine.size() == 44100);
  CHECK(amplitude_at(sine, 500.0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(amplitude_at(sine, 1500.0) < 1e-9);

  auto square = gen_wave({WaveKind::square, 500.0, 1.0, 1.0}, rng);
  const double s1 = amplitude_at(square, 500.0);
  CHECK(amplitude_at(square, 1500.0) / s1 == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
  CHECK(amplitude_at(square, 2500.0) / s1 == doctest::Approx(1.0 / 5.0).epsilon(1e-6));
  CHECK(amplitude_at(square, 1000.0) < 1e-9);

  auto triangle = gen_wave({WaveKind::triangle, 500.0, 1.0, 1.0}, rng);
  const double t1 = amplitude_at(triangle, 500.0);
  CHECK(amplitude_at(triangle, 1500.0) / t1 == doctest::Approx(1.0 / 9.0).epsilon(1e-6));
  CHECK(amplitude_at(triangle, 2500.0) / t1 == doctest::Approx(1.0 / 25.0).epsilon(1e-6));

  auto saw = gen_wave({WaveKind::sawtooth, 1000.0, 1.0, 1.0}, rng);
  const double w1 = amplitude_at(saw, 1000.0);
  CHECK(amplitude_at(saw, 2000.0) / w1 == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(amplitude_at(saw, 21000.0) / w1 == doctest::Approx(1.0 / 21.0).epsilon(1e-6));
  CHECK(amplitude_at(saw, 22000.0) / w1 == doctest::Approx(1.0 / 22.0).epsilon(1e-6));

  CHECK(code_of([&] { gen_wave({WaveKind::sine, 30000.0, 1.0, 1.0}, rng); }) == Errc::invalid_argument);
}

TEST_CASE("white noise has a flat expected spectrum") {
  std::vector<double> mean(kFftSize / 2 + 1, 0.0);
  for (int r = 0; r < 100; ++r) {
    Rng rng(derive_seed(42, static_cast<std::uint64_t>(r)));
    auto x = gen_wave({WaveKind::white_noise, 0.0, kFftSize / double(kSampleRate), 1.0}, rng);
    REQUIRE(x.size() == kFftSize);
    auto spec = fft_spectrum(x);
    for (std::size_t b = 0; b < mean.size(); ++b) mean[b] += std::norm(spec[b]) / 100.0;
  }
  // Expected |X|^2 is N for unit-variance samples. Average bands of 64 bins
  // so each estimate rests on 6400 draws.
  for (std::size_t start = 1; start + 64 < mean.size(); start += 64) {
    double band = 0.0;
    for (std::size_t b = start; b < start + 64; ++b) band += mean[b];
    CHECK(band / 64.0 / kFftSize == doctest::Approx(1.0).epsilon(0.08));
  }
}

TEST_CASE("render symmetry and head shadow") {
  Rng rng(43);
  auto noise = gen_wave({WaveKind::white_noise, 0.0, 0.3, 0.1}, rng);
  const auto& grid = default_grid();
  const std::size_t front = grid.nearest(Direction::normalized(1, 0, 0));
  auto s = shared_renderer().render(noise, front);
  double diff = 0.0;
  for (std::size_t t = 0; t < s.size(); ++t) diff = std::max(diff, std::abs(s.left[t] - s.right[t]));
  CHECK(diff < 1e-12);

  // A 300 Hz tone from the left is louder in the left ear.
  auto low = gen_wave({WaveKind::sine, 300.0, 0.3, 1.0}, rng);
  auto side = shared_renderer().render(low, grid.nearest(Direction::from_angles(90.0, 0.0)));
  CHECK(rms(side.right) < rms(side.left));

  CHECK(code_of([&] { shared_renderer().render(low, 326); }) == Errc::invalid_argument);
}

TEST_CASE("rendered features match the training features") {
  const std::size_t h = 200;
  for (std::size_t bin : {45u, 93u, 301u}) {
    std::vector<double> mono(12000);
    for (std::size_t t = 0; t < mono.size(); ++t) {
      mono[t] = std::cos(kTwoPi * bin * static_cast<double>(t) / kFftSize + 0.4);
    }
    auto stream = shared_renderer().render(mono, h);
    auto frames = binaural_spectra(stream);
    // Frames whose N-tap filter support lies wholly inside the signal.
    for (std::size_t f = 0; f < frames.size(); ++f) {
      const std::size_t start = f * kHop;
      if (start < kFftSize / 2 || start + kFftSize + kFftSize / 2 > mono.size()) continue;
      Frame source{std::vector<double>(mono.begin() + static_cast<std::ptrdiff_t>(start),
                                       mono.begin() + static_cast<std::ptrdiff_t>(start + kFftSize)),
                   start};
      auto s = fft_spectrum(hamming_window(source).values);
      auto rendered = feature_vector(frames[f], bin).vector();
      auto expected = virtual_source_feature(shared_set(), h, bin, s[bin]).vector();
      for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(rendered[i] - expected[i]) < 1e-6);
    }
  }
}

TEST_CASE("background noise levels") {
  const auto& grid = default_grid();
  for (auto kind : {NoiseKind::white, NoiseKind::diffuse, NoiseKind::ego}) {
    BackgroundNoise noise(kind, shared_set(), shared_renderer(), grid);
    Rng rng(44);
    auto [l, r] = noise.generate(88200, 0.04, rng);
    CHECK(l.size() == 88200);
    CHECK(rms(l) * rms(l) == doctest::Approx(0.04).epsilon(0.1));
    CHECK(rms(r) * rms(r) == doctest::Approx(0.04).epsilon(0.1));
  }
  BackgroundNoise ego(NoiseKind::ego, shared_set(), shared_renderer(), grid);
  CHECK(ego.ego_direction_id() == grid.nearest(default_ego_noise_direction()));
  CHECK(noise_kind_from_string("ego") == NoiseKind::ego);
  CHECK(code_of([] { noise_kind_from_string("pink"); }) == Errc::invalid_argument);

  Rng rng(45);
  PcmStream s;
  s.left.assign(20000, 0.5);
  s.right.assign(20000, -0.5);
  BackgroundNoise white(NoiseKind::white, shared_set(), shared_renderer(), grid);
  CHECK(add_noise(s, 20.0, white, rng) == doctest::Approx(0.25 / 100.0));
}

TEST_CASE("angle error statistics") {
  std::vector<TrialResult> exact{trial(0, 3, 3), trial(1, 90, 90)};
  CHECK(mean_angle_error(exact) == 0.0);
  std::vector<TrialResult> anti{trial(0, 3, antipode(3)), trial(1, 90, antipode(90))};
  CHECK(mean_angle_error(anti) == doctest::Approx(180.0).epsilon(0.05));

  TrialResult a = trial(0, 0, 0), b = trial(1, 0, 0);
  b.error_deg = 90.0;
  std::vector<TrialResult> mixed{a, b};
  CHECK(mean_angle_error(mixed) == doctest::Approx(45.0));
  CHECK(code_of([] { mean_angle_error({}); }) == Errc::invalid_argument);
}

TEST_CASE("discrimination statistics") {
  const auto& grid = default_grid();
  std::vector<TrialResult> perfect, flipped;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    perfect.push_back(trial(k, k, k));
    const auto& d = grid[k];
    flipped.push_back(trial(k, k, grid.nearest(Direction::normalized(d.x(), -d.y(), -d.z()))));
  }
  for (auto plane : {Plane::horizontal, Plane::median}) {
    CHECK(discrimination_stats(perfect, grid, plane) == 1.0);
    CHECK(discrimination_stats(flipped, grid, plane) == 0.0);
  }
  CHECK(qualifies_for(Direction::from_angles(60.0, 2.0), Plane::horizontal));
  CHECK_FALSE(qualifies_for(Direction::from_angles(3.0, 2.0), Plane::horizontal));
  CHECK(qualifies_for(Direction::from_angles(178.0, 40.0), Plane::median));
  CHECK_FALSE(qualifies_for(Direction::from_angles(0.0, 4.0), Plane::median));

  std::vector<TrialResult> off{trial(0, 0, 0)};
  CHECK(code_of([&] { discrimination_stats(off, grid, Plane::median); }) == Errc::invalid_argument);
}

TEST_CASE("trial tables round trip and reports are pure") {
  std::vector<TrialResult> rows{trial(0, 5, 9), trial(1, 17, 200), trial(2, 300, 300)};
  rows[1].method = "music";
  rows[2].valid = false;
  std::stringstream csv;
  write_trials_csv(csv, rows);
  auto back = read_trials_csv(csv);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].estimated_id == rows[i].estimated_id);
    CHECK(back[i].error_deg == rows[i].error_deg);
    CHECK(back[i].mirror_error_deg == rows[i].mirror_error_deg);
    CHECK(back[i].valid == rows[i].valid);
  }
  CHECK(render_report(back, default_grid()) == render_report(rows, default_grid()));

  std::stringstream bad("trial,x\n");
  CHECK(code_of([&] { read_trials_csv(bad); }) == Errc::format);
}

TEST_CASE("simulation runs are reproducible") {
  SsdeConfig c;
  c.bins = {45, 93};
  c.hidden = 8;
  c.examples_per_bin = 64;
  c.epochs = 1;
  c.seed = 2;
  auto model = train_ssde(shared_set(), default_grid(), c);

  SimulationConfig sim;
  sim.conditions = {WaveSpec{WaveKind::sine, 1000.0, 0.3, 1.0}, WaveSpec{WaveKind::white_noise, 0.0, 0.3, 1.0}};
  sim.directions = {0, 50, 100, 150};
  sim.seed = 9;
  sim.threads = 1;
  auto a = run_simulation(&model, shared_set(), default_grid(), sim);
  CHECK(a.size() == 2 * 4 * 2);
  sim.threads = 3;
  auto b = run_simulation(&model, shared_set(), default_grid(), sim);
  std::stringstream ca, cb;
  write_trials_csv(ca, a);
  write_trials_csv(cb, b);
  CHECK(ca.str() == cb.str());
  for (const auto& t : a) {
    CHECK(t.error_deg >= 0.0);
    CHECK(t.error_deg <= 180.0);
    CHECK(t.mirror_error_deg <= t.error_deg);
  }

  const auto dir = std::filesystem::temp_directory_path() / "binaural_test_eval";
  write_evaluation(dir, a, default_grid());
  const auto first = io::file_hash(dir / "summary.csv");
  write_evaluation(dir, b, default_grid());
  CHECK(io::file_hash(dir / "summary.csv") == first);
  for (const char* name : {"trials.csv", "summary.csv", "discrimination.csv", "mean_error.dat"}) {
    CHECK(std::filesystem::exists(dir / name));
  }
  std::filesystem::remove_all(dir);

  sim.run_ssde = true;
  CHECK(code_of([&] { run_simulation(nullptr, shared_set(), default_grid(), sim); }) == Errc::invalid_argument);
}

TEST_CASE("random-weight estimator is at chance") {
  // Untrained nets: the estimate ignores the input, so the error averages
  // to roughly a right angle over the sphere.
  SsdeConfig c;
  c.bins = default_trained_bins();
  c.hidden = 16;
  c.epochs = 0;
  c.examples_per_bin = 32;
  c.seed = 3;
  auto model = train_ssde(shared_set(), default_grid(), c);

  SimulationConfig sim;
  sim.conditions = {WaveSpec{WaveKind::white_noise, 0.0, 0.3, 1.0}};
  sim.run_music = false;
  sim.seed = 4;
  auto rows = run_simulation(&model, shared_set(), default_grid(), sim);
  CHECK(rows.size() == 326);
  const double mean = mean_angle_error(rows);
  CHECK(mean >= 80.0);
  CHECK(mean <= 100.0);
}
