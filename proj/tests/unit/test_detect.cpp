#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "binaural/corpus.hpp"
#include "binaural/detect.hpp"
#include "binaural/error.hpp"
#include "binaural/io.hpp"
#include "binaural/mel.hpp"
#include "binaural/melcnn.hpp"

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

const SoundCorpus& small_corpus() {
  static const SoundCorpus corpus = [] {
    BackgroundNoise noise(NoiseKind::white, shared_set(), shared_renderer(), default_grid());
    CorpusConfig c;
    c.clips_per_label = 10;
    c.mixed_clips = 6;
    c.seed = 51;
    return synth_corpus(c, shared_renderer(), noise);
  }();
  return corpus;
}

MelTrainConfig small_train() {
  MelTrainConfig c;
  c.epochs = 3;
  c.seed = 52;
  return c;
}

std::vector<double> tone(double hz, std::size_t n, double amp = 1.0) {
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) x[t] = amp * std::sin(kTwoPi * hz * static_cast<double>(t) / kSampleRate);
  return x;
}

Spectrum spectrum_of(const std::vector<double>& x, std::size_t start) {
  Frame f{std::vector<double>(x.begin() + static_cast<std::ptrdiff_t>(start),
                              x.begin() + static_cast<std::ptrdiff_t>(start + kFftSize)),
          start};
  return fft_spectrum(hamming_window(f).values);
}

std::vector<Spectrum> window_of(const std::vector<double>& x) {
  std::vector<Spectrum> frames;
  for (std::size_t i = 0; i < kMelFrames; ++i) frames.push_back(spectrum_of(x, i * kHop));
  return frames;
}

SoundClip mono_clip(const std::vector<double>& x, std::size_t label, const std::string& name) {
  SoundClip c;
  c.stream.left = x;
  c.stream.right = x;
  c.labels = {label};
  c.name = name;
  return c;
}

std::vector<std::size_t> all_bins() {
  std::vector<std::size_t> b;
  for (std::size_t k = 1; k < kFftSize / 2; ++k) b.push_back(k);
  return b;
}

}  // namespace

TEST_CASE("mel scale") {
  CHECK(hz_to_mel(0.0) == 0.0);
  CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
  CHECK(hz_to_mel(700.0) == doctest::Approx(781.2).epsilon(1e-4));
  for (double hz : {10.0, 440.0, 9000.0}) CHECK(mel_to_hz(hz_to_mel(hz)) == doctest::Approx(hz));
}

TEST_CASE("mel filterbank shape") {
  const auto& fb = default_mel_filterbank();
  CHECK(fb.bands() == 128);
  CHECK(fb.matrix().cols() == kFftSize / 2 + 1);
  CHECK(fb.matrix().minCoeff() >= 0.0);
  for (std::size_t m = 0; m < fb.bands(); ++m) {
    CHECK(fb.matrix().row(static_cast<Eigen::Index>(m)).sum() > 0.0);
    CHECK(fb.response(m, fb.center_hz(m)) == doctest::Approx(1.0));
    if (m > 0) {
      CHECK(fb.center_hz(m) > fb.center_hz(m - 1));
      CHECK(fb.response(m, fb.center_hz(m - 1)) == 0.0);
    }
    if (m + 1 < fb.bands()) CHECK(fb.response(m, fb.center_hz(m + 1)) == 0.0);
  }
  // Peaks are equally spaced in mel.
  const double step = hz_to_mel(fb.center_hz(1)) - hz_to_mel(fb.center_hz(0));
  CHECK(hz_to_mel(fb.center_hz(100)) - hz_to_mel(fb.center_hz(99)) == doctest::Approx(step));
  // Every bin strictly between the band edges is covered.
  for (Eigen::Index b = 1; b < fb.matrix().cols() - 1; ++b) CHECK(fb.matrix().col(b).sum() > 0.0);
  CHECK(code_of([] { MelFilterbank(1); }) == Errc::invalid_argument);
}

TEST_CASE("mel spectrogram normalization") {
  std::vector<Spectrum> silent(kMelFrames, Spectrum(kFftSize, Complex{}));
  auto s = mel_spectrogram(silent);
  CHECK(s.values.rows() == 128);
  CHECK(s.values.cols() == 25);
  CHECK(s.values.isZero(0.0));

  const std::size_t n = kMelWindowSamples;
  auto x = tone(1000.0, n, 0.3);
  auto m1 = mel_spectrogram(window_of(x));
  CHECK(m1.values.maxCoeff() == doctest::Approx(1.0));
  CHECK(m1.values.minCoeff() >= 0.0);
  std::vector<double> x2(x);
  for (auto& v : x2) v *= 2.0;
  auto m2 = mel_spectrogram(window_of(x2));
  CHECK(m2.values.maxCoeff() == doctest::Approx(1.0));
  Eigen::Index r1, c1, r2, c2;
  m1.values.maxCoeff(&r1, &c1);
  m2.values.maxCoeff(&r2, &c2);
  CHECK(r1 == r2);

  // The tone sits in the band whose triangle responds most at 1 kHz.
  const auto& fb = default_mel_filterbank();
  std::size_t expected = 0;
  for (std::size_t m = 1; m < fb.bands(); ++m) {
    if (fb.response(m, 1000.0) > fb.response(expected, 1000.0)) expected = m;
  }
  for (Eigen::Index c = 0; c < 25; ++c) {
    Eigen::Index band;
    m1.values.col(c).maxCoeff(&band);
    CHECK(static_cast<std::size_t>(band) == expected);
  }

  std::vector<Spectrum> short_window(24, Spectrum(kFftSize, Complex{}));
  CHECK(code_of([&] { mel_spectrogram(short_window); }) == Errc::shape_mismatch);
}

TEST_CASE("fusion") {
  std::vector<double> pl{0.9, 0.2, 0.0}, pr{0.3, 0.6, 1.0};
  auto eq = fuse_binaural(pl, pr, 2.0, 2.0);
  CHECK(eq[0] == doctest::Approx(0.6));
  CHECK(eq[1] == doctest::Approx(0.4));
  CHECK(eq[2] == doctest::Approx(0.5));
  CHECK(fuse_binaural(pl, pr, 5.0, 0.0) == pl);
  CHECK(fuse_binaural(pl, pr, 3.0, 1.0)[0] == 0.75);
  CHECK(code_of([&] { fuse_binaural(pl, pr, 0.0, 0.0); }) == Errc::invalid_argument);
  CHECK(code_of([&] { fuse_binaural(pl, pr, -1.0, 2.0); }) == Errc::invalid_argument);

  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a{u(rng)}, b{u(rng)};
    const double p = fuse_binaural(a, b, u(rng), u(rng) + 1e-3)[0];
    CHECK(p >= std::min(a[0], b[0]) - 1e-15);
    CHECK(p <= std::max(a[0], b[0]) + 1e-15);
  }
}

TEST_CASE("melcnn forward") {
  MelCnn<double> zero(6);
  Eigen::MatrixXd mel = Eigen::MatrixXd::Random(128, 25).cwiseAbs();
  auto y = zero.forward(mel);
  CHECK(y.size() == 6);
  for (Eigen::Index i = 0; i < 6; ++i) CHECK(y(i) == 0.5);
  CHECK(zero.flat_size() == 29 * 3 * 32);

  MelCnn<double> net(6);
  Rng rng(54);
  net.init_glorot(rng);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXd in = 50.0 * Eigen::MatrixXd::Random(128, 25);
    auto p = net.forward(in);
    CHECK(p.minCoeff() > 0.0);
    CHECK(p.maxCoeff() < 1.0);
    CHECK(net.forward(in) == p);
  }
  MelCnn<double> again(6);
  Rng rng2(54);
  again.init_glorot(rng2);
  CHECK(again == net);

  CHECK(code_of([&] { net.forward(Eigen::MatrixXd::Zero(128, 24)); }) == Errc::shape_mismatch);
}

TEST_CASE("melcnn gradient against central differences") {
  MelCnn<double> net(4);
  Rng rng(55);
  net.init_glorot(rng);
  Eigen::MatrixXd mel = Eigen::MatrixXd::Random(128, 25).cwiseAbs();
  Eigen::VectorXd target(4);
  target << 1, 0, 1, 0;
  CHECK(melcnn_gradient_check(net, mel, target, rng) < 1e-3);

  // Loss is the mean per-label cross-entropy.
  auto p = net.forward(mel);
  double bce = 0.0;
  for (Eigen::Index i = 0; i < 4; ++i) bce -= target(i) * std::log(p(i)) + (1 - target(i)) * std::log(1 - p(i));
  CHECK(net.loss(mel, target) == doctest::Approx(bce / 4.0));
}

TEST_CASE("characteristic frequencies") {
  const std::size_t n = kMelWindowSamples;
  SoundCorpus corpus;
  corpus.labels = {"tone", "noise", "pair"};
  std::mt19937_64 rng(56);
  std::normal_distribution<double> g(0.0, 1.0);
  const double tone_hz = 46.0 * kSampleRate / kFftSize;  // bin-centred, ~990 Hz
  for (int i = 0; i < 10; ++i) {
    corpus.clips.push_back(mono_clip(tone(tone_hz, n), 0, "t" + std::to_string(i)));
    std::vector<double> w(n);
    for (auto& v : w) v = g(rng);
    corpus.clips.push_back(mono_clip(w, 1, "n" + std::to_string(i)));
    auto a = tone(23.0 * kSampleRate / kFftSize, n);
    auto b = tone(93.0 * kSampleRate / kFftSize, n);
    for (std::size_t t = 0; t < n; ++t) a[t] += b[t];
    corpus.clips.push_back(mono_clip(a, 2, "p" + std::to_string(i)));
  }
  const auto bins = all_bins();

  auto t = characteristic_frequencies(corpus, 0, bins);
  CHECK(t == std::vector<std::size_t>{45, 46, 47});

  auto w = characteristic_frequencies(corpus, 1, bins);
  CHECK(w.size() > bins.size() * 9 / 10);

  auto p = characteristic_frequencies(corpus, 2, bins);
  CHECK(p == std::vector<std::size_t>{22, 23, 24, 92, 93, 94});

  // Restricted to the trained bins the tone keeps the nearest one.
  auto trained = default_trained_bins();
  CHECK(characteristic_frequencies(corpus, 0, trained) == std::vector<std::size_t>{45});
  // Nothing qualifies among far-away candidates: fall back to the 8 largest.
  std::vector<std::size_t> far{300, 400, 500, 600, 700, 800, 900, 1000, 1010, 1020};
  CHECK(characteristic_frequencies(corpus, 0, far).size() == 8);
}

TEST_CASE("synthetic sound families") {
  std::set<std::string> names;
  for (auto family : all_sound_families()) {
    names.insert(to_string(family));
    CHECK(sound_family_from_string(to_string(family)) == family);
    Rng a(57), b(57);
    auto x = synth_sound(family, a);
    CHECK(x.size() == kMelWindowSamples);
    CHECK(x == synth_sound(family, b));
    double peak = 0.0;
    for (double v : x) peak = std::max(peak, std::abs(v));
    CHECK(peak == doctest::Approx(1.0));
  }
  CHECK(names.size() == kSoundFamilyCount);
  CHECK(code_of([] { sound_family_from_string("siren"); }) == Errc::invalid_argument);
}

TEST_CASE("corpus layout") {
  const auto& corpus = small_corpus();
  CHECK(corpus.labels.size() == 6);
  CHECK(corpus.clips.size() == 66);
  for (std::size_t l = 0; l < 6; ++l) CHECK(corpus.clips_with_only(l).size() == 10);
  for (std::size_t i = 60; i < 66; ++i) {
    CHECK(corpus.clips[i].labels.size() == 2);
    CHECK(corpus.clips[i].labels[0] < corpus.clips[i].labels[1]);
  }

  const auto dir = std::filesystem::temp_directory_path() / "binaural_test_corpus";
  std::filesystem::remove_all(dir);
  save_corpus(corpus, dir);
  auto loaded = load_corpus(dir);
  CHECK(loaded.labels == corpus.labels);
  REQUIRE(loaded.clips.size() == corpus.clips.size());
  std::set<std::vector<std::size_t>> a, b;
  for (const auto& c : corpus.clips) a.insert(c.labels);
  for (const auto& c : loaded.clips) b.insert(c.labels);
  CHECK(a == b);
  std::filesystem::remove_all(dir);
}

TEST_CASE("detector training, persistence and detection") {
  const auto& corpus = small_corpus();
  std::vector<double> losses;
  auto model = train_melcnn(corpus, small_train(), [&](const MelEpochLog& log) { losses.push_back(log.loss); });
  REQUIRE(losses.size() == 3);
  CHECK(losses.back() < losses.front());
  CHECK(model.labels == corpus.labels);
  for (const auto& bins : model.characteristic_bins) CHECK_FALSE(bins.empty());
  CHECK(train_melcnn(corpus, small_train()) == model);

  const auto path = std::filesystem::temp_directory_path() / "binaural_test.melc";
  save_melcnn(model, path);
  CHECK(load_melcnn(path) == model);
  auto bytes = io::read_file(path);
  bytes.resize(bytes.size() - 3);
  io::write_file_atomic(path, bytes);
  CHECK(code_of([&] { load_melcnn(path); }) == Errc::format);
  std::filesystem::remove(path);

  auto probs = classify_clip(model, corpus.clips.front().stream);
  CHECK(probs.size() == 6);
  for (double p : probs) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }

  PcmStream silence;
  silence.left.assign(3 * kMelWindowSamples, 0.0);
  silence.right = silence.left;
  CHECK(detect(silence, model).empty());

  // Everything counts as detected with a zero threshold: one event per label
  // spanning the whole stream.
  DetectOptions all;
  all.threshold = 0.0;
  auto events = detect(corpus.clips.front().stream, model, all);
  CHECK(events.size() == 6);
  for (const auto& e : events) {
    CHECK(e.first_frame == 0);
    CHECK(e.end_frame == kMelFrames);
    CHECK(e.t_start == 0.0);
    CHECK(e.t_end == doctest::Approx(static_cast<double>(kMelWindowSamples) / kSampleRate));
    CHECK(e.bins == model.characteristic_bins[e.label_index]);
  }

  std::ostringstream out;
  write_events_jsonl(out, events);
  std::istringstream lines(out.str());
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j.contains("label"));
    CHECK(j.contains("p"));
    CHECK(j.contains("t_start"));
    CHECK(j.contains("t_end"));
    CHECK(j["bins"].is_array());
    CHECK_FALSE(j.contains("direction"));
    ++count;
  }
  CHECK(count == 6);

  SoundCorpus one_label = corpus;
  one_label.labels.resize(1);
  one_label.clips.resize(10);
  CHECK(code_of([&] { train_melcnn(one_label, small_train()); }) == Errc::invalid_argument);
}
