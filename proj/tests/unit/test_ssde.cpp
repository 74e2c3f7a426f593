#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "binaural/error.hpp"
#include "binaural/frontend.hpp"
#include "binaural/io.hpp"
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

SsdeConfig small_config() {
  SsdeConfig c;
  c.bins = {45, 93, 141};
  c.hidden = 16;
  c.examples_per_bin = 256;
  c.epochs = 4;
  c.seed = 17;
  c.threads = 1;
  return c;
}

const SsdeModel& small_model() {
  static const SsdeModel model = train_ssde(shared_set(), default_grid(), small_config());
  return model;
}

// A steady tone mixture rendered analytically: every frame of the stream
// carries the HRTF pair of direction h at each listed bin.
std::vector<BinauralFrame> synthetic_frames(std::size_t h, std::span<const std::size_t> bins,
                                            std::size_t count, double gain) {
  std::vector<BinauralFrame> frames(count);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  for (std::size_t f = 0; f < count; ++f) {
    frames[f].left.assign(kFftSize, Complex{});
    frames[f].right.assign(kFftSize, Complex{});
    frames[f].frame_index = f;
    for (auto b : bins) {
      const auto p = shared_set().normalized(h, b);
      const Complex s = std::polar(gain, phase(rng));
      frames[f].left[b] = p.left * s;
      frames[f].right[b] = p.right * s;
    }
  }
  return frames;
}

}  // namespace

TEST_CASE("gaussian target examples") {
  const auto& grid = default_grid();
  const double sigma = deg_to_rad(15.0);
  const std::size_t h = 40;
  auto t = gaussian_target(grid, h, sigma);
  REQUIRE(t.size() == 326);
  CHECK(t[h] == 1.0);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double d = deg_to_rad(angle_between(grid[k], grid[h]));
    CHECK(t[k] == doctest::Approx(std::exp(-d * d / (2 * sigma * sigma))));
    CHECK(t[k] <= t[h]);
    CHECK(t[k] >= 0.0);
  }
  // One sigma away, on an arbitrary direction, via the closed form.
  CHECK(std::exp(-0.5) == doctest::Approx(0.6065).epsilon(1e-4));
  const double antipodal = std::exp(-kPi * kPi / (2 * sigma * sigma));
  CHECK(antipodal < 1e-30);

  std::size_t far = 0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (angle_between(grid[k], grid[h]) > angle_between(grid[far], grid[h])) far = k;
  }
  CHECK(t[far] < 1e-30);
  CHECK(code_of([&] { gaussian_target(grid, h, 0.0); }) == Errc::invalid_argument);
}

TEST_CASE("gaussian target argmax and equivariance") {
  const auto& grid = default_grid();
  const double sigma = deg_to_rad(15.0);
  for (std::size_t h = 0; h < grid.size(); h += 7) {
    auto t = gaussian_target(grid, h, sigma);
    CHECK(estimate_direction(t).direction == h);
  }
  // Depends on the pair only through their angle: swapping roles is symmetric.
  auto a = gaussian_target(grid, 10, sigma);
  auto b = gaussian_target(grid, 200, sigma);
  CHECK(a[200] == doctest::Approx(b[10]));
}

TEST_CASE("training examples") {
  const auto& set = shared_set();
  const auto& grid = default_grid();
  const std::size_t h = 77, bin = 93;

  // Noise-free unit source reproduces the normalized HRTF pair.
  auto clean = virtual_source_feature(set, h, bin, {1.0, 0.0});
  const auto p = set.normalized(h, bin);
  CHECK(clean.ild == doctest::Approx(std::log(std::abs(p.left)) - std::log(std::abs(p.right))));
  CHECK(clean.ipd[0] == doctest::Approx(std::cos(std::arg(p.left))));
  CHECK(clean.ipd[3] == doctest::Approx(std::sin(std::arg(p.right))));

  SsdeConfig quiet;
  quiet.noise = false;
  Rng rng(5);
  auto ex = synth_training_example(set, grid, h, bin, rng, quiet);
  CHECK(ex.direction == h);
  CHECK(ex.bin == bin);
  CHECK(ex.feature.ild == doctest::Approx(clean.ild));
  // The source phase rotates both ears equally.
  const double dl = std::atan2(ex.feature.ipd[1], ex.feature.ipd[0]);
  const double dr = std::atan2(ex.feature.ipd[3], ex.feature.ipd[2]);
  CHECK(std::remainder(dl - dr - std::arg(p.left / p.right), kTwoPi) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(estimate_direction(ex.target).direction == h);

  SsdeConfig noisy;
  Rng r1(6), r2(7);
  auto e1 = synth_training_example(set, grid, h, bin, r1, noisy);
  auto e2 = synth_training_example(set, grid, h, bin, r2, noisy);
  CHECK(e1.target == e2.target);
  CHECK(e1.feature.vector() != e2.feature.vector());
}

TEST_CASE("noise-dominated examples lose the interaural level cue") {
  const auto& set = shared_set();
  const auto& grid = default_grid();
  const std::size_t h = grid.nearest(Direction::from_angles(90.0, 0.0));
  const std::size_t bin = 372;
  const double clean = std::abs(virtual_source_feature(set, h, bin, {1.0, 0.0}).ild);

  SsdeConfig drowned;
  drowned.snr_min_db = -60.0;
  drowned.snr_max_db = -60.0;
  Rng rng(8);
  double mean = 0.0;
  for (int i = 0; i < 1000; ++i) mean += synth_training_example(set, grid, h, bin, rng, drowned).feature.ild;
  mean /= 1000.0;
  // Independent equal-power ear noise gives ILD centred on zero.
  CHECK(clean > 1.0);
  CHECK(std::abs(mean) < 0.2);
}

TEST_CASE("dense network forward") {
  DenseNet<double> zero(ssde_layer_sizes(500, 326));
  Eigen::MatrixXd in = Eigen::MatrixXd::Random(5, 3);
  auto y = zero.forward(in);
  CHECK(y.rows() == 326);
  for (Eigen::Index i = 0; i < y.size(); ++i) CHECK(y.data()[i] == 0.5);

  DenseNet<double> net({5, 20, 20, 326});
  Rng rng(11);
  net.init_glorot(rng);
  Eigen::MatrixXd big = 1e3 * Eigen::MatrixXd::Random(5, 50);
  auto out = net.forward(big);
  CHECK(out.minCoeff() > 0.0);
  CHECK(out.maxCoeff() < 1.0);
  CHECK(net.forward(big) == out);

  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(5, 1);
  bad(2, 0) = std::nan("");
  CHECK(code_of([&] { net.forward(bad); }) == Errc::invalid_argument);
  CHECK(code_of([&] { net.forward(Eigen::MatrixXd::Zero(4, 1)); }) == Errc::shape_mismatch);
}

TEST_CASE("mse gradient against central differences") {
  DenseNet<double> net({5, 12, 12, 326});
  Rng rng(12);
  net.init_glorot(rng);
  std::vector<double> input{0.3, -0.2, 0.9, 0.1, -0.7};
  auto target = gaussian_target(default_grid(), 50, deg_to_rad(15.0));
  CHECK(gradient_check(net, input, target, rng) < 1e-4);
}

TEST_CASE("gradient conventions") {
  DenseNet<double> net({5, 8, 8, 326});
  Rng rng(13);
  net.init_glorot(rng);
  DenseNet<double>::Gradient g;
  net.mse_gradient(Eigen::MatrixXd::Zero(5, 1), Eigen::MatrixXd::Zero(326, 1), g);
  CHECK(g.weights[0].isZero(0.0));

  Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 1);
  Eigen::MatrixXd t = Eigen::MatrixXd::Random(326, 1).cwiseAbs();
  DenseNet<double>::Gradient one, two;
  net.mse_gradient(x, t, one);
  Eigen::MatrixXd x2(5, 2), t2(326, 2);
  x2 << x, x;
  t2 << t, t;
  net.mse_gradient(x2, t2, two);
  // Sum over the batch, not mean: each entry doubles up to FMA rounding.
  for (std::size_t l = 0; l < net.layers(); ++l) {
    for (Eigen::Index i = 0; i < one.weights[l].size(); ++i) {
      const double w = one.weights[l].data()[i];
      CHECK(std::abs(two.weights[l].data()[i] - 2.0 * w) <= 1e-13 * std::abs(w) + 1e-300);
    }
    for (Eigen::Index i = 0; i < one.biases[l].size(); ++i) {
      const double b = one.biases[l].data()[i];
      CHECK(std::abs(two.biases[l].data()[i] - 2.0 * b) <= 1e-13 * std::abs(b) + 1e-300);
    }
  }
}

TEST_CASE("training lowers held-out loss and is deterministic") {
  auto config = small_config();
  std::vector<BinTrainingLog> logs;
  auto model = train_ssde(shared_set(), default_grid(), config, &logs);
  REQUIRE(logs.size() == 3);
  for (const auto& log : logs) CHECK(log.final_loss < log.initial_loss);
  CHECK(model == small_model());

  config.threads = 3;
  CHECK(train_ssde(shared_set(), default_grid(), config) == model);

  config.seed = 18;
  config.threads = 1;
  CHECK_FALSE(train_ssde(shared_set(), default_grid(), config) == model);
}

TEST_CASE("model output range and nearest net") {
  const auto& model = small_model();
  CHECK(model.nets.size() == 3);
  auto out = model.forward(1, virtual_source_feature(shared_set(), 5, 93, {1.0, 0.0}));
  CHECK(out.size() == 326);
  for (double v : out) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK(model.nearest_net(45) == 0u);
  CHECK(model.nearest_net(47) == 0u);
  CHECK(model.nearest_net(70) == 1u);
  CHECK(model.nearest_net(69) == 0u);
  CHECK(model.nearest_net(166) == std::nullopt);
  CHECK(model.nearest_net(140) == 2u);

  auto defaults = default_trained_bins();
  CHECK(defaults.size() == 139);
  CHECK(defaults.front() == 5);
  CHECK(defaults.back() == 557);
}

TEST_CASE("aggregate and estimate_direction") {
  std::vector<ExistenceMap> maps{{0.1, 0.9, 0.2}, {0.5, 0.1, 0.7}};
  CHECK(aggregate(maps, {true, false}) == maps[0]);
  auto both = aggregate(maps, {true, true});
  CHECK(both[0] == doctest::Approx(0.6));
  CHECK(both[1] == doctest::Approx(1.0));
  CHECK(both[2] == doctest::Approx(0.9));
  CHECK(code_of([&] { aggregate(maps, {false, false}); }) == Errc::no_valid_frequency);

  CHECK(estimate_direction(std::vector<double>{0, 0, 1, 0}).direction == 2);
  CHECK(estimate_direction(std::vector<double>(326, 0.3)).direction == 0);
  CHECK(code_of([] { estimate_direction(std::vector<double>{}); }) == Errc::invalid_argument);
}

TEST_CASE("noise floors") {
  // White noise through the window: Monte-Carlo mean against the closed form.
  std::mt19937_64 rng(14);
  std::normal_distribution<double> g(0.0, 0.5);
  PcmStream s;
  for (int i = 0; i < 200 * 705 + 2048; ++i) {
    s.left.push_back(g(rng));
    s.right.push_back(g(rng));
  }
  auto frames = binaural_spectra(s);
  auto measured = estimate_noise_floor(frames);
  auto expected = white_noise_floor(0.25);
  double mean_ratio = 0.0;
  for (std::size_t b = 10; b < 1000; ++b) mean_ratio += measured.power[b] / expected.power[b];
  mean_ratio /= 990.0;
  CHECK(mean_ratio == doctest::Approx(1.0).epsilon(0.03));

  auto quiet = quiet_frame_floor(frames, 1.0);
  for (std::size_t b = 0; b < quiet.power.size(); b += 50) {
    CHECK(quiet.power[b] == doctest::Approx(measured.power[b]).epsilon(1e-12));
  }
  auto quietest = quiet_frame_floor(frames, 0.1);
  CHECK(quietest.power.size() == measured.power.size());
  CHECK(code_of([&] { quiet_frame_floor(frames, 0.0); }) == Errc::invalid_argument);
}

TEST_CASE("localization gate, mask and gain invariance") {
  const auto& model = small_model();
  const std::size_t bins[] = {45, 93, 141};
  auto frames = synthetic_frames(120, bins, 6, 1.0);
  NoiseFloor floor{std::vector<double>(kFftSize / 2 + 1, 1e-6)};

  auto all = ssde_localize(model, frames, floor);
  CHECK(all.used_bins == 18);

  SsdeLocalizeOptions one;
  one.requested_bins = {94};
  auto single = ssde_localize(model, frames, floor, one);
  CHECK(single.used_bins == 6);
  // The map is the sum of the per-frame outputs of that one net.
  std::vector<double> sum(326, 0.0);
  for (const auto& f : frames) {
    auto y = model.forward(1, feature_vector(f, 93));
    for (std::size_t k = 0; k < 326; ++k) sum[k] += y[k];
  }
  for (std::size_t k = 0; k < 326; k += 25) CHECK(single.map[k] == doctest::Approx(sum[k]).epsilon(1e-6));

  for (double gain : {1e-3, 7.0, 1e4}) {
    auto scaled = synthetic_frames(120, bins, 6, gain);
    NoiseFloor f2{std::vector<double>(kFftSize / 2 + 1, 1e-6 * gain * gain)};
    CHECK(ssde_localize(model, scaled, f2).estimate.direction == all.estimate.direction);
  }

  NoiseFloor loud{std::vector<double>(kFftSize / 2 + 1, 1.0)};
  CHECK(code_of([&] { ssde_localize(model, frames, loud); }) == Errc::no_valid_frequency);
}

TEST_CASE("ssde container") {
  const auto& model = small_model();
  const auto path = std::filesystem::temp_directory_path() / "binaural_test_small.ssde";
  save_ssde(model, path);
  auto loaded = load_ssde(path);
  CHECK(loaded == model);
  const auto first = io::file_hash(path);
  save_ssde(loaded, path);
  CHECK(io::file_hash(path) == first);

  auto bytes = io::read_file(path);
  bytes.pop_back();
  io::write_file_atomic(path, bytes);
  CHECK(code_of([&] { load_ssde(path); }) == Errc::format);
  std::filesystem::remove(path);
}
