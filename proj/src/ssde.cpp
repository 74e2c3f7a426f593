#include "binaural/ssde.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "binaural/error.hpp"
#include "binaural/frontend.hpp"
#include "binaural/io.hpp"
#include "binaural/parallel.hpp"

namespace binaural {
namespace {

constexpr std::uint32_t kSsdeVersion = 1;
constexpr std::size_t kHeldOutExamples = 256;

using FMatrix = SsdeNet::Matrix;

// Gaussian targets for every source direction, one column per h.
FMatrix target_table(const DirectionGrid& grid, double sigma_rad) {
  FMatrix table(grid.size(), grid.size());
  for (std::size_t h = 0; h < grid.size(); ++h) {
    const auto t = gaussian_target(grid, h, sigma_rad);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      table(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(h)) =
          static_cast<float>(t[k]);
    }
  }
  return table;
}

// Source draw and noise only; the target is attached by the caller.
IldIpdFeature draw_feature(const HrtfSet& hrtf, std::size_t h, std::size_t bin, Rng& rng,
                           const SsdeConfig& config) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (;;) {
    const double magnitude = std::pow(10.0, -1.0 + 2.0 * unit(rng));
    const Complex s = std::polar(magnitude, kTwoPi * unit(rng));
    Complex nl{}, nr{};
    if (config.noise) {
      const double snr_db = config.snr_min_db + (config.snr_max_db - config.snr_min_db) * unit(rng);
      const double per_ear = magnitude * magnitude / std::pow(10.0, snr_db / 10.0) / 2.0;
      nl = complex_gaussian(rng, per_ear);
      nr = complex_gaussian(rng, per_ear);
    }
    try {
      return virtual_source_feature(hrtf, h, bin, s, nl, nr);
    } catch (const Error& e) {
      if (e.code() != Errc::silent_bin && e.code() != Errc::silent_channel) throw;
    }
  }
}

struct Dataset {
  FMatrix inputs;   // 5 x n
  FMatrix targets;  // D x n
};

Dataset make_dataset(const HrtfSet& hrtf, const DirectionGrid& grid, std::size_t bin,
                     std::size_t count, const FMatrix& table, Rng& rng,
                     const SsdeConfig& config) {
  Dataset ds{FMatrix(5, static_cast<Eigen::Index>(count)),
             FMatrix(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(count))};
  std::uniform_int_distribution<std::size_t> pick(0, grid.size() - 1);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t h = pick(rng);
    const auto v = draw_feature(hrtf, h, bin, rng, config).vector();
    const auto col = static_cast<Eigen::Index>(i);
    for (int r = 0; r < 5; ++r) ds.inputs(r, col) = static_cast<float>(v[static_cast<std::size_t>(r)]);
    ds.targets.col(col) = table.col(static_cast<Eigen::Index>(h));
  }
  return ds;
}

}  // namespace

std::vector<std::size_t> default_trained_bins() {
  std::vector<std::size_t> bins;
  for (std::size_t b = 5; b <= 557; b += 4) bins.push_back(b);
  return bins;
}

std::vector<double> gaussian_target(const DirectionGrid& grid, std::size_t h, double sigma_rad) {
  if (!(sigma_rad > 0.0)) throw Error(Errc::invalid_argument, "sigma must be positive");
  if (h >= grid.size()) throw Error(Errc::invalid_argument, "direction id out of range");
  std::vector<double> t(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double delta = deg_to_rad(angle_between(grid[k], grid[h]));
    t[k] = std::exp(-delta * delta / (2.0 * sigma_rad * sigma_rad));
  }
  return t;
}

IldIpdFeature virtual_source_feature(const HrtfSet& hrtf, std::size_t h, std::size_t bin,
                                     Complex source, Complex noise_left, Complex noise_right) {
  const auto a = hrtf.normalized(h, bin);
  return pair_feature(a.left * source + noise_left, a.right * source + noise_right, bin);
}

TrainingExample synth_training_example(const HrtfSet& hrtf, const DirectionGrid& grid,
                                       std::size_t h, std::size_t bin, Rng& rng,
                                       const SsdeConfig& config) {
  if (bin < 1 || bin >= hrtf.bins()) throw Error(Errc::invalid_argument, "bin out of range");
  TrainingExample ex;
  ex.feature = draw_feature(hrtf, h, bin, rng, config);
  ex.target = gaussian_target(grid, h, deg_to_rad(config.sigma_deg));
  ex.direction = h;
  ex.bin = bin;
  return ex;
}

std::vector<std::size_t> ssde_layer_sizes(std::size_t hidden, std::size_t directions) {
  return {5, hidden, hidden, directions};
}

std::optional<std::size_t> SsdeModel::nearest_net(std::size_t bin) const {
  if (bins.empty()) return std::nullopt;
  const auto it = std::lower_bound(bins.begin(), bins.end(), bin);
  std::size_t best;
  if (it == bins.end()) {
    best = bins.size() - 1;
  } else if (it == bins.begin()) {
    best = 0;
  } else {
    const auto hi = static_cast<std::size_t>(it - bins.begin());
    best = (*it - bin) < (bin - bins[hi - 1]) ? hi : hi - 1;
  }
  const std::size_t spacing = bins.size() > 1 ? bins[1] - bins[0] : 1;
  const std::size_t distance = bins[best] > bin ? bins[best] - bin : bin - bins[best];
  if (2 * distance > spacing) return std::nullopt;
  return best;
}

std::vector<double> SsdeModel::forward(std::size_t index, const IldIpdFeature& feature) const {
  const auto v = feature.vector();
  FMatrix in(5, 1);
  for (int r = 0; r < 5; ++r) in(r, 0) = static_cast<float>(v[static_cast<std::size_t>(r)]);
  const FMatrix out = nets.at(index).forward(in);
  return std::vector<double>(out.data(), out.data() + out.size());
}

SsdeNet train_ssde_bin(const HrtfSet& hrtf, const DirectionGrid& grid, std::size_t bin,
                       const SsdeConfig& config, BinTrainingLog* log) {
  if (config.batch_size == 0 || config.examples_per_bin == 0) {
    throw Error(Errc::invalid_argument, "batch size and example count must be positive");
  }
  if (config.hidden == 0) throw Error(Errc::invalid_argument, "hidden layer width must be positive");
  if (!(config.adam.learning_rate > 0.0)) throw Error(Errc::invalid_argument, "learning rate must be positive");
  if (config.noise && !(config.snr_min_db <= config.snr_max_db)) {
    throw Error(Errc::invalid_argument, "training SNR range must be ordered");
  }
  Rng rng(derive_seed(config.seed, bin));
  Rng held_out_rng(derive_seed(config.seed, bin + (std::uint64_t{1} << 32)));
  const FMatrix table = target_table(grid, deg_to_rad(config.sigma_deg));

  SsdeNet net(ssde_layer_sizes(config.hidden, grid.size()));
  net.init_glorot(rng);
  Adam<float> adam(net, config.adam);

  const Dataset held_out =
      make_dataset(hrtf, grid, bin, kHeldOutExamples, table, held_out_rng, config);
  const double held_out_scale = 1.0 / static_cast<double>(kHeldOutExamples);
  if (log) {
    log->bin = bin;
    log->initial_loss = net.mse_loss(held_out.inputs, held_out.targets) * held_out_scale;
  }

  Dataset data = make_dataset(hrtf, grid, bin, config.examples_per_bin, table, rng, config);
  std::vector<Eigen::Index> order(config.examples_per_bin);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  SsdeNet::Gradient grad;
  FMatrix batch_in, batch_target;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.resample_each_epoch && epoch > 0) {
      data = make_dataset(hrtf, grid, bin, config.examples_per_bin, table, rng, config);
    }
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      batch_in.resize(5, static_cast<Eigen::Index>(n));
      batch_target.resize(data.targets.rows(), static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) {
        batch_in.col(static_cast<Eigen::Index>(i)) = data.inputs.col(order[start + i]);
        batch_target.col(static_cast<Eigen::Index>(i)) = data.targets.col(order[start + i]);
      }
      epoch_loss += net.mse_gradient(batch_in, batch_target, grad);
      adam.step(net, grad);
    }
    if (!std::isfinite(epoch_loss)) {
      throw Error(Errc::divergence, "training loss became non-finite at bin " +
                                        std::to_string(bin) + ", epoch " + std::to_string(epoch));
    }
  }
  if (log) log->final_loss = net.mse_loss(held_out.inputs, held_out.targets) * held_out_scale;
  return net;
}

SsdeModel train_ssde(const HrtfSet& hrtf, const DirectionGrid& grid, const SsdeConfig& config,
                     std::vector<BinTrainingLog>* logs,
                     const std::function<void(std::size_t, std::size_t)>& progress) {
  if (hrtf.directions() != grid.size() || hrtf.grid_hash() != grid.hash()) {
    throw Error(Errc::compatibility, "HRTF set does not match the direction grid");
  }
  auto bins = config.bins;
  std::sort(bins.begin(), bins.end());
  bins.erase(std::unique(bins.begin(), bins.end()), bins.end());
  if (bins.empty()) throw Error(Errc::invalid_argument, "no bins to train");
  for (auto b : bins) {
    if (b < 1 || b >= hrtf.bins()) {
      throw Error(Errc::invalid_argument, "trained bin " + std::to_string(b) + " out of range");
    }
  }

  SsdeModel model;
  model.grid_hash = grid.hash();
  model.directions = grid.size();
  model.sigma_rad = deg_to_rad(config.sigma_deg);
  model.seed = config.seed;
  model.epochs = static_cast<std::uint32_t>(config.epochs);
  model.examples_per_bin = static_cast<std::uint32_t>(config.examples_per_bin);
  model.bins = bins;
  model.nets.resize(bins.size());
  std::vector<BinTrainingLog> local_logs(bins.size());
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;

  parallel_for(bins.size(), config.threads, [&](std::size_t i) {
    model.nets[i] = train_ssde_bin(hrtf, grid, bins[i], config, &local_logs[i]);
    const std::size_t finished = ++done;
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(finished, bins.size());
    }
  });
  if (logs) *logs = std::move(local_logs);
  return model;
}

double gradient_check(const DenseNet<double>& net, std::span<const double> input,
                      std::span<const double> target, Rng& rng, std::size_t samples,
                      double step) {
  using M = DenseNet<double>::Matrix;
  const M x = Eigen::Map<const M>(input.data(), static_cast<Eigen::Index>(input.size()), 1);
  const M t = Eigen::Map<const M>(target.data(), static_cast<Eigen::Index>(target.size()), 1);
  DenseNet<double>::Gradient grad;
  net.mse_gradient(x, t, grad);

  DenseNet<double> probe = net;
  std::uniform_int_distribution<std::size_t> pick_layer(0, net.layers() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t l = pick_layer(rng);
    const bool bias = unit(rng) < 0.2;
    double* param;
    double analytic;
    if (bias) {
      auto& b = probe.biases()[l];
      const auto i = static_cast<Eigen::Index>(unit(rng) * static_cast<double>(b.size()));
      param = &b(i);
      analytic = grad.biases[l](i);
    } else {
      auto& w = probe.weights()[l];
      const auto i = static_cast<Eigen::Index>(unit(rng) * static_cast<double>(w.rows()));
      const auto j = static_cast<Eigen::Index>(unit(rng) * static_cast<double>(w.cols()));
      param = &w(i, j);
      analytic = grad.weights[l](i, j);
    }
    const double saved = *param;
    *param = saved + step;
    const double up = probe.mse_loss(x, t);
    *param = saved - step;
    const double down = probe.mse_loss(x, t);
    *param = saved;
    const double numeric = (up - down) / (2.0 * step);
    // Absolute floor keeps parameters with a vanishing gradient from dividing noise by noise.
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic - numeric) / scale);
  }
  return worst;
}

ExistenceMap aggregate(std::span<const ExistenceMap> per_bin, const std::vector<bool>& mask) {
  if (mask.size() != per_bin.size()) throw Error(Errc::shape_mismatch, "mask length mismatch");
  ExistenceMap sum;
  for (std::size_t i = 0; i < per_bin.size(); ++i) {
    if (!mask[i]) continue;
    if (sum.empty()) {
      sum = per_bin[i];
    } else {
      if (per_bin[i].size() != sum.size()) throw Error(Errc::shape_mismatch, "map length mismatch");
      for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += per_bin[i][k];
    }
  }
  if (sum.empty()) throw Error(Errc::no_valid_frequency, "no valid frequency bin");
  return sum;
}

DirectionEstimate estimate_direction(std::span<const double> map) {
  if (map.empty()) throw Error(Errc::invalid_argument, "empty existence map");
  DirectionEstimate best{0, map[0]};
  for (std::size_t k = 1; k < map.size(); ++k) {
    if (map[k] > best.score) best = {k, map[k]};
  }
  return best;
}

NoiseFloor estimate_noise_floor(std::span<const BinauralFrame> frames) {
  if (frames.empty()) throw Error(Errc::empty_stream, "no frames for noise floor");
  const std::size_t bins = frames.front().left.size() / 2 + 1;
  NoiseFloor floor{std::vector<double>(bins, 0.0)};
  for (const auto& f : frames) {
    for (std::size_t b = 0; b < bins; ++b) {
      floor.power[b] += std::norm(f.left[b]) + std::norm(f.right[b]);
    }
  }
  for (auto& p : floor.power) p /= static_cast<double>(frames.size());
  return floor;
}

NoiseFloor quiet_frame_floor(std::span<const BinauralFrame> frames, double fraction) {
  if (frames.empty()) throw Error(Errc::empty_stream, "no frames for noise floor");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(Errc::invalid_argument, "quiet fraction must lie in (0, 1]");
  }
  std::vector<std::pair<double, std::size_t>> energy;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    double e = 0.0;
    for (std::size_t b = 0; b < frames[i].left.size(); ++b) {
      e += std::norm(frames[i].left[b]) + std::norm(frames[i].right[b]);
    }
    energy.emplace_back(e, i);
  }
  std::sort(energy.begin(), energy.end());
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(fraction * static_cast<double>(frames.size())));
  std::vector<BinauralFrame> quiet;
  for (std::size_t i = 0; i < keep; ++i) quiet.push_back(frames[energy[i].second]);
  return estimate_noise_floor(quiet);
}

NoiseFloor white_noise_floor(double variance, std::size_t fft_size) {
  double window_energy = 0.0;
  for (std::size_t t = 0; t < fft_size; ++t) {
    const double w = hamming_coefficient(t, fft_size);
    window_energy += w * w;
  }
  return {std::vector<double>(fft_size / 2 + 1, 2.0 * variance * window_energy)};
}

SsdeEstimate ssde_localize(const SsdeModel& model, std::span<const BinauralFrame> frames,
                           const NoiseFloor& floor, const SsdeLocalizeOptions& options) {
  if (frames.empty()) throw Error(Errc::empty_stream, "no frames to localize");
  std::vector<bool> requested(model.bins.size(), options.requested_bins.empty());
  for (auto b : options.requested_bins) {
    if (auto i = model.nearest_net(b)) requested[*i] = true;
  }

  // Collect features per net so each net runs one batched forward pass.
  std::vector<std::vector<IldIpdFeature>> features(model.bins.size());
  for (const auto& frame : frames) {
    for (std::size_t i = 0; i < model.bins.size(); ++i) {
      if (!requested[i]) continue;
      const std::size_t b = model.bins[i];
      if (b >= floor.power.size() || b >= frame.left.size() / 2) continue;
      const double power = std::norm(frame.left[b]) + std::norm(frame.right[b]);
      if (!(power > options.gate_factor * floor.power[b])) continue;
      try {
        features[i].push_back(feature_vector(frame, b));
      } catch (const Error& e) {
        if (e.code() != Errc::silent_bin && e.code() != Errc::silent_channel) throw;
      }
    }
  }

  SsdeEstimate out;
  out.map.assign(model.directions, 0.0);
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].empty()) continue;
    FMatrix in(5, static_cast<Eigen::Index>(features[i].size()));
    for (std::size_t c = 0; c < features[i].size(); ++c) {
      const auto v = features[i][c].vector();
      for (int r = 0; r < 5; ++r) {
        in(r, static_cast<Eigen::Index>(c)) = static_cast<float>(v[static_cast<std::size_t>(r)]);
      }
    }
    const FMatrix y = model.nets[i].forward(in);
    for (Eigen::Index c = 0; c < y.cols(); ++c) {
      for (Eigen::Index k = 0; k < y.rows(); ++k) {
        out.map[static_cast<std::size_t>(k)] += static_cast<double>(y(k, c));
      }
    }
    out.used_bins += features[i].size();
  }
  if (out.used_bins == 0) throw Error(Errc::no_valid_frequency, "no bin passed the noise gate");
  out.estimate = estimate_direction(out.map);
  return out;
}

void save_ssde(const SsdeModel& model, const std::filesystem::path& path) {
  if (model.nets.size() != model.bins.size() || model.nets.empty()) {
    throw Error(Errc::invalid_argument, "model has no nets or mismatched bin list");
  }
  io::ByteWriter w;
  w.put_magic("SSDE");
  w.put<std::uint32_t>(kSsdeVersion);
  w.put<std::uint64_t>(model.grid_hash);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.directions));
  w.put<double>(model.sigma_rad);
  w.put<std::uint64_t>(model.seed);
  w.put<std::uint32_t>(model.epochs);
  w.put<std::uint32_t>(model.examples_per_bin);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.bins.size()));
  for (auto b : model.bins) w.put<std::uint32_t>(static_cast<std::uint32_t>(b));
  const auto& sizes = model.nets.front().sizes();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(sizes.size()));
  for (auto s : sizes) w.put<std::uint32_t>(static_cast<std::uint32_t>(s));
  for (const auto& net : model.nets) {
    if (net.sizes() != sizes) throw Error(Errc::shape_mismatch, "nets differ in layer sizes");
    for (std::size_t l = 0; l < net.layers(); ++l) {
      const auto& wm = net.weights()[l];
      const auto& bv = net.biases()[l];
      w.put_span(std::span<const float>(wm.data(), static_cast<std::size_t>(wm.size())));
      w.put_span(std::span<const float>(bv.data(), static_cast<std::size_t>(bv.size())));
    }
  }
  io::write_file_atomic(path, w.bytes());
}

SsdeModel load_ssde(const std::filesystem::path& path, const DirectionGrid& grid) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes);
  if (!r.magic_matches("SSDE")) throw Error(Errc::format, path.string() + ": bad magic");
  if (const auto v = r.get<std::uint32_t>(); v != kSsdeVersion) {
    throw Error(Errc::format, "unsupported SSDE container version " + std::to_string(v));
  }
  SsdeModel m;
  m.grid_hash = r.get<std::uint64_t>();
  m.directions = r.get<std::uint32_t>();
  if (m.grid_hash != grid.hash() || m.directions != grid.size()) {
    throw Error(Errc::compatibility, "SSDE model was trained on a different direction grid");
  }
  m.sigma_rad = r.get<double>();
  m.seed = r.get<std::uint64_t>();
  m.epochs = r.get<std::uint32_t>();
  m.examples_per_bin = r.get<std::uint32_t>();
  const auto nbins = r.get<std::uint32_t>();
  if (nbins == 0 || nbins > kFftSize) throw Error(Errc::format, "implausible bin count");
  for (std::uint32_t i = 0; i < nbins; ++i) m.bins.push_back(r.get<std::uint32_t>());
  if (!std::is_sorted(m.bins.begin(), m.bins.end())) throw Error(Errc::format, "bins not sorted");
  std::vector<std::size_t> sizes(r.get<std::uint32_t>());
  if (sizes.size() < 2 || sizes.size() > 16) throw Error(Errc::format, "implausible layer count");
  for (auto& s : sizes) s = r.get<std::uint32_t>();
  if (sizes.front() != 5 || sizes.back() != m.directions) {
    throw Error(Errc::format, "layer sizes do not match feature and grid sizes");
  }
  std::size_t params_per_net = 0;
  for (std::size_t l = 1; l < sizes.size(); ++l) params_per_net += sizes[l] * (sizes[l - 1] + 1);
  if (r.remaining() != params_per_net * nbins * sizeof(float)) {
    throw Error(Errc::format, "SSDE payload has unexpected length (truncated?)");
  }
  m.nets.reserve(nbins);
  for (std::uint32_t i = 0; i < nbins; ++i) {
    SsdeNet net(sizes);
    for (std::size_t l = 0; l < net.layers(); ++l) {
      auto& wm = net.weights()[l];
      auto& bv = net.biases()[l];
      r.get_span(std::span<float>(wm.data(), static_cast<std::size_t>(wm.size())));
      r.get_span(std::span<float>(bv.data(), static_cast<std::size_t>(bv.size())));
    }
    m.nets.push_back(std::move(net));
  }
  return m;
}

}  // namespace binaural
