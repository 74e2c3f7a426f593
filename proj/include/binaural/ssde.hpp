#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "binaural/dense.hpp"
#include "binaural/features.hpp"
#include "binaural/frontend.hpp"
#include "binaural/grid.hpp"
#include "binaural/hrtf.hpp"
#include "binaural/random.hpp"

namespace binaural {

/// Every 4th bin from 5 (108 Hz) to 557 (11995 Hz).
std::vector<std::size_t> default_trained_bins();

struct SsdeConfig {
  std::vector<std::size_t> bins = default_trained_bins();
  std::size_t hidden = 500;
  std::size_t examples_per_bin = 1000;
  std::size_t epochs = 500;
  std::size_t batch_size = 32;
  double sigma_deg = 15.0;
  AdamConfig adam;
  bool noise = true;
  double snr_min_db = 5.0;
  double snr_max_db = 20.0;
  // Draw a fresh set of examples every epoch instead of reusing one set.
  bool resample_each_epoch = false;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0: one per hardware thread
};

/// exp(-angle(k, h)^2 / (2 sigma^2)) for every grid direction k; angle in radians.
std::vector<double> gaussian_target(const DirectionGrid& grid, std::size_t h, double sigma_rad);

struct TrainingExample {
  IldIpdFeature feature;
  std::vector<double> target;
  std::size_t direction = 0;
  std::size_t bin = 0;
};

/// Feature of the normalized HRTF pair at (h, bin) scaled by `source`, plus
/// per-ear additive noise.
IldIpdFeature virtual_source_feature(const HrtfSet& hrtf, std::size_t h, std::size_t bin,
                                     Complex source, Complex noise_left = {},
                                     Complex noise_right = {});

/// Draws a source coefficient (log-uniform magnitude in [0.1, 10], uniform
/// phase) and, when enabled, complex Gaussian noise at an SNR drawn uniformly
/// from [snr_min_db, snr_max_db]. Silent draws are redrawn.
TrainingExample synth_training_example(const HrtfSet& hrtf, const DirectionGrid& grid,
                                       std::size_t h, std::size_t bin, Rng& rng,
                                       const SsdeConfig& config);

using SsdeNet = DenseNet<float>;

std::vector<std::size_t> ssde_layer_sizes(std::size_t hidden, std::size_t directions);

class SsdeModel {
 public:
  std::uint64_t grid_hash = 0;
  std::size_t directions = kDirectionCount;
  double sigma_rad = 0.0;
  std::uint64_t seed = 0;
  std::uint32_t epochs = 0;
  std::uint32_t examples_per_bin = 0;
  std::vector<std::size_t> bins;  // ascending
  std::vector<SsdeNet> nets;      // nets[i] owns bins[i]

  /// Index of the trained bin nearest to `bin`, if it lies within half the
  /// trained-bin spacing. Ties go to the lower bin.
  std::optional<std::size_t> nearest_net(std::size_t bin) const;

  /// Existence scores of net `index` for one feature.
  std::vector<double> forward(std::size_t index, const IldIpdFeature& feature) const;

  bool operator==(const SsdeModel&) const = default;
};

struct BinTrainingLog {
  std::size_t bin = 0;
  double initial_loss = 0.0;  // mean per-example loss on a held-out set
  double final_loss = 0.0;
};

/// Trains one net. Deterministic for a given (config.seed, bin).
SsdeNet train_ssde_bin(const HrtfSet& hrtf, const DirectionGrid& grid, std::size_t bin,
                       const SsdeConfig& config, BinTrainingLog* log = nullptr);

/// Trains every bin of config.bins on a worker pool. Output does not depend on
/// the number of threads.
SsdeModel train_ssde(const HrtfSet& hrtf, const DirectionGrid& grid, const SsdeConfig& config,
                     std::vector<BinTrainingLog>* logs = nullptr,
                     const std::function<void(std::size_t done, std::size_t total)>& progress = {});

/// Largest relative error between the backprop gradient of the MSE loss and a
/// central difference (step `step`) over `samples` randomly chosen parameters.
double gradient_check(const DenseNet<double>& net, std::span<const double> input,
                      std::span<const double> target, Rng& rng, std::size_t samples = 200,
                      double step = 1e-5);

using ExistenceMap = std::vector<double>;

/// Sum of the maps whose mask entry is set. Throws no_valid_frequency when none are.
ExistenceMap aggregate(std::span<const ExistenceMap> per_bin, const std::vector<bool>& mask);

struct DirectionEstimate {
  std::size_t direction = 0;
  double score = 0.0;
};

/// Argmax; ties go to the lowest direction id.
DirectionEstimate estimate_direction(std::span<const double> map);

/// Expected |X_l|^2 + |X_r|^2 of background noise per bin [0, N/2].
struct NoiseFloor {
  std::vector<double> power;
};

/// Mean per-bin power over frames of a noise-only recording.
NoiseFloor estimate_noise_floor(std::span<const BinauralFrame> frames);

/// estimate_noise_floor over the `fraction` of frames with the least total
/// energy (at least one frame); for recordings without a noise-only excerpt.
NoiseFloor quiet_frame_floor(std::span<const BinauralFrame> frames, double fraction = 0.1);

/// Floor of independent white noise with per-channel sample variance `variance`
/// analysed through the Hamming window.
NoiseFloor white_noise_floor(double variance, std::size_t fft_size = kFftSize);

struct SsdeLocalizeOptions {
  double gate_factor = 10.0;
  // Requested bins (e.g. a detector's characteristic frequencies). Empty: all trained bins.
  std::vector<std::size_t> requested_bins;
};

struct SsdeEstimate {
  DirectionEstimate estimate;
  ExistenceMap map;
  std::size_t used_bins = 0;  // (frame, bin) pairs summed into the map
};

/// Sums existence maps over frames and valid bins. A trained bin is valid in a
/// frame when it is requested (or nearest to a requested bin) and its power
/// exceeds gate_factor times the noise floor.
SsdeEstimate ssde_localize(const SsdeModel& model, std::span<const BinauralFrame> frames,
                           const NoiseFloor& floor, const SsdeLocalizeOptions& options = {});

/// Container: "SSDE", version, grid hash, D, sigma, seed, epochs, examples per
/// bin, bin list, layer sizes, then per bin each layer's weights (column-major)
/// and biases as little-endian f32.
void save_ssde(const SsdeModel& model, const std::filesystem::path& path);
SsdeModel load_ssde(const std::filesystem::path& path, const DirectionGrid& grid = default_grid());

}  // namespace binaural
