#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "binaural/corpus.hpp"
#include "binaural/dense.hpp"
#include "binaural/frontend.hpp"
#include "binaural/melcnn.hpp"
#include "binaural/ssde.hpp"

namespace binaural {

using MelNet = MelCnn<float>;

struct MelCnnModel {
  std::vector<std::string> labels;
  std::vector<std::vector<std::size_t>> characteristic_bins;  // one set per label
  MelNet net;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;

  bool operator==(const MelCnnModel&) const = default;
};

/// (V_l p_l + V_r p_r) / (V_l + V_r) per label. Throws invalid_argument when
/// the volumes are negative or both zero, or the lengths differ.
std::vector<double> fuse_binaural(std::span<const double> p_left, std::span<const double> p_right,
                                  double v_left, double v_right);

/// Root mean square of a channel.
double channel_rms(std::span<const double> x);

/// Mean |X(bin)| of one clip over its frames and both ears, bins [0, N/2].
std::vector<double> mean_magnitude(const PcmStream& stream);

/// Bins among `candidate_bins` where the label's clip-averaged magnitude is
/// at least `fraction` of its peak over all eligible bins. If none qualifies
/// the 8 candidates with the largest magnitude are returned. Only clips
/// carrying the label alone are used. Result is ascending.
std::vector<std::size_t> characteristic_frequencies(const SoundCorpus& corpus, std::size_t label,
                                                    std::span<const std::size_t> candidate_bins,
                                                    double fraction = 0.2);

/// The two per-ear mel spectrograms of a clip's first kMelFrames frames.
std::pair<MelSpectrogram, MelSpectrogram> clip_mels(const PcmStream& stream);

struct MelTrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::vector<std::size_t> candidate_bins;  // empty: default_trained_bins()
};

struct MelEpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
};

/// Each ear of each clip is one example; targets mark every label of the
/// clip. Throws invalid_argument with fewer than 2 labels or fewer than 10
/// single-label clips for any label, divergence on a non-finite loss.
MelCnnModel train_melcnn(const SoundCorpus& corpus, const MelTrainConfig& config,
                         const std::function<void(const MelEpochLog&)>& progress = {});

/// Fused label probabilities of one clip (first window).
std::vector<double> classify_clip(const MelCnnModel& model, const PcmStream& stream);

struct DetectorScore {
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f_score;  // per label; 0 when a label has no true or predicted positives
  double macro_f = 0.0;
};

/// Per-label F-scores of thresholded fused probabilities over every clip.
DetectorScore score_detector(const MelCnnModel& model, const SoundCorpus& corpus,
                             double threshold = 0.5, std::size_t threads = 0);

struct DetectionEvent {
  std::string label;
  std::size_t label_index = 0;
  double probability = 0.0;           // peak fused probability over the event
  std::vector<std::size_t> bins;      // the label's characteristic bins
  std::size_t first_frame = 0;        // frames covered: [first_frame, end_frame)
  std::size_t end_frame = 0;
  double t_start = 0.0;               // seconds
  double t_end = 0.0;
  std::optional<std::size_t> direction;  // set by localize_events
};

struct DetectOptions {
  double threshold = 0.5;
  std::size_t window_hop = 5;  // frames between successive mel windows
  std::size_t threads = 0;
};

/// Slides a kMelFrames window over the stream, fuses both ears and merges
/// consecutive windows above threshold into one event per label. Windows
/// with both ears silent are skipped. Events are ordered by start, then label.
std::vector<DetectionEvent> detect(const PcmStream& stream, const MelCnnModel& model,
                                   const DetectOptions& options = {});

/// Runs ssde_localize on each event's frames restricted to its
/// characteristic bins. Events without a qualifying bin keep no direction.
void localize_events(std::span<DetectionEvent> events, std::span<const BinauralFrame> frames,
                     const SsdeModel& model, const NoiseFloor& floor, double gate_factor = 10.0);

/// One JSON object per line: label, p, t_start, t_end, bins, plus direction,
/// azimuth_deg and elevation_deg on the default grid when localized.
void write_events_jsonl(std::ostream& out, std::span<const DetectionEvent> events);

void save_melcnn(const MelCnnModel& model, const std::filesystem::path& path);
MelCnnModel load_melcnn(const std::filesystem::path& path);

}  // namespace binaural
