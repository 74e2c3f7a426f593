#include "binaural/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "binaural/error.hpp"
#include "binaural/io.hpp"
#include "binaural/parallel.hpp"
#include "binaural/ssde.hpp"

namespace binaural {
namespace {

constexpr std::uint32_t kMelcVersion = 1;

Eigen::MatrixXf as_input(const MelSpectrogram& mel) { return mel.values.cast<float>(); }

std::vector<double> probabilities(const MelNet& net, const MelSpectrogram& mel) {
  const Eigen::VectorXf y = net.forward(as_input(mel));
  return {y.data(), y.data() + y.size()};
}

// Fused probabilities of one window; empty when both ears are silent.
std::vector<double> fused_window(const MelCnnModel& model, const MelSpectrogram& left,
                                 const MelSpectrogram& right, double v_left, double v_right) {
  if (v_left + v_right <= 0.0) return {};
  return fuse_binaural(probabilities(model.net, left), probabilities(model.net, right), v_left,
                       v_right);
}

}  // namespace

std::vector<double> fuse_binaural(std::span<const double> p_left, std::span<const double> p_right,
                                  double v_left, double v_right) {
  if (p_left.size() != p_right.size()) {
    throw Error(Errc::invalid_argument, "left and right probability vectors differ in length");
  }
  if (!(v_left >= 0.0) || !(v_right >= 0.0) || v_left + v_right <= 0.0) {
    throw Error(Errc::invalid_argument, "volumes must be non-negative and not both zero");
  }
  std::vector<double> out(p_left.size());
  const double total = v_left + v_right;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (v_left * p_left[i] + v_right * p_right[i]) / total;
  }
  return out;
}

double channel_rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0) /
                   static_cast<double>(x.size()));
}

std::vector<double> mean_magnitude(const PcmStream& stream) {
  const auto frames = binaural_spectra(stream);
  std::vector<double> mag(kFftSize / 2 + 1, 0.0);
  for (const auto& f : frames) {
    for (std::size_t k = 0; k < mag.size(); ++k) mag[k] += std::abs(f.left[k]) + std::abs(f.right[k]);
  }
  for (auto& m : mag) m /= 2.0 * static_cast<double>(frames.size());
  return mag;
}

std::vector<std::size_t> characteristic_frequencies(const SoundCorpus& corpus, std::size_t label,
                                                    std::span<const std::size_t> candidate_bins,
                                                    double fraction) {
  if (label >= corpus.labels.size()) throw Error(Errc::invalid_argument, "label out of range");
  if (candidate_bins.empty()) throw Error(Errc::invalid_argument, "no candidate bins");
  const auto clips = corpus.clips_with_only(label);
  if (clips.empty()) {
    throw Error(Errc::invalid_argument, "no single-label clips for '" + corpus.labels[label] + "'");
  }
  std::vector<double> avg(kFftSize / 2 + 1, 0.0);
  for (const auto* clip : clips) {
    const auto m = mean_magnitude(clip->stream);
    for (std::size_t k = 0; k < avg.size(); ++k) avg[k] += m[k];
  }
  for (auto& a : avg) a /= static_cast<double>(clips.size());

  const double peak = *std::max_element(avg.begin() + 1, avg.end() - 1);
  std::vector<std::size_t> out;
  for (auto b : candidate_bins) {
    if (b == 0 || b >= kFftSize / 2) throw Error(Errc::invalid_argument, "candidate bin out of range");
    if (avg[b] >= fraction * peak) out.push_back(b);
  }
  if (out.empty()) {
    std::vector<std::size_t> ranked(candidate_bins.begin(), candidate_bins.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [&](std::size_t a, std::size_t b) { return avg[a] > avg[b]; });
    ranked.resize(std::min<std::size_t>(8, ranked.size()));
    out = ranked;
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::pair<MelSpectrogram, MelSpectrogram> clip_mels(const PcmStream& stream) {
  const auto frames = binaural_spectra(stream);
  return {mel_spectrogram(frames, 0, Ear::left), mel_spectrogram(frames, 0, Ear::right)};
}

MelCnnModel train_melcnn(const SoundCorpus& corpus, const MelTrainConfig& config,
                         const std::function<void(const MelEpochLog&)>& progress) {
  const std::size_t labels = corpus.labels.size();
  if (labels < 2) throw Error(Errc::invalid_argument, "detector training needs at least 2 labels");
  for (std::size_t l = 0; l < labels; ++l) {
    if (corpus.clips_with_only(l).size() < 10) {
      throw Error(Errc::invalid_argument,
                  "label '" + corpus.labels[l] + "' has fewer than 10 single-label clips");
    }
  }
  if (config.batch_size == 0 || config.epochs == 0) {
    throw Error(Errc::invalid_argument, "epochs and batch size must be positive");
  }

  MelCnnModel model;
  model.labels = corpus.labels;
  model.seed = config.seed;
  model.epochs = config.epochs;
  const auto candidates = config.candidate_bins.empty() ? default_trained_bins() : config.candidate_bins;
  for (std::size_t l = 0; l < labels; ++l) {
    model.characteristic_bins.push_back(characteristic_frequencies(corpus, l, candidates));
  }

  std::vector<Eigen::MatrixXf> inputs;
  std::vector<Eigen::VectorXf> targets;
  for (const auto& clip : corpus.clips) {
    Eigen::VectorXf t = Eigen::VectorXf::Zero(static_cast<Eigen::Index>(labels));
    for (auto l : clip.labels) {
      if (l >= labels) throw Error(Errc::invalid_argument, "clip label out of range");
      t(static_cast<Eigen::Index>(l)) = 1.0f;
    }
    const auto [left, right] = clip_mels(clip.stream);
    inputs.push_back(as_input(left));
    targets.push_back(t);
    inputs.push_back(as_input(right));
    targets.push_back(t);
  }

  Rng rng(config.seed);
  model.net = MelNet(labels);
  model.net.init_glorot(rng);
  AdamOptimizer<MelNet> adam(model.net, config.adam);
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      auto grad = model.net.zero_gradient();
      const float weight = 1.0f / static_cast<float>(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        total += model.net.accumulate_gradient(inputs[order[i]], targets[order[i]], grad, weight);
      }
      adam.step(model.net, grad);
    }
    const double mean = total / static_cast<double>(order.size());
    if (!std::isfinite(mean)) {
      throw Error(Errc::divergence, "detector loss is not finite at epoch " + std::to_string(epoch + 1));
    }
    if (progress) progress({epoch + 1, mean});
  }
  return model;
}

std::vector<double> classify_clip(const MelCnnModel& model, const PcmStream& stream) {
  const auto [left, right] = clip_mels(stream);
  const std::size_t n = std::min(stream.size(), kMelWindowSamples);
  const double vl = channel_rms(std::span(stream.left).first(n));
  const double vr = channel_rms(std::span(stream.right).first(n));
  auto p = fused_window(model, left, right, vl, vr);
  if (p.empty()) p.assign(model.labels.size(), 0.0);
  return p;
}

DetectorScore score_detector(const MelCnnModel& model, const SoundCorpus& corpus,
                             double threshold, std::size_t threads) {
  if (corpus.labels != model.labels) {
    throw Error(Errc::compatibility, "corpus labels differ from the detector's labels");
  }
  const std::size_t labels = model.labels.size();
  std::vector<std::vector<double>> probs(corpus.clips.size());
  parallel_for(corpus.clips.size(), threads,
               [&](std::size_t i) { probs[i] = classify_clip(model, corpus.clips[i].stream); });

  std::vector<double> tp(labels, 0.0), fp(labels, 0.0), fn(labels, 0.0);
  for (std::size_t i = 0; i < corpus.clips.size(); ++i) {
    const auto& truth = corpus.clips[i].labels;
    for (std::size_t l = 0; l < labels; ++l) {
      const bool actual = std::find(truth.begin(), truth.end(), l) != truth.end();
      const bool predicted = probs[i][l] >= threshold;
      if (actual && predicted) tp[l] += 1.0;
      if (!actual && predicted) fp[l] += 1.0;
      if (actual && !predicted) fn[l] += 1.0;
    }
  }
  DetectorScore s;
  for (std::size_t l = 0; l < labels; ++l) {
    const double p = tp[l] + fp[l] > 0.0 ? tp[l] / (tp[l] + fp[l]) : 0.0;
    const double r = tp[l] + fn[l] > 0.0 ? tp[l] / (tp[l] + fn[l]) : 0.0;
    s.precision.push_back(p);
    s.recall.push_back(r);
    s.f_score.push_back(p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0);
  }
  s.macro_f = std::accumulate(s.f_score.begin(), s.f_score.end(), 0.0) / static_cast<double>(labels);
  return s;
}

std::vector<DetectionEvent> detect(const PcmStream& stream, const MelCnnModel& model,
                                   const DetectOptions& options) {
  stream.validate();
  if (options.window_hop == 0) throw Error(Errc::invalid_argument, "window hop must be positive");
  if (stream.size() < kMelWindowSamples) return {};
  const auto frames = binaural_spectra(stream);
  std::vector<std::size_t> starts;
  for (std::size_t w = 0; w + kMelFrames <= frames.size(); w += options.window_hop) starts.push_back(w);

  std::vector<std::vector<double>> probs(starts.size());
  parallel_for(starts.size(), options.threads, [&](std::size_t i) {
    const std::size_t first_sample = frames[starts[i]].frame_index * kHop;
    const double vl = channel_rms(std::span(stream.left).subspan(first_sample, kMelWindowSamples));
    const double vr = channel_rms(std::span(stream.right).subspan(first_sample, kMelWindowSamples));
    if (vl + vr <= 0.0) return;
    probs[i] = fused_window(model, mel_spectrogram(frames, starts[i], Ear::left),
                            mel_spectrogram(frames, starts[i], Ear::right), vl, vr);
  });

  std::vector<DetectionEvent> events;
  const std::size_t labels = model.labels.size();
  // Index into `events` of the event still open for each label, if any.
  std::vector<std::ptrdiff_t> open(labels, -1);
  for (std::size_t i = 0; i < starts.size(); ++i) {
    for (std::size_t l = 0; l < labels; ++l) {
      const bool hit = !probs[i].empty() && probs[i][l] >= options.threshold;
      if (!hit) {
        open[l] = -1;
        continue;
      }
      if (open[l] < 0) {
        DetectionEvent e;
        e.label = model.labels[l];
        e.label_index = l;
        e.bins = model.characteristic_bins[l];
        e.first_frame = starts[i];
        events.push_back(std::move(e));
        open[l] = static_cast<std::ptrdiff_t>(events.size() - 1);
      }
      auto& e = events[static_cast<std::size_t>(open[l])];
      e.probability = std::max(e.probability, probs[i][l]);
      e.end_frame = starts[i] + kMelFrames;
    }
  }
  for (auto& e : events) {
    e.t_start = static_cast<double>(e.first_frame * kHop) / stream.sample_rate;
    e.t_end = static_cast<double>((e.end_frame - 1) * kHop + kFftSize) / stream.sample_rate;
  }
  std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) {
    return a.first_frame != b.first_frame ? a.first_frame < b.first_frame : a.label_index < b.label_index;
  });
  return events;
}

void localize_events(std::span<DetectionEvent> events, std::span<const BinauralFrame> frames,
                     const SsdeModel& model, const NoiseFloor& floor, double gate_factor) {
  for (auto& e : events) {
    if (e.end_frame > frames.size() || e.first_frame >= e.end_frame) {
      throw Error(Errc::invalid_argument, "event frames lie outside the analysed stream");
    }
    SsdeLocalizeOptions options;
    options.gate_factor = gate_factor;
    options.requested_bins = e.bins;
    try {
      const auto est = ssde_localize(model, frames.subspan(e.first_frame, e.end_frame - e.first_frame),
                                     floor, options);
      e.direction = est.estimate.direction;
    } catch (const Error& err) {
      if (err.code() != Errc::no_valid_frequency) throw;
      e.direction.reset();
    }
  }
}

void write_events_jsonl(std::ostream& out, std::span<const DetectionEvent> events) {
  for (const auto& e : events) {
    nlohmann::ordered_json j;
    j["label"] = e.label;
    j["p"] = e.probability;
    j["t_start"] = e.t_start;
    j["t_end"] = e.t_end;
    j["bins"] = e.bins;
    if (e.direction) {
      const auto& d = default_grid()[*e.direction];
      j["direction"] = *e.direction;
      j["azimuth_deg"] = d.azimuth_deg();
      j["elevation_deg"] = d.elevation_deg();
    }
    out << j.dump() << '\n';
  }
}

void save_melcnn(const MelCnnModel& model, const std::filesystem::path& path) {
  const std::size_t labels = model.labels.size();
  if (labels == 0 || model.characteristic_bins.size() != labels || model.net.labels() != labels) {
    throw Error(Errc::invalid_argument, "detector model is incomplete");
  }
  io::ByteWriter w;
  w.put_magic("MELC");
  w.put<std::uint32_t>(kMelcVersion);
  w.put<std::uint64_t>(model.seed);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.epochs));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.net.bands()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.net.frames()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(labels));
  for (std::size_t l = 0; l < labels; ++l) {
    w.put_string(model.labels[l]);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.characteristic_bins[l].size()));
    for (auto b : model.characteristic_bins[l]) w.put<std::uint32_t>(static_cast<std::uint32_t>(b));
  }
  for (std::size_t l = 0; l < model.net.layers(); ++l) {
    const auto& wm = model.net.weights()[l];
    const auto& bv = model.net.biases()[l];
    w.put_span(std::span<const float>(wm.data(), static_cast<std::size_t>(wm.size())));
    w.put_span(std::span<const float>(bv.data(), static_cast<std::size_t>(bv.size())));
  }
  io::write_file_atomic(path, w.bytes());
}

MelCnnModel load_melcnn(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes);
  if (!r.magic_matches("MELC")) throw Error(Errc::format, path.string() + ": bad magic");
  if (const auto v = r.get<std::uint32_t>(); v != kMelcVersion) {
    throw Error(Errc::format, "unsupported MELC container version " + std::to_string(v));
  }
  MelCnnModel m;
  m.seed = r.get<std::uint64_t>();
  m.epochs = r.get<std::uint32_t>();
  const auto bands = r.get<std::uint32_t>();
  const auto frames = r.get<std::uint32_t>();
  if (bands != kMelBands || frames != kMelFrames) {
    throw Error(Errc::compatibility, "detector expects a different mel input shape");
  }
  const auto labels = r.get<std::uint32_t>();
  if (labels == 0 || labels > 4096) throw Error(Errc::format, "implausible label count");
  for (std::uint32_t l = 0; l < labels; ++l) {
    m.labels.push_back(r.get_string());
    std::vector<std::size_t> bins(r.get<std::uint32_t>());
    if (bins.size() > kFftSize / 2) throw Error(Errc::format, "implausible characteristic bin count");
    for (auto& b : bins) {
      b = r.get<std::uint32_t>();
      if (b == 0 || b >= kFftSize / 2) throw Error(Errc::format, "characteristic bin out of range");
    }
    m.characteristic_bins.push_back(std::move(bins));
  }
  m.net = MelNet(labels, bands, frames);
  if (r.remaining() != m.net.parameter_count() * sizeof(float)) {
    throw Error(Errc::format, "MELC payload has unexpected length (truncated?)");
  }
  for (std::size_t l = 0; l < m.net.layers(); ++l) {
    auto& wm = m.net.weights()[l];
    auto& bv = m.net.biases()[l];
    r.get_span(std::span<float>(wm.data(), static_cast<std::size_t>(wm.size())));
    r.get_span(std::span<float>(bv.data(), static_cast<std::size_t>(bv.size())));
  }
  return m;
}

}  // namespace binaural
