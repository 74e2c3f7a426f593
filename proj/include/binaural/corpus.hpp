#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "binaural/frontend.hpp"
#include "binaural/mel.hpp"
#include "binaural/random.hpp"
#include "binaural/render.hpp"

namespace binaural {

/// Samples spanned by one mel window: kMelFrames frames at kHop.
inline constexpr std::size_t kMelWindowSamples = kFftSize + (kMelFrames - 1) * kHop;

/// Synthetic stand-ins for in-car sounds.
///   horn:      two-note chord of harmonic tones around 400-550 Hz
///   alarm:     square-ish beeping tone near 2.5 kHz
///   ratchet:   train of short resonant clicks (3-6 kHz)
///   gearshift: one or two low resonant noise thumps with a mechanical clunk
///   key:       a few short metallic pings above 4 kHz
///   voice:     glottal pulse train through three formant resonators
enum class SoundFamily { horn, alarm, ratchet, gearshift, key, voice };

inline constexpr std::size_t kSoundFamilyCount = 6;

std::string to_string(SoundFamily family);
SoundFamily sound_family_from_string(const std::string& name);
std::vector<SoundFamily> all_sound_families();

/// One mono clip of `samples` samples with randomized parameters, peak
/// amplitude 1.
std::vector<double> synth_sound(SoundFamily family, Rng& rng, std::size_t samples = kMelWindowSamples);

struct SoundClip {
  PcmStream stream;
  std::vector<std::size_t> labels;  // indices into SoundCorpus::labels, ascending
  std::string name;                 // file stem, unique within the corpus
};

struct SoundCorpus {
  std::vector<std::string> labels;
  std::vector<SoundClip> clips;

  std::vector<const SoundClip*> clips_with_only(std::size_t label) const;
};

struct CorpusConfig {
  std::size_t clips_per_label = 50;
  std::size_t mixed_clips = 60;  // two distinct labels each
  std::size_t samples = kMelWindowSamples;
  double snr_min_db = 10.0;
  double snr_max_db = 30.0;
  double level_min = 0.05;  // per-channel RMS range of the rendered scene
  double level_max = 0.3;
  std::uint64_t seed = 0;
};

/// Every family rendered from uniformly drawn grid directions with
/// background noise. Single-label clips come first, label by label, then
/// mixtures of two labels from independent directions.
SoundCorpus synth_corpus(const CorpusConfig& config, const Renderer& renderer,
                         const BackgroundNoise& noise);

/// Layout: labels.csv (name,directory), one directory of WAV clips per
/// label, and mixed/ with mixed.csv (file,labels separated by '+').
void save_corpus(const SoundCorpus& corpus, const std::filesystem::path& dir);
SoundCorpus load_corpus(const std::filesystem::path& dir);

}  // namespace binaural
