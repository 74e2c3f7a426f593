#include "binaural/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "binaural/error.hpp"
#include "binaural/io.hpp"
#include "binaural/wav.hpp"

namespace binaural {
namespace {

constexpr double kRate = kSampleRate;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Two-pole resonator, unity gain at the centre frequency.
class Resonator {
 public:
  Resonator(double centre_hz, double bandwidth_hz) {
    const double r = std::exp(-kPi * bandwidth_hz / kRate);
    a1_ = 2.0 * r * std::cos(kTwoPi * centre_hz / kRate);
    a2_ = -r * r;
    gain_ = (1.0 - r) * std::sqrt(1.0 - 2.0 * r * std::cos(2.0 * kTwoPi * centre_hz / kRate) + r * r);
  }
  double operator()(double x) {
    const double y = gain_ * x + a1_ * y1_ + a2_ * y2_;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double a1_, a2_, gain_;
  double y1_ = 0.0, y2_ = 0.0;
};

void normalize_peak(std::vector<double>& x) {
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (double& v : x) v /= peak;
  }
}

// Short raised-cosine fades so onsets do not click broadband.
double fade(std::size_t t, std::size_t start, std::size_t stop, std::size_t ramp) {
  if (t < start || t >= stop) return 0.0;
  const std::size_t in = t - start;
  const std::size_t out = stop - 1 - t;
  const std::size_t edge = std::min(in, out);
  if (edge >= ramp) return 1.0;
  return 0.5 - 0.5 * std::cos(kPi * static_cast<double>(edge) / static_cast<double>(ramp));
}

std::vector<double> horn(Rng& rng, std::size_t n) {
  const double f1 = uniform(rng, 400.0, 460.0);
  const double f2 = f1 * uniform(rng, 1.18, 1.26);
  const double p1 = uniform(rng, 0.0, kTwoPi);
  const double p2 = uniform(rng, 0.0, kTwoPi);
  const auto start = static_cast<std::size_t>(uniform(rng, 0.0, 0.15) * static_cast<double>(n));
  std::vector<double> out(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const double env = fade(t, start, n, 441);
    if (env == 0.0) continue;
    const double s = static_cast<double>(t) / kRate;
    double v = 0.0;
    for (int h = 1; h <= 8; ++h) {
      v += std::sin(h * (kTwoPi * f1 * s + p1)) / h + std::sin(h * (kTwoPi * f2 * s + p2)) / h;
    }
    out[t] = env * v;
  }
  return out;
}

std::vector<double> alarm(Rng& rng, std::size_t n) {
  const double f = uniform(rng, 2400.0, 2600.0);
  const auto on = static_cast<std::size_t>(uniform(rng, 0.08, 0.12) * kRate);
  const auto off = static_cast<std::size_t>(uniform(rng, 0.05, 0.08) * kRate);
  const auto shift = static_cast<std::size_t>(uniform(rng, 0.0, 1.0) * static_cast<double>(on + off));
  const double phase = uniform(rng, 0.0, kTwoPi);
  std::vector<double> out(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t pos = (t + shift) % (on + off);
    const double env = fade(pos, 0, on, 220);
    if (env == 0.0) continue;
    const double arg = kTwoPi * f * static_cast<double>(t) / kRate + phase;
    double v = 0.0;
    for (int h = 1; h * f < kRate / 2.0; h += 2) v += std::sin(h * arg) / h;
    out[t] = env * v;
  }
  return out;
}

std::vector<double> ratchet(Rng& rng, std::size_t n) {
  const double period = uniform(rng, 0.012, 0.025);
  const double centre = uniform(rng, 3000.0, 6000.0);
  const double decay = uniform(rng, 0.001, 0.002);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> excitation(n, 0.0);
  double next = uniform(rng, 0.0, period);
  while (next < static_cast<double>(n) / kRate) {
    const auto at = static_cast<std::size_t>(next * kRate);
    const double amp = uniform(rng, 0.6, 1.0);
    for (std::size_t t = at; t < n && t < at + static_cast<std::size_t>(8 * decay * kRate); ++t) {
      excitation[t] += amp * g(rng) * std::exp(-static_cast<double>(t - at) / (decay * kRate));
    }
    next += period * uniform(rng, 0.85, 1.15);
  }
  Resonator res(centre, centre / 4.0);
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) out[t] = res(excitation[t]);
  return out;
}

std::vector<double> gearshift(Rng& rng, std::size_t n) {
  std::normal_distribution<double> g(0.0, 1.0);
  const double low = uniform(rng, 80.0, 250.0);
  const double clunk = uniform(rng, 800.0, 1500.0);
  const int thumps = std::uniform_int_distribution<int>(1, 2)(rng);
  std::vector<double> body(n, 0.0), knock(n, 0.0);
  for (int k = 0; k < thumps; ++k) {
    const auto at = static_cast<std::size_t>(uniform(rng, 0.0, 0.5) * static_cast<double>(n));
    const double tau = uniform(rng, 0.04, 0.08) * kRate;
    const double tau_knock = uniform(rng, 0.005, 0.015) * kRate;
    for (std::size_t t = at; t < n; ++t) {
      const double dt = static_cast<double>(t - at);
      const double e = g(rng);
      body[t] += e * std::exp(-dt / tau);
      knock[t] += 0.3 * e * std::exp(-dt / tau_knock);
    }
  }
  Resonator res_low(low, low / 3.0);
  Resonator res_knock(clunk, clunk / 5.0);
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) out[t] = res_low(body[t]) + res_knock(knock[t]);
  return out;
}

std::vector<double> key(Rng& rng, std::size_t n) {
  std::normal_distribution<double> g(0.0, 1.0);
  const int pings = std::uniform_int_distribution<int>(2, 4)(rng);
  std::vector<double> out(n, 0.0);
  for (int k = 0; k < pings; ++k) {
    const auto at = static_cast<std::size_t>(uniform(rng, 0.0, 0.8) * static_cast<double>(n));
    const double base = uniform(rng, 4000.0, 7000.0);
    const std::array<double, 3> ratios{1.0, uniform(rng, 1.3, 1.5), uniform(rng, 1.7, 2.0)};
    const double tau = uniform(rng, 0.02, 0.06) * kRate;
    const double amp = uniform(rng, 0.5, 1.0);
    std::array<double, 3> phases{};
    for (auto& p : phases) p = uniform(rng, 0.0, kTwoPi);
    for (std::size_t t = at; t < n; ++t) {
      const double dt = static_cast<double>(t - at);
      const double env = amp * std::exp(-dt / tau);
      double v = 0.0;
      for (std::size_t i = 0; i < ratios.size(); ++i) {
        const double f = base * ratios[i];
        if (f < kRate / 2.0) v += std::sin(kTwoPi * f * dt / kRate + phases[i]) / (1.0 + i);
      }
      // Broadband click at the moment of impact.
      const double click = dt < 44.0 ? 0.5 * g(rng) * (1.0 - dt / 44.0) : 0.0;
      out[t] += env * v + amp * click;
    }
  }
  return out;
}

std::vector<double> voice(Rng& rng, std::size_t n) {
  const double f0 = uniform(rng, 100.0, 220.0);
  const double vibrato_hz = uniform(rng, 4.0, 6.0);
  const double vibrato = uniform(rng, 0.01, 0.03);
  Resonator f1(uniform(rng, 400.0, 800.0), 80.0);
  Resonator f2(uniform(rng, 900.0, 2000.0), 120.0);
  Resonator f3(uniform(rng, 2300.0, 3000.0), 180.0);
  const auto start = static_cast<std::size_t>(uniform(rng, 0.0, 0.2) * static_cast<double>(n));
  const auto stop = std::max(start + n / 3, n - static_cast<std::size_t>(uniform(rng, 0.0, 0.2) * static_cast<double>(n)));
  std::vector<double> out(n, 0.0);
  double phase = uniform(rng, 0.0, 1.0);
  for (std::size_t t = 0; t < n; ++t) {
    const double s = static_cast<double>(t) / kRate;
    const double f = f0 * (1.0 + vibrato * std::sin(kTwoPi * vibrato_hz * s));
    phase += f / kRate;
    double pulse = 0.0;
    if (phase >= 1.0) {
      phase -= 1.0;
      pulse = 1.0;
    }
    const double env = fade(t, start, std::min(stop, n), 1323);
    const double x = env * pulse;
    out[t] = f1(x) + 0.7 * f2(x) + 0.4 * f3(x);
  }
  return out;
}

double mean_power(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  return std::inner_product(x.begin(), x.end(), x.begin(), 0.0) / static_cast<double>(x.size());
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") != std::string_view::npos) {
    throw Error(Errc::invalid_argument, "corpus names may not contain commas, quotes or newlines");
  }
  return std::string(s);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

}  // namespace

std::string to_string(SoundFamily family) {
  switch (family) {
    case SoundFamily::horn: return "horn";
    case SoundFamily::alarm: return "alarm";
    case SoundFamily::ratchet: return "ratchet";
    case SoundFamily::gearshift: return "gearshift";
    case SoundFamily::key: return "key";
    case SoundFamily::voice: return "voice";
  }
  return "unknown";
}

SoundFamily sound_family_from_string(const std::string& name) {
  for (auto f : all_sound_families()) {
    if (to_string(f) == name) return f;
  }
  throw Error(Errc::invalid_argument, "unknown sound family '" + name + "'");
}

std::vector<SoundFamily> all_sound_families() {
  return {SoundFamily::horn, SoundFamily::alarm, SoundFamily::ratchet,
          SoundFamily::gearshift, SoundFamily::key, SoundFamily::voice};
}

std::vector<double> synth_sound(SoundFamily family, Rng& rng, std::size_t samples) {
  if (samples == 0) throw Error(Errc::invalid_argument, "clip length must be positive");
  std::vector<double> out;
  switch (family) {
    case SoundFamily::horn: out = horn(rng, samples); break;
    case SoundFamily::alarm: out = alarm(rng, samples); break;
    case SoundFamily::ratchet: out = ratchet(rng, samples); break;
    case SoundFamily::gearshift: out = gearshift(rng, samples); break;
    case SoundFamily::key: out = key(rng, samples); break;
    case SoundFamily::voice: out = voice(rng, samples); break;
  }
  normalize_peak(out);
  return out;
}

std::vector<const SoundClip*> SoundCorpus::clips_with_only(std::size_t label) const {
  std::vector<const SoundClip*> out;
  for (const auto& c : clips) {
    if (c.labels.size() == 1 && c.labels.front() == label) out.push_back(&c);
  }
  return out;
}

SoundCorpus synth_corpus(const CorpusConfig& config, const Renderer& renderer,
                         const BackgroundNoise& noise) {
  if (!(config.snr_min_db <= config.snr_max_db) || !(config.level_min > 0.0) ||
      !(config.level_min <= config.level_max)) {
    throw Error(Errc::invalid_argument, "corpus SNR and level ranges must be ordered and positive");
  }
  const auto families = all_sound_families();
  SoundCorpus corpus;
  for (auto f : families) corpus.labels.push_back(to_string(f));

  std::uniform_int_distribution<std::size_t> direction(0, renderer.directions() - 1);
  // Each clip draws from its own stream so clip i does not depend on the clip count.
  auto scene = [&](std::uint64_t stream, const std::vector<std::size_t>& labels) {
    Rng rng(derive_seed(config.seed, stream));
    PcmStream mix;
    mix.left.assign(config.samples, 0.0);
    mix.right.assign(config.samples, 0.0);
    for (std::size_t k = 0; k < labels.size(); ++k) {
      const auto mono = synth_sound(families[labels[k]], rng, config.samples);
      const PcmStream part = renderer.render(mono, direction(rng));
      const double gain = k == 0 ? 1.0 : std::pow(10.0, uniform(rng, -6.0, 6.0) / 20.0);
      const double rms = std::sqrt(0.5 * (mean_power(part.left) + mean_power(part.right)));
      for (std::size_t t = 0; t < config.samples; ++t) {
        mix.left[t] += gain * part.left[t] / rms;
        mix.right[t] += gain * part.right[t] / rms;
      }
    }
    const double rms = std::sqrt(0.5 * (mean_power(mix.left) + mean_power(mix.right)));
    const double level = std::exp(uniform(rng, std::log(config.level_min), std::log(config.level_max)));
    for (std::size_t t = 0; t < config.samples; ++t) {
      mix.left[t] *= level / rms;
      mix.right[t] *= level / rms;
    }
    add_noise(mix, uniform(rng, config.snr_min_db, config.snr_max_db), noise, rng);
    return mix;
  };

  std::uint64_t stream = 0;
  char name[64];
  for (std::size_t l = 0; l < families.size(); ++l) {
    for (std::size_t i = 0; i < config.clips_per_label; ++i) {
      std::snprintf(name, sizeof name, "%s_%03zu", corpus.labels[l].c_str(), i);
      corpus.clips.push_back({scene(stream++, {l}), {l}, name});
    }
  }
  Rng pick(derive_seed(config.seed, 1ULL << 40));
  std::uniform_int_distribution<std::size_t> label(0, families.size() - 1);
  for (std::size_t i = 0; i < config.mixed_clips; ++i) {
    std::size_t a = label(pick);
    std::size_t b = label(pick);
    while (b == a) b = label(pick);
    if (a > b) std::swap(a, b);
    std::snprintf(name, sizeof name, "mixed_%03zu", i);
    corpus.clips.push_back({scene(stream++, {a, b}), {a, b}, name});
  }
  return corpus;
}

void save_corpus(const SoundCorpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::string labels = "name,directory\n";
  for (const auto& l : corpus.labels) labels += csv_field(l) + "," + csv_field(l) + "\n";
  std::string mixed = "file,labels\n";
  for (const auto& clip : corpus.clips) {
    if (clip.labels.empty()) throw Error(Errc::invalid_argument, "clip without labels");
    fs::path sub;
    if (clip.labels.size() == 1) {
      sub = corpus.labels.at(clip.labels.front());
    } else {
      sub = "mixed";
      std::string names;
      for (std::size_t k = 0; k < clip.labels.size(); ++k) {
        names += (k ? "+" : "") + corpus.labels.at(clip.labels[k]);
      }
      mixed += csv_field(clip.name) + ".wav," + names + "\n";
    }
    fs::create_directories(dir / sub);
    write_wav(dir / sub / (clip.name + ".wav"), clip.stream);
  }
  io::write_text_atomic(dir / "labels.csv", labels);
  io::write_text_atomic(dir / "mixed.csv", mixed);
}

SoundCorpus load_corpus(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(dir / "labels.csv");
  if (!in) throw Error(Errc::io, "cannot open " + (dir / "labels.csv").string());
  SoundCorpus corpus;
  std::vector<std::string> dirs;
  std::string line;
  std::getline(in, line);
  if (line != "name,directory") throw Error(Errc::format, "labels.csv: unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 2) throw Error(Errc::format, "labels.csv: expected name,directory");
    corpus.labels.push_back(f[0]);
    dirs.push_back(f[1]);
  }
  if (corpus.labels.empty()) throw Error(Errc::format, "labels.csv lists no labels");

  for (std::size_t l = 0; l < dirs.size(); ++l) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir / dirs[l])) {
      if (e.path().extension() == ".wav") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());  // directory order is unspecified
    for (const auto& f : files) corpus.clips.push_back({read_wav(f), {l}, f.stem().string()});
  }

  std::ifstream mixed(dir / "mixed.csv");
  if (mixed) {
    std::getline(mixed, line);
    while (std::getline(mixed, line)) {
      if (line.empty()) continue;
      const auto f = split(line, ',');
      if (f.size() != 2) throw Error(Errc::format, "mixed.csv: expected file,labels");
      SoundClip clip{read_wav(dir / "mixed" / f[0]), {}, fs::path(f[0]).stem().string()};
      for (const auto& name : split(f[1], '+')) {
        const auto it = std::find(corpus.labels.begin(), corpus.labels.end(), name);
        if (it == corpus.labels.end()) throw Error(Errc::format, "mixed.csv: unknown label " + name);
        clip.labels.push_back(static_cast<std::size_t>(it - corpus.labels.begin()));
      }
      std::sort(clip.labels.begin(), clip.labels.end());
      corpus.clips.push_back(std::move(clip));
    }
  }
  return corpus;
}

}  // namespace binaural
