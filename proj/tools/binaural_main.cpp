// Command-line front end: one subcommand per workflow.
//
// Exit codes: 0 success, 1 unexpected failure, 2 usage (unknown subcommand
// or flag, malformed value), 3 missing required argument, 4 bad
// configuration (config file or out-of-range parameter), 5 file or format
// error, 6 numerical failure. Failures also print one JSON line on stderr.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "binaural/corpus.hpp"
#include "binaural/detect.hpp"
#include "binaural/error.hpp"
#include "binaural/eval.hpp"
#include "binaural/hrtf.hpp"
#include "binaural/io.hpp"
#include "binaural/music.hpp"
#include "binaural/render.hpp"
#include "binaural/ssde.hpp"
#include "binaural/wav.hpp"

#ifndef BINAURAL_VERSION
#define BINAURAL_VERSION "unknown"
#endif
#ifndef BINAURAL_SOURCE_ID
#define BINAURAL_SOURCE_ID "unknown"
#endif

namespace fs = std::filesystem;
using namespace binaural;

namespace {

enum Exit : int {
  kOk = 0,
  kOther = 1,
  kUsage = 2,
  kMissing = 3,
  kBadConfig = 4,
  kFileError = 5,
  kNumerical = 6,
};

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::invalid_argument:
    case Errc::shape_mismatch: return kBadConfig;
    case Errc::format:
    case Errc::compatibility:
    case Errc::io:
    case Errc::not_power_of_two:
    case Errc::empty_stream: return kFileError;
    case Errc::silent_bin:
    case Errc::silent_channel:
    case Errc::no_valid_frequency:
    case Errc::divergence: return kNumerical;
  }
  return kOther;
}

void error_line(int exit, std::string_view kind, std::string_view message) {
  nlohmann::ordered_json j;
  j["error"] = kind;
  j["exit"] = exit;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
}

std::string argv_line(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
  return s;
}

// Sidecar describing how an artifact was made. Contents are deterministic
// for a given invocation so that reruns also reproduce the manifest.
class Manifest {
 public:
  Manifest(std::string command, std::string invocation) {
    j_["command"] = std::move(command);
    j_["version"] = BINAURAL_VERSION;
    j_["source"] = BINAURAL_SOURCE_ID;
    j_["invocation"] = std::move(invocation);
    j_["parameters"] = nlohmann::ordered_json::object();
    j_["inputs"] = nlohmann::ordered_json::array();
  }

  template <typename T>
  void param(const std::string& key, const T& value) {
    j_["parameters"][key] = value;
  }

  void input(const fs::path& path) {
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx",
                  static_cast<unsigned long long>(io::file_hash(path)));
    j_["inputs"].push_back({{"path", path.string()}, {"fnv1a64", hash}});
  }

  /// `<file>.manifest.json` next to a file, `manifest.json` inside a directory.
  void write_for(const fs::path& artifact) const {
    const fs::path target = fs::is_directory(artifact)
                                ? artifact / "manifest.json"
                                : fs::path(artifact.string() + ".manifest.json");
    io::write_text_atomic(target, j_.dump(2) + "\n");
  }

 private:
  nlohmann::ordered_json j_;
};

std::vector<std::size_t> parse_bins(const std::string& text) {
  std::vector<std::size_t> bins;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const auto v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      bins.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw Error(Errc::invalid_argument, "bin list entry '" + item + "' is not an integer");
    }
  }
  std::sort(bins.begin(), bins.end());
  bins.erase(std::unique(bins.begin(), bins.end()), bins.end());
  return bins;
}

std::string direction_fields(std::size_t id) {
  const auto& d = default_grid()[id];
  char buf[96];
  std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f", id, d.azimuth_deg(), d.elevation_deg());
  return buf;
}

void print_progress(const char* what, std::size_t done, std::size_t total) {
  std::fprintf(stderr, "\r%s %zu/%zu", what, done, total);
  if (done == total) std::fprintf(stderr, "\n");
  std::fflush(stderr);
}

// ---- synth-hrtf -------------------------------------------------------------

struct SynthHrtfArgs {
  fs::path out;
  std::uint64_t seed = 0;
  std::string csv;
};

int run_synth_hrtf(const SynthHrtfArgs& a, const std::string& invocation) {
  const auto& grid = default_grid();
  // The analytic head model has no random parameters; the seed is recorded only.
  const auto set = synthesize_hrtf_set(grid);
  save_hrtf(set, a.out);
  Manifest m("synth-hrtf", invocation);
  m.param("seed", a.seed);
  m.param("directions", grid.size());
  m.param("head_model", HeadModel{}.to_params());
  if (!a.csv.empty()) {
    std::ostringstream csv;
    write_hrtf_csv(csv, set, grid);
    io::write_text_atomic(a.csv, csv.str());
  }
  m.write_for(a.out);
  return kOk;
}

// ---- train-ssde -------------------------------------------------------------

struct TrainSsdeArgs {
  fs::path hrtf;
  fs::path out;
  std::uint64_t seed = 0;
  SsdeConfig config;
  std::string bins;
  bool no_noise = false;
};

int run_train_ssde(TrainSsdeArgs a, const std::string& invocation) {
  const auto& grid = default_grid();
  const auto hrtf = load_hrtf(a.hrtf, grid);
  a.config.seed = a.seed;
  a.config.noise = !a.no_noise;
  if (!a.bins.empty()) a.config.bins = parse_bins(a.bins);
  std::vector<BinTrainingLog> logs;
  const auto model = train_ssde(hrtf, grid, a.config, &logs, [](std::size_t done, std::size_t total) {
    print_progress("trained bins", done, total);
  });
  save_ssde(model, a.out);

  Manifest m("train-ssde", invocation);
  m.input(a.hrtf);
  m.param("seed", a.seed);
  m.param("bins", a.config.bins);
  m.param("hidden", a.config.hidden);
  m.param("examples_per_bin", a.config.examples_per_bin);
  m.param("epochs", a.config.epochs);
  m.param("batch_size", a.config.batch_size);
  m.param("sigma_deg", a.config.sigma_deg);
  m.param("learning_rate", a.config.adam.learning_rate);
  m.param("beta1", a.config.adam.beta1);
  m.param("beta2", a.config.adam.beta2);
  m.param("adam_epsilon", a.config.adam.epsilon);
  m.param("noise", a.config.noise);
  m.param("snr_min_db", a.config.snr_min_db);
  m.param("snr_max_db", a.config.snr_max_db);
  m.param("resample_each_epoch", a.config.resample_each_epoch);
  nlohmann::ordered_json losses = nlohmann::ordered_json::array();
  for (const auto& l : logs) losses.push_back({l.bin, l.initial_loss, l.final_loss});
  m.param("held_out_loss[bin,initial,final]", losses);
  m.write_for(a.out);
  return kOk;
}

// ---- synth-corpus -----------------------------------------------------------

struct SynthCorpusArgs {
  fs::path hrtf;
  fs::path out;
  std::uint64_t seed = 0;
  CorpusConfig config;
  std::string noise = "ego";
};

int run_synth_corpus(SynthCorpusArgs a, const std::string& invocation) {
  const auto& grid = default_grid();
  const auto hrtf = load_hrtf(a.hrtf, grid);
  const Renderer renderer(hrtf);
  const BackgroundNoise noise(noise_kind_from_string(a.noise), hrtf, renderer, grid);
  a.config.seed = a.seed;
  const auto corpus = synth_corpus(a.config, renderer, noise);
  save_corpus(corpus, a.out);
  Manifest m("synth-corpus", invocation);
  m.input(a.hrtf);
  m.param("seed", a.seed);
  m.param("clips_per_label", a.config.clips_per_label);
  m.param("mixed_clips", a.config.mixed_clips);
  m.param("samples", a.config.samples);
  m.param("snr_min_db", a.config.snr_min_db);
  m.param("snr_max_db", a.config.snr_max_db);
  m.param("noise", a.noise);
  m.write_for(a.out);
  return kOk;
}

// ---- train-mel --------------------------------------------------------------

struct TrainMelArgs {
  fs::path corpus;
  fs::path out;
  std::uint64_t seed = 0;
  MelTrainConfig config;
};

int run_train_mel(TrainMelArgs a, const std::string& invocation) {
  const auto corpus = load_corpus(a.corpus);
  a.config.seed = a.seed;
  const auto model = train_melcnn(corpus, a.config, [&](const MelEpochLog& log) {
    std::fprintf(stderr, "epoch %zu/%zu loss %.5f\n", log.epoch, a.config.epochs, log.loss);
  });
  save_melcnn(model, a.out);
  Manifest m("train-mel", invocation);
  m.input(a.corpus / "labels.csv");
  m.param("seed", a.seed);
  m.param("epochs", a.config.epochs);
  m.param("batch_size", a.config.batch_size);
  m.param("learning_rate", a.config.adam.learning_rate);
  m.param("labels", model.labels);
  m.param("clips", corpus.clips.size());
  m.param("characteristic_bins", model.characteristic_bins);
  m.write_for(a.out);
  return kOk;
}

// ---- localize ---------------------------------------------------------------

struct LocalizeArgs {
  fs::path wav;
  fs::path out;
  std::string method = "ssde";
  fs::path model;
  fs::path hrtf;
  fs::path noise_wav;
  std::size_t block = 0;
  double gate = 10.0;
  double eigratio = 10.0;
  std::string bins;
};

NoiseFloor floor_for(const std::vector<BinauralFrame>& frames, const fs::path& noise_wav) {
  if (noise_wav.empty()) return quiet_frame_floor(frames);
  return estimate_noise_floor(binaural_spectra(read_wav(noise_wav)));
}

int run_localize(const LocalizeArgs& a, const std::string& invocation) {
  if (a.method != "ssde" && a.method != "music") {
    throw CLI::ValidationError("--method", "must be 'ssde' or 'music'");
  }
  if (a.method == "ssde" && a.model.empty()) throw CLI::RequiredError("--model (for --method ssde)");
  if (a.method == "music" && a.hrtf.empty()) throw CLI::RequiredError("--hrtf (for --method music)");
  const auto& grid = default_grid();
  const auto frames = binaural_spectra(read_wav(a.wav));
  const std::size_t block = a.block == 0 ? frames.size() : a.block;

  Manifest m("localize", invocation);
  m.input(a.wav);
  m.param("method", a.method);
  m.param("block_frames", block);

  std::string csv = "block,first_frame,frames,method,valid,direction_id,azimuth_deg,elevation_deg,score\n";
  auto row = [&](std::size_t b, std::size_t first, std::size_t n, bool valid, std::size_t id,
                 double score) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,", b, first, n);
    csv += buf + a.method + "," + (valid ? "1," : "0,");
    csv += valid ? direction_fields(id) : std::string(",,");
    std::snprintf(buf, sizeof buf, ",%.17g\n", valid ? score : 0.0);
    csv += buf;
  };

  std::size_t valid_blocks = 0;
  if (a.method == "ssde") {
    const auto model = load_ssde(a.model, grid);
    const auto floor = floor_for(frames, a.noise_wav);
    SsdeLocalizeOptions options;
    options.gate_factor = a.gate;
    options.requested_bins = parse_bins(a.bins);
    m.input(a.model);
    m.param("gate_factor", a.gate);
    m.param("requested_bins", options.requested_bins);
    for (std::size_t first = 0, b = 0; first < frames.size(); first += block, ++b) {
      const std::size_t n = std::min(block, frames.size() - first);
      try {
        const auto est = ssde_localize(model, std::span(frames).subspan(first, n), floor, options);
        row(b, first, n, true, est.estimate.direction, est.estimate.score);
        ++valid_blocks;
      } catch (const Error& e) {
        if (e.code() != Errc::no_valid_frequency) throw;
        row(b, first, n, false, 0, 0.0);
      }
    }
  } else {
    const auto hrtf = load_hrtf(a.hrtf, grid);
    MusicOptions options;
    options.eigratio_threshold = a.eigratio;
    m.input(a.hrtf);
    m.param("eigratio_threshold", a.eigratio);
    for (std::size_t first = 0, b = 0; first < frames.size(); first += block, ++b) {
      const std::size_t n = std::min(block, frames.size() - first);
      try {
        const auto est = music_estimate(std::span(frames).subspan(first, n), hrtf, options);
        row(b, first, n, true, est.direction, est.score);
        ++valid_blocks;
      } catch (const Error& e) {
        if (e.code() != Errc::no_valid_frequency && e.code() != Errc::invalid_argument) throw;
        row(b, first, n, false, 0, 0.0);
      }
    }
  }
  if (valid_blocks == 0) {
    throw Error(Errc::no_valid_frequency, "no block of the recording has a usable frequency bin");
  }
  io::write_text_atomic(a.out, csv);
  m.write_for(a.out);
  return kOk;
}

// ---- detect -----------------------------------------------------------------

struct DetectArgs {
  fs::path wav;
  fs::path model;
  fs::path out;
  fs::path ssde;
  fs::path noise_wav;
  DetectOptions options;
  double gate = 10.0;
};

int run_detect(const DetectArgs& a, const std::string& invocation) {
  const auto stream = read_wav(a.wav);
  const auto model = load_melcnn(a.model);
  auto events = detect(stream, model, a.options);
  Manifest m("detect", invocation);
  m.input(a.wav);
  m.input(a.model);
  m.param("threshold", a.options.threshold);
  m.param("window_hop", a.options.window_hop);
  if (!a.ssde.empty() && stream.size() >= kFftSize) {
    const auto ssde = load_ssde(a.ssde);
    const auto frames = binaural_spectra(stream);
    localize_events(events, frames, ssde, floor_for(frames, a.noise_wav), a.gate);
    m.input(a.ssde);
    m.param("gate_factor", a.gate);
  }
  std::ostringstream out;
  write_events_jsonl(out, events);
  io::write_text_atomic(a.out, out.str());
  m.param("events", events.size());
  m.write_for(a.out);
  return kOk;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  fs::path model;
  fs::path hrtf;
  fs::path out;
  std::uint64_t seed = 0;
  std::string noise = "ego";
  double duration = 0.5;
  std::size_t direction_step = 1;
  bool skip_music = false;
  SimulationConfig config;
};

int run_eval(EvalArgs a, const std::string& invocation) {
  const auto& grid = default_grid();
  const auto hrtf = load_hrtf(a.hrtf, grid);
  const auto model = load_ssde(a.model, grid);
  if (a.direction_step == 0) throw Error(Errc::invalid_argument, "--direction-step must be positive");
  a.config.seed = a.seed;
  a.config.noise = noise_kind_from_string(a.noise);
  a.config.conditions = simulation_conditions(a.duration);
  a.config.run_music = !a.skip_music;
  for (std::size_t k = 0; k < grid.size(); k += a.direction_step) a.config.directions.push_back(k);
  const auto trials = run_simulation(&model, hrtf, grid, a.config, [](std::size_t done, std::size_t total) {
    if (done % 50 == 0 || done == total) print_progress("trials", done, total);
  });
  fs::create_directories(a.out);
  write_evaluation(a.out, trials, grid);
  std::cout << render_report(trials, grid);

  Manifest m("eval", invocation);
  m.input(a.hrtf);
  m.input(a.model);
  m.param("seed", a.seed);
  m.param("noise", a.noise);
  m.param("snr_db", a.config.snr_db);
  m.param("frames", a.config.frames);
  m.param("duration_s", a.duration);
  m.param("direction_step", a.direction_step);
  m.param("gate_factor", a.config.gate_factor);
  m.param("eigratio_threshold", a.config.eigratio_threshold);
  m.param("music", a.config.run_music);
  m.write_for(a.out);
  return kOk;
}

// ---- report -----------------------------------------------------------------

struct ReportArgs {
  fs::path in;
  fs::path out;
};

int run_report(const ReportArgs& a, const std::string& invocation) {
  const fs::path trials_path = fs::is_directory(a.in) ? a.in / "trials.csv" : a.in;
  std::ifstream in(trials_path);
  if (!in) throw Error(Errc::io, "cannot open " + trials_path.string());
  const auto trials = read_trials_csv(in);
  const auto& grid = default_grid();
  const std::string text = render_report(trials, grid);
  std::cout << text;
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_evaluation(a.out, trials, grid);
    io::write_text_atomic(a.out / "report.txt", text);
    Manifest m("report", invocation);
    m.input(trials_path);
    m.write_for(a.out);
  }
  return kOk;
}

// Expands `--config <file>` into `--key=value` arguments placed before the
// remaining arguments, so explicit flags (last one wins) override the file.
// Lines are `key = value`; '#' starts a comment.
std::vector<std::string> expand_config(const std::vector<std::string>& args, const CLI::App& sub) {
  std::vector<std::string> out;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw CLI::ArgumentMismatch("--config needs a file");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
      continue;
    }
    std::ifstream in(path);
    if (!in) throw CLI::ConfigError("cannot read config file " + path);
    std::string line;
    for (int number = 1; std::getline(in, line); ++number) {
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      const std::string key = eq == std::string::npos ? "" : trim(line.substr(0, eq));
      if (key.empty() || key == "config" || sub.get_option_no_throw("--" + key) == nullptr) {
        throw CLI::ConfigError(path + ":" + std::to_string(number) + ": expected key=value with a known " +
                               "option of '" + sub.get_name() + "', got '" + line + "'");
      }
      out.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
    }
  }
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Binaural sound localization and detection toolkit", "binaural"};
  app.require_subcommand(1);
  app.set_version_flag("--version", BINAURAL_VERSION);
  const std::string invocation = argv_line(argc, argv);

  int status = kOk;
  // Repeated options keep the last value, which lets flags override config entries.
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;  // consumed by expand_config before parsing
  auto with_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value file of option defaults for this command");
  };

  SynthHrtfArgs synth;
  auto* s_hrtf = app.add_subcommand("synth-hrtf", "Synthesize the analytic HRTF set");
  with_config(s_hrtf);
  s_hrtf->add_option("--out", synth.out, "Output .hrtf file")->required();
  s_hrtf->add_option("--seed", synth.seed, "Recorded in the manifest (synthesis is deterministic)");
  s_hrtf->add_option("--csv", synth.csv, "Also dump direction,bin,left,right rows");
  s_hrtf->callback([&] { status = run_synth_hrtf(synth, invocation); });

  TrainSsdeArgs ts;
  auto* s_ts = app.add_subcommand("train-ssde", "Train the per-frequency direction networks");
  with_config(s_ts);
  s_ts->add_option("--hrtf", ts.hrtf, "HRTF set")->required();
  s_ts->add_option("--out", ts.out, "Output .ssde model")->required();
  s_ts->add_option("--seed", ts.seed, "Random seed")->required();
  s_ts->add_option("--epochs", ts.config.epochs, "Epochs per bin")->capture_default_str();
  s_ts->add_option("--examples", ts.config.examples_per_bin, "Training examples per bin")
      ->capture_default_str();
  s_ts->add_option("--hidden", ts.config.hidden, "Units per hidden layer")->capture_default_str();
  s_ts->add_option("--batch", ts.config.batch_size, "Minibatch size")->capture_default_str();
  s_ts->add_option("--sigma", ts.config.sigma_deg, "Target width in degrees")->capture_default_str();
  s_ts->add_option("--lr", ts.config.adam.learning_rate, "Adam step size")->capture_default_str();
  s_ts->add_option("--beta1", ts.config.adam.beta1)->capture_default_str();
  s_ts->add_option("--beta2", ts.config.adam.beta2)->capture_default_str();
  s_ts->add_option("--adam-eps", ts.config.adam.epsilon)->capture_default_str();
  s_ts->add_option("--snr-min", ts.config.snr_min_db)->capture_default_str();
  s_ts->add_option("--snr-max", ts.config.snr_max_db)->capture_default_str();
  s_ts->add_flag("--no-noise", ts.no_noise, "Train on noise-free features");
  s_ts->add_flag("--resample", ts.config.resample_each_epoch, "Draw fresh examples every epoch");
  s_ts->add_option("--bins", ts.bins, "Comma-separated FFT bins (default every 4th from 5 to 557)");
  s_ts->add_option("--threads", ts.config.threads, "Worker threads (0: all cores)");
  s_ts->callback([&] { status = run_train_ssde(ts, invocation); });

  SynthCorpusArgs sc;
  auto* s_sc = app.add_subcommand("synth-corpus", "Render the synthetic six-label sound corpus");
  with_config(s_sc);
  s_sc->add_option("--hrtf", sc.hrtf, "HRTF set")->required();
  s_sc->add_option("--out", sc.out, "Output corpus directory")->required();
  s_sc->add_option("--seed", sc.seed, "Random seed")->required();
  s_sc->add_option("--clips", sc.config.clips_per_label, "Single-label clips per label")
      ->capture_default_str();
  s_sc->add_option("--mixed", sc.config.mixed_clips, "Two-label mixtures")->capture_default_str();
  s_sc->add_option("--snr-min", sc.config.snr_min_db)->capture_default_str();
  s_sc->add_option("--snr-max", sc.config.snr_max_db)->capture_default_str();
  s_sc->add_option("--noise", sc.noise, "white | diffuse | ego")->capture_default_str();
  s_sc->callback([&] { status = run_synth_corpus(sc, invocation); });

  TrainMelArgs tm;
  auto* s_tm = app.add_subcommand("train-mel", "Train the mel-spectrogram sound detector");
  with_config(s_tm);
  s_tm->add_option("--corpus", tm.corpus, "Corpus directory")->required();
  s_tm->add_option("--out", tm.out, "Output .melc model")->required();
  s_tm->add_option("--seed", tm.seed, "Random seed")->required();
  s_tm->add_option("--epochs", tm.config.epochs)->capture_default_str();
  s_tm->add_option("--batch", tm.config.batch_size)->capture_default_str();
  s_tm->add_option("--lr", tm.config.adam.learning_rate)->capture_default_str();
  s_tm->callback([&] { status = run_train_mel(tm, invocation); });

  LocalizeArgs lo;
  auto* s_lo = app.add_subcommand("localize", "Estimate source directions in a binaural WAV");
  with_config(s_lo);
  s_lo->add_option("--wav", lo.wav, "Two-channel 44.1 kHz WAV")->required();
  s_lo->add_option("--out", lo.out, "Output CSV")->required();
  s_lo->add_option("--method", lo.method, "ssde | music")->capture_default_str();
  s_lo->add_option("--model", lo.model, "SSDE model (for --method ssde)");
  s_lo->add_option("--hrtf", lo.hrtf, "Steering HRTF set (for --method music)");
  s_lo->add_option("--noise-wav", lo.noise_wav, "Noise-only recording for the SSDE gate floor");
  s_lo->add_option("--block", lo.block, "Frames per estimate (0: whole file)")->capture_default_str();
  s_lo->add_option("--gate", lo.gate, "SSDE gate factor over the noise floor")->capture_default_str();
  s_lo->add_option("--eigratio", lo.eigratio, "MUSIC eigenvalue-ratio threshold")->capture_default_str();
  s_lo->add_option("--bins", lo.bins, "Comma-separated bins to use (SSDE)");
  s_lo->callback([&] { status = run_localize(lo, invocation); });

  DetectArgs de;
  auto* s_de = app.add_subcommand("detect", "Detect labelled sound events in a binaural WAV");
  with_config(s_de);
  s_de->add_option("--wav", de.wav, "Two-channel 44.1 kHz WAV")->required();
  s_de->add_option("--model", de.model, "Detector .melc model")->required();
  s_de->add_option("--out", de.out, "Output JSON lines")->required();
  s_de->add_option("--threshold", de.options.threshold)->capture_default_str();
  s_de->add_option("--hop", de.options.window_hop, "Frames between windows")->capture_default_str();
  s_de->add_option("--ssde", de.ssde, "Also localize each event with this SSDE model");
  s_de->add_option("--noise-wav", de.noise_wav, "Noise-only recording for the SSDE gate floor");
  s_de->add_option("--gate", de.gate)->capture_default_str();
  s_de->callback([&] { status = run_detect(de, invocation); });

  EvalArgs ev;
  auto* s_ev = app.add_subcommand("eval", "Run the simulated localization comparison");
  with_config(s_ev);
  s_ev->add_option("--model", ev.model, "SSDE model")->required();
  s_ev->add_option("--hrtf", ev.hrtf, "HRTF set")->required();
  s_ev->add_option("--out", ev.out, "Output directory")->required();
  s_ev->add_option("--seed", ev.seed, "Random seed")->required();
  s_ev->add_option("--noise", ev.noise, "white | diffuse | ego")->capture_default_str();
  s_ev->add_option("--snr", ev.config.snr_db)->capture_default_str();
  s_ev->add_option("--frames", ev.config.frames, "Analysis frames per trial")->capture_default_str();
  s_ev->add_option("--duration", ev.duration, "Generated source length in seconds")
      ->capture_default_str();
  s_ev->add_option("--direction-step", ev.direction_step, "Use every n-th grid direction")
      ->capture_default_str();
  s_ev->add_option("--gate", ev.config.gate_factor)->capture_default_str();
  s_ev->add_option("--eigratio", ev.config.eigratio_threshold)->capture_default_str();
  s_ev->add_flag("--no-music", ev.skip_music, "Evaluate SSDE only");
  s_ev->add_option("--threads", ev.config.threads, "Worker threads (0: all cores)");
  s_ev->callback([&] { status = run_eval(ev, invocation); });

  ReportArgs re;
  auto* s_re = app.add_subcommand("report", "Summarize a trial table");
  with_config(s_re);
  s_re->add_option("--in", re.in, "Evaluation directory or trials.csv")->required();
  s_re->add_option("--out", re.out, "Directory for summary CSV and gnuplot data");
  s_re->callback([&] { status = run_report(re, invocation); });

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    if (!args.empty() && args.front().rfind("-", 0) != 0) {
      const auto* sub = app.get_subcommand_no_throw(args.front());
      if (sub == nullptr) throw CLI::ExtrasError("unknown subcommand '" + args.front() + "'", CLI::ExitCodes::ExtrasError);
      auto expanded = expand_config({args.begin() + 1, args.end()}, *sub);
      expanded.insert(expanded.begin(), args.front());
      args = std::move(expanded);
    }
    std::reverse(args.begin(), args.end());  // CLI11 consumes a reversed vector
    app.parse(args);
    return status;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::RequiredError& e) {
    error_line(kMissing, "missing_argument", e.what());
    return kMissing;
  } catch (const CLI::ConfigError& e) {
    error_line(kBadConfig, "bad_config", e.what());
    return kBadConfig;
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help();
    error_line(kUsage, "usage", e.what());
    return kUsage;
  } catch (const Error& e) {
    const int code = exit_code_for(e.code());
    error_line(code, to_string(e.code()), e.what());
    return code;
  } catch (const fs::filesystem_error& e) {
    error_line(kFileError, "io", e.what());
    return kFileError;
  } catch (const std::exception& e) {
    error_line(kOther, "internal", e.what());
    return kOther;
  }
}
