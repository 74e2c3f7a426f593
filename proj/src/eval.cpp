#include "binaural/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>

#include "binaural/error.hpp"
#include "binaural/frontend.hpp"
#include "binaural/io.hpp"
#include "binaural/music.hpp"
#include "binaural/parallel.hpp"

namespace binaural {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

TrialResult make_result(std::size_t trial_id, const std::string& condition,
                        const std::string& method, std::size_t truth, std::size_t estimate,
                        bool valid, const DirectionGrid& grid) {
  TrialResult r;
  r.trial_id = trial_id;
  r.condition = condition;
  r.method = method;
  r.true_id = truth;
  r.estimated_id = estimate;
  r.valid = valid;
  r.error_deg = angle_between(grid[estimate], grid[truth]);
  r.mirror_error_deg = std::min(r.error_deg,
                                angle_between(grid[estimate], front_back_mirror(grid[truth])));
  return r;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

std::vector<WaveSpec> simulation_conditions(double duration_s) {
  std::vector<WaveSpec> out;
  for (auto kind : {WaveKind::sine, WaveKind::triangle, WaveKind::square, WaveKind::sawtooth}) {
    for (double f : {500.0, 1000.0, 2000.0}) out.push_back({kind, f, duration_s, 1.0});
  }
  out.push_back({WaveKind::white_noise, 0.0, duration_s, 1.0});
  return out;
}

std::vector<TrialResult> run_simulation(const SsdeModel* model, const HrtfSet& hrtf,
                                        const DirectionGrid& grid, const SimulationConfig& config,
                                        const std::function<void(std::size_t, std::size_t)>&
                                            progress) {
  if (config.run_ssde && model == nullptr) {
    throw Error(Errc::invalid_argument, "SSDE trials need a trained model");
  }
  if (config.frames < 2) throw Error(Errc::invalid_argument, "trials need at least two frames");
  if (hrtf.directions() != grid.size() || hrtf.grid_hash() != grid.hash()) {
    throw Error(Errc::compatibility, "HRTF set does not match the direction grid");
  }
  const std::size_t n = hrtf.fft_size();
  const std::size_t samples = n + (config.frames - 1) * kHop;
  // The source runs one frame longer on either side, so the FIR has settled
  // inside the analysed excerpt.
  const double duration = static_cast<double>(samples + 2 * n) / kSampleRate;
  auto conditions = config.conditions.empty() ? simulation_conditions(duration) : config.conditions;
  for (auto& c : conditions) c.duration_s = duration;
  std::vector<std::size_t> directions = config.directions;
  if (directions.empty()) {
    for (std::size_t k = 0; k < grid.size(); ++k) directions.push_back(k);
  }

  const Renderer renderer(hrtf);
  const BackgroundNoise noise(config.noise, hrtf, renderer, grid, config.ego_direction,
                              config.sensor_db);

  const std::size_t methods = (config.run_ssde ? 1 : 0) + (config.run_music ? 1 : 0);
  const std::size_t total = conditions.size() * directions.size();
  std::vector<std::vector<TrialResult>> rows(total);
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;

  parallel_for(total, config.threads, [&](std::size_t trial) {
    const auto& cond = conditions[trial / directions.size()];
    const std::size_t truth = directions[trial % directions.size()];
    Rng rng(derive_seed(config.seed, trial));
    const auto mono = gen_wave(cond, rng);
    // Render the padded source, then add noise on the analysed excerpt only.
    const auto full = renderer.render(mono, truth);
    RenderedSource src;
    src.stream.left.assign(full.left.begin() + static_cast<std::ptrdiff_t>(n),
                           full.left.begin() + static_cast<std::ptrdiff_t>(n + samples));
    src.stream.right.assign(full.right.begin() + static_cast<std::ptrdiff_t>(n),
                            full.right.begin() + static_cast<std::ptrdiff_t>(n + samples));
    src.noise_variance = add_noise(src.stream, config.snr_db, noise, rng);
    const auto frames = binaural_spectra(src.stream);
    auto& out = rows[trial];
    out.reserve(methods);
    if (config.run_ssde) {
      SsdeLocalizeOptions opt;
      opt.gate_factor = config.gate_factor;
      std::size_t estimate = 0;
      bool valid = true;
      try {
        estimate =
            ssde_localize(*model, frames, white_noise_floor(src.noise_variance, n), opt)
                .estimate.direction;
      } catch (const Error& e) {
        if (e.code() != Errc::no_valid_frequency) throw;
        valid = false;
      }
      out.push_back(make_result(trial, cond.tag(), "ssde", truth, estimate, valid, grid));
    }
    if (config.run_music) {
      std::size_t estimate = 0;
      bool valid = true;
      try {
        estimate = music_estimate(frames, hrtf, {config.eigratio_threshold}).direction;
      } catch (const Error& e) {
        if (e.code() != Errc::no_valid_frequency) throw;
        valid = false;
      }
      out.push_back(make_result(trial, cond.tag(), "music", truth, estimate, valid, grid));
    }
    const std::size_t finished = ++done;
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(finished, total);
    }
  });

  std::vector<TrialResult> results;
  results.reserve(total * methods);
  for (auto& r : rows) {
    for (auto& t : r) results.push_back(std::move(t));
  }
  return results;
}

double mean_angle_error(std::span<const TrialResult> trials) {
  if (trials.empty()) throw Error(Errc::invalid_argument, "no trials");
  double sum = 0.0;
  for (const auto& t : trials) sum += t.error_deg;
  return sum / static_cast<double>(trials.size());
}

double mean_mirror_error(std::span<const TrialResult> trials) {
  if (trials.empty()) throw Error(Errc::invalid_argument, "no trials");
  double sum = 0.0;
  for (const auto& t : trials) sum += t.mirror_error_deg;
  return sum / static_cast<double>(trials.size());
}

std::string to_string(Plane plane) { return plane == Plane::horizontal ? "horizontal" : "median"; }

bool qualifies_for(const Direction& d, Plane plane) {
  const double el = d.elevation_deg();
  const double az = std::abs(d.azimuth_deg());
  const bool on_horizontal = std::abs(el) < kPlaneToleranceDeg;
  const bool on_median = az < kPlaneToleranceDeg || az > 180.0 - kPlaneToleranceDeg;
  if (plane == Plane::horizontal) return on_horizontal && !on_median;
  return on_median && !on_horizontal;
}

double discrimination_stats(std::span<const TrialResult> trials, const DirectionGrid& grid,
                            Plane plane) {
  std::size_t count = 0, correct = 0;
  for (const auto& t : trials) {
    const auto& truth = grid[t.true_id];
    if (!qualifies_for(truth, plane)) continue;
    const auto& est = grid[t.estimated_id];
    ++count;
    const double a = plane == Plane::horizontal ? truth.y() : truth.z();
    const double b = plane == Plane::horizontal ? est.y() : est.z();
    if ((a > 0.0 && b > 0.0) || (a < 0.0 && b < 0.0)) ++correct;
  }
  if (count == 0) throw Error(Errc::invalid_argument, "no trial lies on the " + to_string(plane) + " plane");
  return static_cast<double>(correct) / static_cast<double>(count);
}

std::vector<ConditionSummary> summarize(std::span<const TrialResult> trials) {
  std::vector<ConditionSummary> rows;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const auto& t : trials) {
    auto key = std::make_pair(t.condition, t.method);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, rows.size()).first;
      rows.push_back({t.condition, t.method, 0, 0.0, 0.0});
    }
    auto& r = rows[it->second];
    ++r.trials;
    r.mean_error_deg += t.error_deg;
    r.mirror_forgiving_error_deg += t.mirror_error_deg;
  }
  for (auto& r : rows) {
    r.mean_error_deg /= static_cast<double>(r.trials);
    r.mirror_forgiving_error_deg /= static_cast<double>(r.trials);
  }
  return rows;
}

std::vector<DiscriminationRow> discrimination_table(std::span<const TrialResult> trials,
                                                    const DirectionGrid& grid) {
  std::vector<DiscriminationRow> rows;
  for (const auto& s : summarize(trials)) {
    std::vector<TrialResult> subset;
    for (const auto& t : trials) {
      if (t.condition == s.condition && t.method == s.method) subset.push_back(t);
    }
    for (auto plane : {Plane::horizontal, Plane::median}) {
      std::size_t n = 0;
      for (const auto& t : subset) n += qualifies_for(grid[t.true_id], plane) ? 1 : 0;
      if (n == 0) continue;
      rows.push_back({s.condition, s.method, to_string(plane), n,
                      discrimination_stats(subset, grid, plane)});
    }
  }
  return rows;
}

void write_trials_csv(std::ostream& out, std::span<const TrialResult> trials) {
  out << "trial_id,condition,method,true_id,estimated_id,error_deg,mirror_error_deg,valid\n";
  for (const auto& t : trials) {
    out << t.trial_id << ',' << t.condition << ',' << t.method << ',' << t.true_id << ','
        << t.estimated_id << ',' << num(t.error_deg) << ',' << num(t.mirror_error_deg) << ','
        << (t.valid ? 1 : 0) << '\n';
  }
}

std::vector<TrialResult> read_trials_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("trial_id,", 0) != 0) {
    throw Error(Errc::format, "trials table lacks its header");
  }
  std::vector<TrialResult> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 8) {
      throw Error(Errc::format, "trials table line " + std::to_string(line_no) + ": expected 8 fields");
    }
    try {
      TrialResult t;
      t.trial_id = std::stoull(f[0]);
      t.condition = f[1];
      t.method = f[2];
      t.true_id = std::stoull(f[3]);
      t.estimated_id = std::stoull(f[4]);
      t.error_deg = std::stod(f[5]);
      t.mirror_error_deg = std::stod(f[6]);
      t.valid = f[7] == "1";
      out.push_back(std::move(t));
    } catch (const std::logic_error&) {
      throw Error(Errc::format, "trials table line " + std::to_string(line_no) + ": bad number");
    }
  }
  return out;
}

void write_summary_csv(std::ostream& out, std::span<const ConditionSummary> rows) {
  out << "condition,method,mean_error_deg,mirror_forgiving_error_deg,trials\n";
  for (const auto& r : rows) {
    out << r.condition << ',' << r.method << ',' << num(r.mean_error_deg) << ','
        << num(r.mirror_forgiving_error_deg) << ',' << r.trials << '\n';
  }
}

void write_discrimination_csv(std::ostream& out, std::span<const DiscriminationRow> rows) {
  out << "condition,method,plane,trials,accuracy\n";
  for (const auto& r : rows) {
    out << r.condition << ',' << r.method << ',' << r.plane << ',' << r.trials << ','
        << num(r.accuracy) << '\n';
  }
}

void write_evaluation(const std::filesystem::path& dir, std::span<const TrialResult> trials,
                      const DirectionGrid& grid) {
  std::filesystem::create_directories(dir);
  const auto summary = summarize(trials);
  const auto disc = discrimination_table(trials, grid);
  std::ostringstream t, s, d;
  write_trials_csv(t, trials);
  write_summary_csv(s, summary);
  write_discrimination_csv(d, disc);
  io::write_text_atomic(dir / "trials.csv", t.str());
  io::write_text_atomic(dir / "summary.csv", s.str());
  io::write_text_atomic(dir / "discrimination.csv", d.str());

  // Grouped like a bar chart: one row per condition, one column per method.
  std::vector<std::string> conditions, methods;
  for (const auto& r : summary) {
    if (std::find(conditions.begin(), conditions.end(), r.condition) == conditions.end()) {
      conditions.push_back(r.condition);
    }
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) {
      methods.push_back(r.method);
    }
  }
  auto grouped = [&](auto value) {
    std::ostringstream o;
    o << "# condition";
    for (const auto& m : methods) o << ' ' << m;
    o << '\n';
    for (const auto& c : conditions) {
      o << c;
      for (const auto& m : methods) {
        auto it = std::find_if(summary.begin(), summary.end(), [&](const ConditionSummary& r) {
          return r.condition == c && r.method == m;
        });
        o << ' ' << (it == summary.end() ? std::string("nan") : num(value(*it)));
      }
      o << '\n';
    }
    return o.str();
  };
  io::write_text_atomic(dir / "mean_error.dat",
                        grouped([](const ConditionSummary& r) { return r.mean_error_deg; }));
  io::write_text_atomic(dir / "mirror_error.dat", grouped([](const ConditionSummary& r) {
                          return r.mirror_forgiving_error_deg;
                        }));
  std::ostringstream dd;
  dd << "# condition method plane accuracy trials\n";
  for (const auto& r : disc) {
    dd << r.condition << ' ' << r.method << ' ' << r.plane << ' ' << num(r.accuracy) << ' '
       << r.trials << '\n';
  }
  io::write_text_atomic(dir / "discrimination.dat", dd.str());
}

std::string render_report(std::span<const TrialResult> trials, const DirectionGrid& grid) {
  std::ostringstream o;
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %-6s %7s %12s %12s\n", "condition", "method", "trials",
                "error_deg", "mirror_deg");
  o << line;
  for (const auto& r : summarize(trials)) {
    std::snprintf(line, sizeof line, "%-14s %-6s %7zu %12s %12s\n", r.condition.c_str(),
                  r.method.c_str(), r.trials, fixed(r.mean_error_deg, 2).c_str(),
                  fixed(r.mirror_forgiving_error_deg, 2).c_str());
    o << line;
  }
  o << '\n';
  std::snprintf(line, sizeof line, "%-14s %-6s %-10s %7s %9s\n", "condition", "method", "plane",
                "trials", "accuracy");
  o << line;
  for (const auto& r : discrimination_table(trials, grid)) {
    std::snprintf(line, sizeof line, "%-14s %-6s %-10s %7zu %9s\n", r.condition.c_str(),
                  r.method.c_str(), r.plane.c_str(), r.trials, fixed(r.accuracy, 3).c_str());
    o << line;
  }
  return o.str();
}

}  // namespace binaural
