#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "binaural/grid.hpp"
#include "binaural/hrtf.hpp"
#include "binaural/render.hpp"
#include "binaural/ssde.hpp"

namespace binaural {

/// Sine, triangle, square and sawtooth at 500, 1000 and 2000 Hz, then white noise.
std::vector<WaveSpec> simulation_conditions(double duration_s);

struct SimulationConfig {
  std::vector<WaveSpec> conditions;  // empty: simulation_conditions()
  std::vector<std::size_t> directions;  // empty: every grid direction
  std::size_t frames = 16;  // analysis frames per trial (also the MUSIC snapshot count)
  double snr_db = 15.0;
  NoiseKind noise = NoiseKind::ego;
  Direction ego_direction = default_ego_noise_direction();
  double sensor_db = -20.0;
  double gate_factor = 10.0;
  double eigratio_threshold = 10.0;
  bool run_ssde = true;
  bool run_music = true;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
};

struct TrialResult {
  std::size_t trial_id = 0;
  std::string condition;
  std::string method;
  std::size_t true_id = 0;
  std::size_t estimated_id = 0;
  double error_deg = 0.0;
  double mirror_error_deg = 0.0;  // against the nearer of truth and its front-back mirror
  // False when no bin qualified; the estimate is then id 0, the argmax of an
  // all-zero map under the lowest-id tie rule.
  bool valid = true;
};

/// One trial per (condition, direction, method); rows ordered by trial id then method.
std::vector<TrialResult> run_simulation(const SsdeModel* model, const HrtfSet& hrtf,
                                        const DirectionGrid& grid, const SimulationConfig& config,
                                        const std::function<void(std::size_t, std::size_t)>&
                                            progress = {});

double mean_angle_error(std::span<const TrialResult> trials);
double mean_mirror_error(std::span<const TrialResult> trials);

enum class Plane { horizontal, median };

std::string to_string(Plane plane);

inline constexpr double kPlaneToleranceDeg = 6.0;

/// Directions counted on a plane: |elevation| < 6 deg for the horizontal plane,
/// azimuth within 6 deg of 0 or 180 for the median plane. Directions within
/// 6 deg of the dividing plane (median resp. horizontal) are excluded.
bool qualifies_for(const Direction& d, Plane plane);

/// Fraction of qualifying trials whose estimate lies on the same side (left
/// vs right for horizontal, above vs below for median) as the truth.
/// Throws invalid_argument when no trial qualifies.
double discrimination_stats(std::span<const TrialResult> trials, const DirectionGrid& grid,
                            Plane plane);

struct ConditionSummary {
  std::string condition;
  std::string method;
  std::size_t trials = 0;
  double mean_error_deg = 0.0;
  double mirror_forgiving_error_deg = 0.0;
};

/// Per (condition, method) means, in first-appearance order.
std::vector<ConditionSummary> summarize(std::span<const TrialResult> trials);

struct DiscriminationRow {
  std::string condition;
  std::string method;
  std::string plane;
  std::size_t trials = 0;
  double accuracy = 0.0;
};

std::vector<DiscriminationRow> discrimination_table(std::span<const TrialResult> trials,
                                                    const DirectionGrid& grid);

void write_trials_csv(std::ostream& out, std::span<const TrialResult> trials);
std::vector<TrialResult> read_trials_csv(std::istream& in);
void write_summary_csv(std::ostream& out, std::span<const ConditionSummary> rows);
void write_discrimination_csv(std::ostream& out, std::span<const DiscriminationRow> rows);

/// Writes trials.csv, summary.csv, discrimination.csv and gnuplot data
/// (mean_error.dat with one row per condition and a column per method,
/// discrimination.dat) into `dir`. Everything is derived from `trials`.
void write_evaluation(const std::filesystem::path& dir, std::span<const TrialResult> trials,
                      const DirectionGrid& grid);

/// Plain-text table of the summary and discrimination rows.
std::string render_report(std::span<const TrialResult> trials, const DirectionGrid& grid);

}  // namespace binaural
