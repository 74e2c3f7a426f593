#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace binaural {

/// Unit vector in head coordinates: x front, y left, z up.
struct Direction {
  std::array<double, 3> v{1.0, 0.0, 0.0};

  double x() const { return v[0]; }
  double y() const { return v[1]; }
  double z() const { return v[2]; }

  /// Azimuth in (-180, 180], positive to the left.
  double azimuth_deg() const;
  /// Elevation in [-90, 90].
  double elevation_deg() const;

  static Direction from_angles(double azimuth_deg, double elevation_deg);
  static Direction normalized(double x, double y, double z);
};

/// Great-circle angle in degrees, [0, 180].
double angle_between(const Direction& a, const Direction& b);

/// (x, y, z) -> (-x, y, z).
Direction front_back_mirror(const Direction& d);

/// (x, y, z) -> (x, -y, z); azimuth phi -> -phi.
Direction left_right_mirror(const Direction& d);

/// The shared direction index space. Index k is the canonical direction id.
class DirectionGrid {
 public:
  explicit DirectionGrid(std::vector<Direction> directions);

  std::size_t size() const { return directions_.size(); }
  const Direction& operator[](std::size_t k) const { return directions_[k]; }
  const std::vector<Direction>& directions() const { return directions_; }

  /// FNV-1a over the coordinate bytes.
  std::uint64_t hash() const { return hash_; }

  std::size_t nearest(const Direction& d) const;
  /// Id of the grid direction closest to the front-back mirror of direction k.
  std::size_t mirror_of(std::size_t k) const { return mirror_[k]; }

 private:
  std::vector<Direction> directions_;
  std::vector<std::size_t> mirror_;
  std::uint64_t hash_ = 0;
};

/// 326 points of a spherical Fibonacci lattice, rigidly rotated so that the
/// point nearest the front lands exactly on (1, 0, 0). Deterministic.
DirectionGrid build_direction_grid();

/// Process-wide cached instance of build_direction_grid().
const DirectionGrid& default_grid();

}  // namespace binaural
