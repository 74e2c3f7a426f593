#include "binaural/grid.hpp"

#include <algorithm>
#include <cmath>
#include <span>

#include "binaural/constants.hpp"
#include "binaural/error.hpp"
#include "binaural/io.hpp"

namespace binaural {

double Direction::azimuth_deg() const {
  if (std::abs(v[0]) < 1e-15 && std::abs(v[1]) < 1e-15) return 0.0;
  double az = rad_to_deg(std::atan2(v[1], v[0]));
  if (az <= -180.0) az += 360.0;
  return az;
}

double Direction::elevation_deg() const {
  return rad_to_deg(std::asin(std::clamp(v[2], -1.0, 1.0)));
}

Direction Direction::from_angles(double azimuth_deg, double elevation_deg) {
  const double az = deg_to_rad(azimuth_deg);
  const double el = deg_to_rad(elevation_deg);
  return normalized(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
}

Direction Direction::normalized(double x, double y, double z) {
  const double n = std::sqrt(x * x + y * y + z * z);
  if (!(n > 0.0)) throw Error(Errc::invalid_argument, "zero-length direction");
  return Direction{{x / n, y / n, z / n}};
}

double angle_between(const Direction& a, const Direction& b) {
  const double dot = a.v[0] * b.v[0] + a.v[1] * b.v[1] + a.v[2] * b.v[2];
  return rad_to_deg(std::acos(std::clamp(dot, -1.0, 1.0)));
}

Direction front_back_mirror(const Direction& d) { return Direction{{-d.v[0], d.v[1], d.v[2]}}; }

Direction left_right_mirror(const Direction& d) { return Direction{{d.v[0], -d.v[1], d.v[2]}}; }

DirectionGrid::DirectionGrid(std::vector<Direction> directions)
    : directions_(std::move(directions)) {
  hash_ = io::kFnvOffset;
  for (const auto& d : directions_) {
    hash_ = io::fnv1a(std::as_bytes(std::span(d.v)), hash_);
  }
  mirror_.resize(directions_.size());
  for (std::size_t k = 0; k < directions_.size(); ++k) {
    mirror_[k] = nearest(front_back_mirror(directions_[k]));
  }
}

std::size_t DirectionGrid::nearest(const Direction& d) const {
  std::size_t best = 0;
  double best_dot = -2.0;
  for (std::size_t k = 0; k < directions_.size(); ++k) {
    const auto& g = directions_[k].v;
    const double dot = g[0] * d.v[0] + g[1] * d.v[1] + g[2] * d.v[2];
    if (dot > best_dot) {
      best_dot = dot;
      best = k;
    }
  }
  return best;
}

DirectionGrid build_direction_grid() {
  const std::size_t n = kDirectionCount;
  const double golden_angle = kPi * (3.0 - std::sqrt(5.0));
  std::vector<std::array<double, 3>> points(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
    const double r = std::sqrt(1.0 - z * z);
    const double phi = golden_angle * static_cast<double>(i);
    points[i] = {r * std::cos(phi), r * std::sin(phi), z};
  }

  // Minimal rotation taking the point closest to the front onto (1, 0, 0).
  const auto front_it = std::max_element(points.begin(), points.end(),
                                         [](const auto& a, const auto& b) { return a[0] < b[0]; });
  const auto p = *front_it;
  const std::array<double, 3> axis{0.0, p[2], -p[1]};  // p x (1,0,0)
  const double s = std::sqrt(axis[1] * axis[1] + axis[2] * axis[2]);
  const double c = p[0];
  double rot[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  if (s > 0.0) {
    const double vx[3][3] = {{0, -axis[2], axis[1]}, {axis[2], 0, -axis[0]},
                             {-axis[1], axis[0], 0}};
    const double k = (1.0 - c) / (s * s);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double vv = 0.0;
        for (int m = 0; m < 3; ++m) vv += vx[i][m] * vx[m][j];
        rot[i][j] += vx[i][j] + k * vv;
      }
    }
  }

  std::vector<Direction> dirs;
  dirs.reserve(n);
  for (const auto& q : points) {
    std::array<double, 3> r{};
    for (int i = 0; i < 3; ++i) r[i] = rot[i][0] * q[0] + rot[i][1] * q[1] + rot[i][2] * q[2];
    dirs.push_back(Direction::normalized(r[0], r[1], r[2]));
  }
  const auto front = static_cast<std::size_t>(front_it - points.begin());
  dirs[front] = Direction{{1.0, 0.0, 0.0}};
  return DirectionGrid(std::move(dirs));
}

const DirectionGrid& default_grid() {
  static const DirectionGrid grid = build_direction_grid();
  return grid;
}

}  // namespace binaural
