#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "droneear/constants.hpp"

namespace droneear {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline double distance(const Vec3& a, const Vec3& b) { return norm(a - b); }

Vec3 centroid(const std::vector<Vec3>& points);

// Unit vector for azimuth (degrees, counterclockwise from +x in the xy
// plane) and elevation (degrees above the xy plane).
Vec3 direction(double azimuth_deg, double elevation_deg = 0.0);

// Azimuth of p in [0, 360).
double azimuth_deg(const Vec3& p);
double wrap_degrees(double deg);
// Smallest absolute difference between two azimuths, in degrees.
double angular_difference_deg(double a, double b);

// Calibrated microphone array. Positions are in meters with the centroid at
// the origin; gains are positive with unit geometric mean.
struct ArrayGeometry {
  std::vector<Vec3> positions;
  std::vector<double> gains;
  double sound_speed = kSoundSpeed;

  std::size_t size() const { return positions.size(); }

  // Centers positions and normalizes gains (unit gains when empty).
  static ArrayGeometry from_positions(std::vector<Vec3> positions, std::vector<double> gains = {},
                                      double sound_speed = kSoundSpeed);

  // Throws PreconditionError unless the invariants above hold.
  void validate() const;

  // True when every microphone lies within tolerance of the xy plane
  // through the centroid relative to the aperture.
  bool is_planar(double relative_tolerance = 1e-3) const;
  double aperture() const;
};

}  // namespace droneear
