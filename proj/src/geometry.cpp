#include "droneear/geometry.hpp"

#include <algorithm>
#include <numbers>

#include "droneear/errors.hpp"

namespace droneear {

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;
}

Vec3 centroid(const std::vector<Vec3>& points) {
  Vec3 c{0.0, 0.0, 0.0};
  if (points.empty()) return c;
  for (const auto& p : points) c = c + p;
  return (1.0 / static_cast<double>(points.size())) * c;
}

Vec3 direction(double azimuth_deg, double elevation_deg) {
  const double az = azimuth_deg * kDeg;
  const double el = elevation_deg * kDeg;
  return {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
}

double wrap_degrees(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w < 0.0) w += 360.0;
  if (w >= 360.0) w -= 360.0;
  return w;
}

double azimuth_deg(const Vec3& p) { return wrap_degrees(std::atan2(p[1], p[0]) / kDeg); }

double angular_difference_deg(double a, double b) {
  const double d = wrap_degrees(a - b);
  return std::min(d, 360.0 - d);
}

ArrayGeometry ArrayGeometry::from_positions(std::vector<Vec3> positions, std::vector<double> gains,
                                            double sound_speed) {
  ArrayGeometry g;
  const Vec3 c = centroid(positions);
  for (auto& p : positions) p = p - c;
  g.positions = std::move(positions);
  if (gains.empty()) gains.assign(g.positions.size(), 1.0);
  if (gains.size() != g.positions.size())
    throw PreconditionError("ArrayGeometry: gains and positions differ in length");
  double log_sum = 0.0;
  for (double v : gains) {
    if (!(v > 0.0)) throw PreconditionError("ArrayGeometry: gains must be positive");
    log_sum += std::log(v);
  }
  const double gm = std::exp(log_sum / static_cast<double>(gains.size()));
  for (auto& v : gains) v /= gm;
  g.gains = std::move(gains);
  g.sound_speed = sound_speed;
  return g;
}

void ArrayGeometry::validate() const {
  if (positions.size() < 2) throw PreconditionError("ArrayGeometry: need at least two microphones");
  if (gains.size() != positions.size())
    throw PreconditionError("ArrayGeometry: gains and positions differ in length");
  if (!(sound_speed > 0.0)) throw PreconditionError("ArrayGeometry: sound speed must be positive");
  const double scale = std::max(aperture(), 1e-9);
  const Vec3 c = centroid(positions);
  if (norm(c) > 1e-6 * scale) throw PreconditionError("ArrayGeometry: centroid not at origin");
  double log_sum = 0.0;
  for (double v : gains) {
    if (!(v > 0.0)) throw PreconditionError("ArrayGeometry: gains must be positive");
    log_sum += std::log(v);
  }
  if (std::abs(log_sum) > 1e-6 * static_cast<double>(gains.size()))
    throw PreconditionError("ArrayGeometry: gains must have unit geometric mean");
}

bool ArrayGeometry::is_planar(double relative_tolerance) const {
  const double scale = std::max(aperture(), 1e-12);
  const Vec3 c = centroid(positions);
  return std::all_of(positions.begin(), positions.end(), [&](const Vec3& p) {
    return std::abs(p[2] - c[2]) <= relative_tolerance * scale;
  });
}

double ArrayGeometry::aperture() const {
  double a = 0.0;
  for (std::size_t i = 0; i < positions.size(); ++i)
    for (std::size_t j = i + 1; j < positions.size(); ++j)
      a = std::max(a, distance(positions[i], positions[j]));
  return a;
}

}  // namespace droneear
