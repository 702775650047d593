#include "droneear/doa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "droneear/errors.hpp"

namespace droneear {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

EnergyWindow make_energy_window(std::size_t index, const std::vector<std::vector<double>>& channels,
                                std::size_t start) {
  EnergyWindow w;
  w.index = index;
  w.timestamp = static_cast<double>(start) / kStreamRate;
  for (const auto& ch : channels) {
    if (start + kWindowLen > ch.size()) throw InputDomainError("make_energy_window: window past end of stream");
    double e = 0.0;
    for (std::size_t n = start; n < start + kWindowLen; ++n) e += ch[n] * ch[n];
    w.energies.push_back(e);
  }
  return w;
}

double gate_statistic(const EnergyWindow& window, std::span<const double> gains) {
  if (gains.size() != window.energies.size()) throw PreconditionError("power_gate: gains/channels mismatch");
  double best = 0.0;
  for (std::size_t i = 0; i < gains.size(); ++i) best = std::max(best, window.energies[i] / (gains[i] * gains[i]));
  return best;
}

bool power_gate(const EnergyWindow& window, std::span<const double> gains, double threshold) {
  if (!(threshold > 0.0)) throw InputDomainError("power_gate: threshold must be positive");
  return gate_statistic(window, gains) > threshold;
}

std::string to_string(DoaMethod m) { return m == DoaMethod::energy ? "energy" : "beamformer"; }

std::vector<double> EnergyGrid::range_values() const {
  std::vector<double> r(static_cast<std::size_t>(ranges));
  for (int k = 0; k < ranges; ++k)
    r[k] = ranges == 1 ? range_min_m
                       : range_min_m * std::pow(range_max_m / range_min_m, k / static_cast<double>(ranges - 1));
  return r;
}

DoaEstimate energy_doa(const EnergyWindow& window, const ArrayGeometry& geometry, const EnergyGrid& grid) {
  geometry.validate();
  const std::size_t m = geometry.size();
  if (window.energies.size() != m) throw PreconditionError("energy_doa: window/geometry channel mismatch");
  if (grid.azimuths < 1 || grid.ranges < 1) throw InputDomainError("energy_doa: empty grid");

  std::vector<double> level(m);
  double e_min = std::numeric_limits<double>::infinity(), e_max = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double e = window.energies[i] / (geometry.gains[i] * geometry.gains[i]);
    e_min = std::min(e_min, e);
    e_max = std::max(e_max, e);
    level[i] = std::log(std::max(e, std::numeric_limits<double>::min()));
  }

  const auto ranges = grid.range_values();
  DoaEstimate best;
  best.method = DoaMethod::energy;
  double best_residual = std::numeric_limits<double>::infinity();
  std::vector<double> y(m);
  for (int a = 0; a < grid.azimuths; ++a) {
    const double az = 360.0 * a / grid.azimuths;
    const Vec3 u = direction(az);
    for (double r : ranges) {
      const Vec3 x = r * u;
      double mean = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        y[i] = level[i] + 2.0 * std::log(std::max(distance(x, geometry.positions[i]), 1e-9));
        mean += y[i];
      }
      mean /= static_cast<double>(m);  // profiled log S
      double residual = 0.0;
      for (double v : y) residual += (v - mean) * (v - mean);
      if (residual < best_residual) {
        best_residual = residual;
        best.azimuth_deg = az;
        best.position_2d = std::array<double, 2>{x[0], x[1]};
      }
    }
  }
  best.response_power = -best_residual;
  best.ambiguous = geometry.aperture() > 0.0 && e_max <= 1.01 * e_min;
  return best;
}

NoiseProfile update_noise_profile(const NoiseProfile& profile, std::span<const double> psd, bool gated_on,
                                  double lambda) {
  if (gated_on) throw ContractViolationError("update_noise_profile: frame is gated on");
  if (!(lambda > 0.0) || lambda > 1.0) throw InputDomainError("update_noise_profile: lambda must be in (0, 1]");
  NoiseProfile next;
  next.update_count = profile.update_count + 1;
  if (profile.update_count == 0 || profile.p_nn.size() != psd.size()) {
    next.p_nn.assign(psd.begin(), psd.end());
    return next;
  }
  next.p_nn.resize(psd.size());
  for (std::size_t k = 0; k < psd.size(); ++k) next.p_nn[k] = (1.0 - lambda) * profile.p_nn[k] + lambda * psd[k];
  return next;
}

std::vector<double> estimate_signal_psd(std::span<const double> psd, std::span<const double> p_nn) {
  std::vector<double> out(psd.begin(), psd.end());
  if (p_nn.empty()) return out;
  if (p_nn.size() != psd.size()) throw InputDomainError("estimate_signal_psd: size mismatch");
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::max(out[k] - p_nn[k], 0.0);
  return out;
}

std::vector<double> wiener_weight(std::span<const double> p_ss, std::span<const double> p_nn) {
  if (p_ss.size() != p_nn.size()) throw InputDomainError("wiener_weight: size mismatch");
  std::vector<double> h(p_ss.size());
  for (std::size_t k = 0; k < h.size(); ++k) {
    if (!(p_ss[k] >= 0.0) || !(p_nn[k] >= 0.0)) throw InputDomainError("wiener_weight: negative bin");
    const double total = p_ss[k] + p_nn[k];
    h[k] = total > 0.0 ? p_ss[k] / total : 0.0;
  }
  return h;
}

DelayAndSumBeamformer::DelayAndSumBeamformer(const ArrayGeometry& geometry, double step_deg)
    : geometry_(geometry), step_deg_(step_deg) {
  geometry_.validate();
  if (!(step_deg_ > 0.0) || step_deg_ > 90.0) throw InputDomainError("beamformer: scan step must be in (0, 90]");
  planar_ = geometry_.is_planar();
}

std::vector<ScanDirection> DelayAndSumBeamformer::azimuth_scan() const {
  std::vector<ScanDirection> dirs;
  const int n = static_cast<int>(std::lround(360.0 / step_deg_));
  for (int a = 0; a < n; ++a) dirs.push_back({a * step_deg_, 0.0});
  return dirs;
}

std::vector<std::complex<double>> DelayAndSumBeamformer::steer(const std::vector<Spectrum>& channels,
                                                               const ScanDirection& dir) const {
  if (channels.size() != geometry_.size()) throw PreconditionError("beamformer: channel/geometry mismatch");
  const Vec3 u = direction(dir.azimuth_deg, dir.elevation_deg);
  std::vector<std::complex<double>> y(kBins, {0.0, 0.0});
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (channels[i].bins.size() != kBins) throw InputDomainError("beamformer: spectrum must have 1024 bins");
    const double tau = -dot(geometry_.positions[i], u) / geometry_.sound_speed;
    const std::complex<double> rot = std::polar(1.0, kTwoPi * kBinWidthHz * tau);
    const double inv_g = 1.0 / geometry_.gains[i];
    std::complex<double> z(inv_g, 0.0);
    const auto& x = channels[i].bins;
    for (std::size_t k = 0; k < kBins; ++k) {
      if (k % 256 == 0) z = std::polar(inv_g, kTwoPi * kBinWidthHz * static_cast<double>(k) * tau);
      y[k] += x[k] * z;
      z *= rot;
    }
  }
  return y;
}

double DelayAndSumBeamformer::response(const std::vector<Spectrum>& channels, std::span<const double> h,
                                       const ScanDirection& dir) const {
  if (!h.empty() && h.size() != kBins) throw InputDomainError("beamformer: weights must have 1024 bins");
  const auto y = steer(channels, dir);
  double p = 0.0;
  for (std::size_t k = 0; k < kBins; ++k) p += (h.empty() ? 1.0 : h[k]) * std::norm(y[k]);
  return p;
}

DoaEstimate DelayAndSumBeamformer::scan(const std::vector<Spectrum>& channels, std::span<const double> h) const {
  DoaEstimate est;
  est.method = DoaMethod::beamformer;
  double best = -1.0, worst = std::numeric_limits<double>::infinity();
  ScanDirection best_dir;
  auto visit = [&](const ScanDirection& d) {
    const double p = response(channels, h, d);
    worst = std::min(worst, p);
    if (p > best) {
      best = p;
      best_dir = d;
    }
  };
  if (planar_) {
    for (const auto& d : azimuth_scan()) visit(d);
  } else {
    // coarse elevation rows, then a fine elevation pass at the best azimuth
    const double coarse = std::max(step_deg_, 5.0);
    for (const auto& d : azimuth_scan())
      for (double el = -90.0; el <= 90.0 + 1e-9; el += coarse) visit({d.azimuth_deg, el});
    const double az = best_dir.azimuth_deg;
    const double el0 = best_dir.elevation_deg;
    for (double el = std::max(-90.0, el0 - coarse); el <= std::min(90.0, el0 + coarse) + 1e-9; el += step_deg_)
      visit({az, el});
    est.elevation_deg = best_dir.elevation_deg;
  }
  est.azimuth_deg = best_dir.azimuth_deg;
  est.response_power = best;
  est.ambiguous = !(best > 0.0) || (best - worst) <= 1e-9 * best;
  return est;
}

DoaEstimate das_beamform(const SpectrumFrame& frame, const ArrayGeometry& geometry, std::span<const double> h,
                         double step_deg) {
  return DelayAndSumBeamformer(geometry, step_deg).scan(frame.channels, h);
}

}  // namespace droneear
