#pragma once

// Power gating, energy-based near-field DOA on 200 ms windows, background
// noise tracking, Wiener weighting and a frequency-domain delay-and-sum
// beamformer.

#include <array>
#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "droneear/constants.hpp"
#include "droneear/frontend.hpp"
#include "droneear/geometry.hpp"

namespace droneear {

struct EnergyWindow {
  std::size_t index = 0;
  double timestamp = 0.0;  // window start, seconds
  std::vector<double> energies;
};

// Sum of squares of samples [start, start + 4375) on each channel.
EnergyWindow make_energy_window(std::size_t index, const std::vector<std::vector<double>>& channels,
                                std::size_t start);

inline std::size_t energy_window_count(std::size_t stream_samples) { return stream_samples / kWindowLen; }

// max_i E_i / g_i^2 (the quantity compared against the threshold).
double gate_statistic(const EnergyWindow& window, std::span<const double> gains);
// True iff the gain-compensated energy of any channel exceeds threshold.
bool power_gate(const EnergyWindow& window, std::span<const double> gains, double threshold);

enum class DoaMethod { energy, beamformer };
std::string to_string(DoaMethod m);

struct DoaEstimate {
  double azimuth_deg = 0.0;
  std::optional<double> elevation_deg;
  std::optional<std::array<double, 2>> position_2d;
  double response_power = 0.0;
  DoaMethod method = DoaMethod::energy;
  bool ambiguous = false;
};

struct EnergyGrid {
  int azimuths = 36;
  int ranges = 8;
  double range_min_m = 0.5;
  double range_max_m = 50.0;

  std::vector<double> range_values() const;  // log spaced
};

// Near-field position on a polar grid minimizing
//   sum_i (log(E_i/g_i^2) - (log S - 2 log r_i(x)))^2
// with S profiled out; reports the azimuth of the best cell.
DoaEstimate energy_doa(const EnergyWindow& window, const ArrayGeometry& geometry, const EnergyGrid& grid = {});

struct NoiseProfile {
  std::vector<double> p_nn;
  std::size_t update_count = 0;
};

inline constexpr double kDefaultNoiseLambda = 0.05;

// Exponential average of gated-off frame PSDs; the first call copies psd.
// Throws ContractViolationError when gated_on is true.
NoiseProfile update_noise_profile(const NoiseProfile& profile, std::span<const double> psd, bool gated_on,
                                  double lambda = kDefaultNoiseLambda);

// max(psd - p_nn, 0) per bin; p_nn may be empty (treated as zero).
std::vector<double> estimate_signal_psd(std::span<const double> psd, std::span<const double> p_nn);

// h = p_ss / (p_ss + p_nn), 0 where both vanish. Throws InputDomainError on
// a negative bin.
std::vector<double> wiener_weight(std::span<const double> p_ss, std::span<const double> p_nn);

struct ScanDirection {
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
};

// Far-field steered response power over an azimuth grid (and elevation for
// non-planar arrays).
class DelayAndSumBeamformer {
 public:
  explicit DelayAndSumBeamformer(const ArrayGeometry& geometry, double step_deg = 1.0);

  const ArrayGeometry& geometry() const { return geometry_; }
  bool scans_elevation() const { return !planar_; }
  std::vector<ScanDirection> azimuth_scan() const;

  // Y[k] = sum_i (1/g_i) X_i[k] exp(+j 2 pi f_k tau_i(dir)), bins 0..1023.
  std::vector<std::complex<double>> steer(const std::vector<Spectrum>& channels, const ScanDirection& dir) const;

  // P = sum_k h[k] |Y[k]|^2; empty h means unit weights.
  double response(const std::vector<Spectrum>& channels, std::span<const double> h,
                  const ScanDirection& dir) const;

  DoaEstimate scan(const std::vector<Spectrum>& channels, std::span<const double> h) const;

 private:
  ArrayGeometry geometry_;
  double step_deg_;
  bool planar_;
};

DoaEstimate das_beamform(const SpectrumFrame& frame, const ArrayGeometry& geometry, std::span<const double> h,
                         double step_deg = 1.0);

}  // namespace droneear
