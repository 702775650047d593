#pragma once

// Array self-calibration from a handful of acoustic pulses fired at unknown
// positions near the array: onset detection, pairwise TDOA by
// cross-correlation, endfire distance bound, classical MDS for positions and
// an inverse-square least-squares fit for the microphone gains.

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "droneear/constants.hpp"
#include "droneear/geometry.hpp"

namespace droneear {

// One decimated-rate recording per calibration pulse.
struct PulseRecordingSet {
  double sample_rate = kStreamRate;
  std::vector<std::vector<std::vector<double>>> pulses;  // [pulse][channel][sample]

  std::size_t pulse_count() const { return pulses.size(); }
};

// Onset time (seconds) of the dominant transient on each channel of one
// pulse: first sample whose magnitude exceeds half the channel peak.
// Throws CalibrationSignalError when a channel's peak is below 10x its
// median absolute amplitude.
std::vector<double> detect_onsets(const std::vector<std::vector<double>>& channels,
                                  double sample_rate = kStreamRate);

// [pulse][channel] onsets for a whole recording set.
std::vector<std::vector<double>> detect_pulse_onsets(const PulseRecordingSet& recordings);

struct TdoaOptions {
  double min_correlation = 0.3;
  // Largest lag searched, samples; 0 searches every lag.
  int max_lag = 0;
};

// Delay of `b` relative to `a` in seconds (b(t) = a(t - tau)), from the
// cross-correlation peak refined by a three-point parabola. Throws
// UnreliablePulseError when the normalized peak is below min_correlation.
double estimate_pair_delay(std::span<const double> a, std::span<const double> b,
                           double sample_rate = kStreamRate, const TdoaOptions& options = {},
                           double* peak_correlation = nullptr);

// Antisymmetric matrix tau(i, j) = delay of channel j relative to channel i.
Eigen::MatrixXd estimate_tdoa(const std::vector<std::vector<double>>& pulse,
                              double sample_rate = kStreamRate, const TdoaOptions& options = {});

// d_ij = c * max over pulses |tau_ij|. Throws
// InsufficientCalibrationDataError for fewer than 4 pulses.
Eigen::MatrixXd estimate_pairwise_distances(const std::vector<Eigen::MatrixXd>& tdoas,
                                            double sound_speed = kSoundSpeed);

// Classical (Torgerson) MDS into 3 dimensions. Rows are microphones; the
// result is centred with principal axes along x, y, z.
Eigen::MatrixXd mds_localize(const Eigen::MatrixXd& distances);

// Source position of one pulse from its TDOA matrix and the microphone
// positions. Every position that explains the delays is returned, best fit
// first (in-plane only for planar arrays).
std::vector<Vec3> locate_pulse(const Eigen::MatrixXd& tdoa, const std::vector<Vec3>& mic_positions,
                               double sound_speed = kSoundSpeed);

// Least-squares gains from log E_pi = log S_p - 2 log r_pi + 2 log g_i,
// normalized to unit geometric mean. Throws GainUnobservableError when the
// system has no usable equations.
std::vector<double> calibrate_gains(const PulseRecordingSet& recordings,
                                    const std::vector<Vec3>& mic_positions,
                                    const std::vector<Vec3>& pulse_positions);

struct CalibrationOptions {
  double sound_speed = kSoundSpeed;
  double min_correlation = 0.3;
  // Bounds the TDOA lag search.
  double max_aperture_m = 2.0;
};

struct CalibrationResult {
  ArrayGeometry geometry;
  Eigen::MatrixXd distances;
  std::vector<Vec3> pulse_positions;
  std::size_t pulses_used = 0;
  std::size_t pulses_discarded = 0;
  // Smallest arc (degrees) containing every pulse azimuth.
  double direction_spread_deg = 0.0;
  std::vector<std::string> warnings;
};

// Geometry comes back in a canonical frame: centroid at the origin, mic 0 on
// the +x axis, the array plane as xy and mic 1 at positive y. Azimuths
// reported against this geometry are measured in that frame.
CalibrationResult calibrate(const PulseRecordingSet& recordings, const CalibrationOptions& options = {});

struct ProcrustesResult {
  double rms_error = 0.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

// Best rigid motion (rotation or reflection plus translation) taking
// `estimate` onto `reference`, with the residual RMS distance.
ProcrustesResult procrustes_align(const std::vector<Vec3>& estimate, const std::vector<Vec3>& reference);

// Smallest arc containing all the given azimuths.
double azimuth_spread_deg(std::vector<double> azimuths);

}  // namespace droneear
