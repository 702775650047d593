#pragma once

// Ground-truth scene generation: harmonic + broadband drone sources, free
// field propagation to each microphone, background noise, and emulation of
// the log amplifier and 12-bit converter at 1.4 Msps. Also renders the
// calibration pulse scenes.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "droneear/calibration.hpp"
#include "droneear/constants.hpp"
#include "droneear/frontend.hpp"
#include "droneear/geometry.hpp"
#include "droneear/rng.hpp"

namespace droneear {

struct SourceSpectrumSpec {
  std::string name = "custom";
  double fundamental_hz = 110.0;
  int harmonic_count = 1;
  double harmonic_rolloff_db_per_octave = 6.0;
  // Broadband power relative to the harmonic series; -inf disables it.
  double broadband_level_db = -std::numeric_limits<double>::infinity();
  double band_extent_hz = 10000.0;

  void validate() const;
};

std::vector<std::string> preset_names();
// "quad-large", "quad-mid", "quad-small". Throws ConfigurationError.
SourceSpectrumSpec preset(std::string_view name);

// True microphone placement for a scene (not centered, gains not normalized).
struct MicArray {
  std::vector<Vec3> positions;
  std::vector<double> gains;

  std::size_t size() const { return positions.size(); }
  void validate() const;
};

struct TrajectoryPoint {
  double t = 0.0;
  Vec3 position{};
};

// Linear interpolation in time, clamped at the ends.
Vec3 position_at(const std::vector<TrajectoryPoint>& trajectory, double t);

struct SceneConfig {
  MicArray mics;
  std::optional<SourceSpectrumSpec> source;
  std::vector<TrajectoryPoint> trajectory;
  std::optional<double> noise_db;  // noise RMS in dB re source RMS at 1 m
  std::vector<Vec3> pulses;        // calibration pulse scene when non-empty
  double duration_s = 10.0;
  std::uint64_t seed = 1;
  double sound_speed = kSoundSpeed;
  double adc_full_scale = 4.0;  // source units mapped to converter full scale
  LogAmpModel logamp = LogAmpModel::standard();

  // Plain key=value text, '#' comments. Throws ConfigurationError.
  static SceneConfig parse(std::string_view text);
  static SceneConfig load(const std::string& path);
  void validate() const;
};

// Mono source at 21875 Hz, RMS 1. `preroll` extra samples are prepended so
// that delayed copies are defined from t = 0.
std::vector<double> synth_source(const SourceSpectrumSpec& spec, double duration_s,
                                 std::uint64_t seed, std::size_t preroll = 0);

// Per-microphone signals y_i[n] = g_i * s(n/fs - r_i/c) / max(r_i, 1 m), the
// source position held constant per 200 ms segment. `signal[preroll]` is the
// source sample at t = 0. Throws GeometryError when the source is within
// 0.1 m of a microphone or farther than 1000 m.
std::vector<std::vector<double>> propagate(std::span<const double> signal, std::size_t preroll,
                                           const std::vector<TrajectoryPoint>& trajectory,
                                           const MicArray& mics, double sound_speed = kSoundSpeed);

// Source + propagation + white noise at the decimated rate, source units.
std::vector<std::vector<double>> render_scene(const SceneConfig& config);

struct AdcStats {
  std::size_t clipped = 0;
  std::size_t total = 0;
  bool saturation_warning() const { return total > 0 && clipped * 100 > total; }
};

// Streaming log-amp + converter emulation. Each low-rate sample becomes
// `decimation` high-rate samples by band-limited interpolation, centred on
// the low-rate instant so that 64:1 block averaging adds no delay.
class AdcRenderer {
 public:
  AdcRenderer(std::vector<std::vector<double>> mic_signals, const LogAmpModel& model,
              double full_scale, std::uint64_t seed, int decimation = kDecimation);

  int channel_count() const { return static_cast<int>(signals_.size()); }
  int decimation() const { return decimation_; }
  double adc_rate() const { return kStreamRate * decimation_; }
  std::size_t low_rate_length() const { return length_; }
  bool done() const { return cursor_ >= length_; }
  const AdcStats& stats() const { return stats_; }

  // Renders up to `low_rate_count` further low-rate instants as interleaved
  // codes into `out` (replacing its contents). Returns false when finished.
  bool next(std::size_t low_rate_count, std::vector<std::uint16_t>& out);

  // Linear-domain high-rate samples before quantization for the same
  // instants (reference path for accuracy measurements), channel c.
  std::vector<double> staged(int channel, std::size_t begin, std::size_t count) const;

 private:
  std::vector<std::vector<double>> signals_;
  LogAmpModel model_;
  double full_scale_;
  int decimation_;
  std::size_t length_;
  std::size_t cursor_ = 0;
  struct PhaseTaps {
    long base = 0;
    std::vector<double> taps;
  };
  std::vector<PhaseTaps> phase_taps_;
  std::vector<SceneRng> rngs_;
  AdcStats stats_;

  double upsampled(int channel, std::size_t n, int phase) const;
};

// Renders everything at once (small scenes and tests).
RawAdcBlock logamp_adc(const std::vector<std::vector<double>>& mic_signals, const LogAmpModel& model,
                       std::uint64_t seed, double full_scale = 4.0, AdcStats* stats = nullptr);

struct PulseSceneOptions {
  double click_duration_s = 0.005;
  double padding_s = 0.100;
  double sound_speed = kSoundSpeed;
};

// 5 ms raised-cosine click sampled at 21875 Hz.
std::vector<double> raised_cosine_click(double duration_s);

// Throws DegenerateSceneError on coincident positions, InputDomainError when
// fewer than 4 positions or a position lies outside 0.5-5 m of the centroid.
PulseRecordingSet pulse_scene(const std::vector<Vec3>& pulse_positions, const MicArray& mics,
                              const PulseSceneOptions& options = {});

// Microphone signals of a drone scene, or of a pulse scene (segments
// concatenated) when `pulses` is set, in source units.
std::vector<std::vector<double>> scene_signals(const SceneConfig& config);

// scene_signals -> log-amp converter -> front end.
DecimatedStream render_through_frontend(const SceneConfig& config, AdcStats* stats = nullptr);

}  // namespace droneear
