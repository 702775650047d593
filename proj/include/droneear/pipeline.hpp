#pragma once

// Streaming composition of the front end, gate, noise tracker, classifier and
// DOA estimators, emitting JSON lines.

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "droneear/classifier.hpp"
#include "droneear/doa.hpp"
#include "droneear/frontend.hpp"
#include "droneear/geometry.hpp"

namespace droneear {

inline constexpr double kDefaultGateThreshold = 0.5;

struct PipelineSettings {
  double gate_threshold = kDefaultGateThreshold;
  double scan_step_deg = 1.0;
  double noise_lambda = kDefaultNoiseLambda;
};

struct PipelineConfig {
  std::string input_path;
  std::string input_format;  // "raw-adc", "wav" or empty for auto
  std::string geometry_path;
  std::string library_path;
  std::string output_path;  // empty: caller-provided stream
  PipelineSettings settings;
  LogAmpModel logamp = LogAmpModel::standard();

  // Throws ConfigurationError when a referenced file is missing or a
  // setting is out of range.
  void validate() const;
};

struct PipelineSummary {
  std::size_t frames = 0;
  std::size_t frames_gated_on = 0;
  std::size_t windows = 0;
  std::size_t windows_gated_on = 0;
  std::size_t doa_estimates = 0;
  std::size_t seconds_classified = 0;
  std::size_t events = 0;
  double audio_seconds = 0.0;
  double wall_seconds = 0.0;

  double gated_on_ratio() const { return frames ? static_cast<double>(frames_gated_on) / frames : 0.0; }
  double realtime_factor() const { return wall_seconds > 0.0 ? audio_seconds / wall_seconds : 0.0; }
  std::string to_json() const;
};

// Mean over channels of psd_i / g_i^2 (unnormalized).
std::vector<double> combined_psd(const SpectrumFrame& frame, std::span<const double> gains);

// Incremental processor over a decimated stream. Output lines are passed to
// the sink in stream order.
class Pipeline {
 public:
  using Sink = std::function<void(const std::string&)>;

  Pipeline(ArrayGeometry geometry, SignatureLibrary library, PipelineSettings settings, Sink sink);

  // Appends samples (one vector per channel, equal lengths) and processes
  // every completed second.
  void push(const std::vector<std::vector<double>>& samples);
  // Processes the trailing partial second.
  void finish();

  const PipelineSummary& summary() const { return summary_; }
  const NoiseProfile& noise_profile() const { return noise_; }

 private:
  ArrayGeometry geometry_;
  SignatureLibrary library_;
  PipelineSettings settings_;
  Sink sink_;
  DelayAndSumBeamformer beamformer_;

  std::vector<std::vector<double>> buf_;
  std::size_t buf_start_ = 0;  // absolute index of buf_[c][0]
  std::size_t total_ = 0;      // absolute samples received
  std::size_t next_second_ = 0;
  std::size_t next_window_ = 0;
  std::size_t next_frame_ = 0;
  std::vector<bool> window_gate_;
  NoiseProfile noise_;
  TemporalState temporal_;
  std::optional<std::string> latest_doa_;
  PipelineSummary summary_;

  struct FrameOutcome {
    std::size_t index;
    bool gated_on;
    std::optional<FrameResult> result;
    SpectrumFrame spectra;
  };

  void process_until(std::size_t end, bool final);
  std::vector<std::vector<double>> slice(std::size_t start, std::size_t len) const;
  void trim();
};

// Reads the configured input, runs the pipeline and writes JSON lines to
// `out` (or config.output_path). A corrupt stream emits an error line and
// rethrows.
PipelineSummary run_pipeline(const PipelineConfig& config, std::ostream& out);

// Per-channel PSD averaged over every full frame, as CSV: bin_hz then one
// column per channel, 1024 rows. Throws InputDomainError on input shorter
// than one frame.
void emit_plot_data(const DecimatedStream& stream, std::ostream& out);

// Gain-compensated normalized PSDs of every frame whose window passes the
// gate (every frame when threshold <= 0).
std::vector<std::vector<double>> extract_training_frames(const DecimatedStream& stream,
                                                         std::span<const double> gains, double gate_threshold);

// Gate statistic of every 200 ms window.
std::vector<double> window_gate_statistics(const DecimatedStream& stream, std::span<const double> gains);

struct ThresholdSweep {
  double noise_max = 0.0;
  double drone_min = 0.0;
  std::optional<double> proposed;  // geometric midpoint when separable
  struct Row {
    double threshold;
    double false_alarm_rate;
    double detection_rate;
  };
  std::vector<Row> rows;
};

ThresholdSweep sweep_thresholds(const std::vector<double>& noise_stats, const std::vector<double>& drone_stats,
                                int steps = 25);

}  // namespace droneear
