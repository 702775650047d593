#pragma once

// File formats: raw converter dumps, WAV, calibrated geometry JSON, and
// splitting a continuous calibration recording into per-pulse segments.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "droneear/calibration.hpp"
#include "droneear/frontend.hpp"
#include "droneear/geometry.hpp"

namespace droneear {

// Raw file: "DEAR", channel_count u8, sample_rate u32, then interleaved
// little-endian u16 codes.
inline constexpr std::size_t kRawHeaderBytes = 9;

class RawAdcWriter {
 public:
  RawAdcWriter(const std::string& path, int channel_count, double sample_rate);
  void write(const std::vector<std::uint16_t>& interleaved);
  void close();

 private:
  std::ofstream out_;
  int channel_count_;
};

class RawAdcReader {
 public:
  explicit RawAdcReader(const std::string& path);
  int channel_count() const { return channel_count_; }
  double sample_rate() const { return sample_rate_; }
  // Reads up to max_samples per channel into out (replacing it). Returns
  // false at end of file. Throws FormatError on a truncated sample group.
  bool read(std::size_t max_samples, std::vector<std::uint16_t>& out);

 private:
  std::ifstream in_;
  int channel_count_ = 0;
  double sample_rate_ = 0.0;
};

void write_raw_adc(const std::string& path, const RawAdcBlock& block);
RawAdcBlock read_raw_adc(const std::string& path);

struct WavData {
  double sample_rate = kStreamRate;
  std::vector<std::vector<double>> channels;  // [-1, 1]
};

// PCM 16/24/32-bit and IEEE float32.
WavData read_wav(const std::string& path);
// IEEE float32.
void write_wav(const std::string& path, const WavData& data);

// Resamples every channel to 21875 Hz (no-op when already there).
DecimatedStream to_stream(const WavData& wav);

// Reads a whole raw or WAV file ("raw-adc" or "wav"; empty picks by the
// .wav extension) as a decimated stream.
DecimatedStream read_stream(const std::string& path, const std::string& format = "",
                            const LogAmpModel& model = LogAmpModel::standard());

inline constexpr int kGeometryFormatVersion = 1;

void save_geometry(const std::string& path, const ArrayGeometry& geometry,
                   const std::vector<std::string>& warnings = {});
// Throws FormatError on a missing file, bad JSON or a version mismatch.
ArrayGeometry load_geometry(const std::string& path);

struct SegmentOptions {
  double min_gap_s = 0.05;  // silence separating two pulses
  double padding_s = 0.04;  // kept around each active region
};

// Cuts a continuous multi-channel recording into one segment per pulse.
PulseRecordingSet segment_pulses(const DecimatedStream& stream, const SegmentOptions& options = {});

}  // namespace droneear
