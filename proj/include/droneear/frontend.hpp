#pragma once

// Digital front end: log-amp linearization, 64:1 accumulate-and-scale
// decimation, framing, Hann-windowed spectra and PSD normalization.

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "droneear/constants.hpp"

namespace droneear {

// Logarithmic amplifier followed by a 12-bit converter:
//   code = alpha * ln(x / x_min), clamped to [0, code_max]
// with alpha = code_max / ln(x_max / x_min). Amplitudes are in the
// amplifier's linear input domain [x_min, x_max].
struct LogAmpModel {
  double v_ref = 3.3;
  int code_max = kAdcCodeMax;
  double alpha = 0.0;
  double x_min = 0.0;

  static LogAmpModel from_range(double x_min, double x_max, int code_max = kAdcCodeMax,
                                double v_ref = 3.3);
  // 40 dB range, x in [0.01, 1].
  static LogAmpModel standard();

  void validate() const;
  double x_max() const;
  double forward(double x) const;  // continuous code, clamped
  int quantize(double x) const;    // nearest code
  double inverse(double code) const;
  double volts(int code) const { return v_ref * code / code_max; }

  // Operating point for bipolar signals and the largest symmetric swing
  // around it. The front end reports samples as (x - bias) / half_span.
  double bias() const { return 0.5 * (x_min + x_max()); }
  double half_span() const { return 0.5 * (x_max() - x_min); }

  // Linear-domain size of one code step at amplitude x.
  double lsb_at(double x) const { return x / alpha; }
};

// Inverse log-amp map for a single code. Throws InputDomainError when code
// is outside [0, model.code_max].
double linearize(int code, const LogAmpModel& model);

// Mean of exactly 64 samples.
double decimate64(std::span<const double> block);
// Mean of a block of any positive length (32 for the six-microphone
// configuration where each ADC alternates between two inputs).
double decimate_block(std::span<const double> block);

// Per-channel burst of raw converter codes, channel interleaved.
struct RawAdcBlock {
  int channel_count = 3;
  double sample_rate = kAdcRate;
  std::vector<std::uint16_t> codes;

  std::size_t samples_per_channel() const;
  void validate(int decimation = kDecimation) const;
};

// Linear stream at the decimated rate, one vector per channel, in units of
// converter full scale.
struct DecimatedStream {
  double sample_rate = kStreamRate;
  int effective_bits = kEffectiveBits;
  std::vector<std::vector<double>> channels;

  std::size_t length() const { return channels.empty() ? 0 : channels.front().size(); }
};

// Decimation factor for a raw stream: adc_rate / 21875 Hz, must be integral.
int decimation_factor(double adc_rate);

// Streaming converter from interleaved raw codes to a decimated stream.
// Partial decimation blocks are carried across push() calls.
class FrontEnd {
 public:
  FrontEnd(const LogAmpModel& model, int channel_count, double adc_rate = kAdcRate);

  int channel_count() const { return channel_count_; }
  int decimation() const { return decimation_; }
  const LogAmpModel& model() const { return model_; }

  // Appends to out[c] every completed decimated sample of channel c.
  void push(std::span<const std::uint16_t> interleaved, std::vector<std::vector<double>>& out);

 private:
  LogAmpModel model_;
  int channel_count_;
  int decimation_;
  std::array<double, kAdcCodeMax + 1> table_{};
  std::vector<std::uint16_t> pending_;
};

DecimatedStream decode_block(const RawAdcBlock& block, const LogAmpModel& model);

// One-sided spectrum of a Hann-windowed 2048-sample frame. Bins 0..1023.
struct Spectrum {
  std::vector<std::complex<double>> bins;
  std::vector<double> psd;    // |X[k]|^2
  std::vector<double> phase;  // arg X[k]
};

struct SpectrumFrame {
  std::size_t frame_index = 0;
  std::vector<std::vector<double>> time_samples;
  std::vector<Spectrum> channels;
  static constexpr double bin_width = kBinWidthHz;
};

// Periodic Hann window of length 2048.
const std::vector<double>& hann_window();

Spectrum compute_spectrum(std::span<const double> frame);

SpectrumFrame make_spectrum_frame(std::size_t frame_index,
                                  const std::vector<std::vector<double>>& channels,
                                  std::size_t start);

// L1 normalization; throws DegenerateInputError on an all-zero PSD.
std::vector<double> normalize_psd(std::span<const double> psd);

inline std::size_t frame_count(std::size_t stream_samples) { return stream_samples / kFrameLen; }

}  // namespace droneear
