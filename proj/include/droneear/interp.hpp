#pragma once

// Band-limited interpolation helpers: Kaiser-windowed sinc kernels used for
// fractional delays, 64x upsampling in the ADC emulation and resampling of
// WAV input.

#include <cstddef>
#include <span>
#include <vector>

namespace droneear {

struct SincKernel {
  int half_width = 32;
  double beta = 8.0;
  // Cutoff as a fraction of the input Nyquist (1 = full band).
  double cutoff = 1.0;
};

// Taps h[j], j = 0..2*half-1, weighting x[i - half + 1 + j] to evaluate the
// band-limited signal at position i + frac, frac in [0, 1). Normalized to
// unit DC gain.
std::vector<double> sinc_taps(double frac, const SincKernel& k);

// Band-limited value of x at a real-valued position; samples outside the
// sequence count as zero.
double interpolate_at(std::span<const double> x, double position, const SincKernel& k = {});

// Whole-signal delay by a (possibly fractional) number of samples:
// y[n] = x(n - delay). Leading samples come from zeros.
std::vector<double> fractional_delay(std::span<const double> x, double delay,
                                     const SincKernel& k = {});

// Arbitrary-ratio band-limited resampler.
std::vector<double> resample(std::span<const double> x, double in_rate, double out_rate);

}  // namespace droneear
