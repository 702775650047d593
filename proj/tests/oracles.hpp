#pragma once

// Independent reference implementations for the tests: direct loops, no FFT
// and nothing from the library under test.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

inline constexpr double kPi = std::numbers::pi;

inline std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / n);
  return w;
}

// X[k] = sum_n x[n] exp(-j 2 pi k n / N), k = 0..count-1.
inline std::vector<std::complex<double>> dft(const std::vector<double>& x, std::size_t count) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    long double re = 0.0L, im = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
      // reduce k*i mod n exactly before the trig call
      const auto m = static_cast<long double>((k * i) % n);
      const long double ang = -2.0L * std::numbers::pi_v<long double> * m / static_cast<long double>(n);
      re += x[i] * std::cos(ang);
      im += x[i] * std::sin(ang);
    }
    out[k] = {static_cast<double>(re), static_cast<double>(im)};
  }
  return out;
}

// Sum of sinusoids evaluated at arbitrary times: an exactly band-limited
// signal whose delayed copies need no interpolation.
struct Multitone {
  std::vector<double> freq, amp, phase;

  static Multitone random(std::mt19937_64& rng, int tones, double f_lo, double f_hi) {
    std::uniform_real_distribution<double> uf(f_lo, f_hi), ua(0.3, 1.0), up(0.0, 2.0 * kPi);
    Multitone m;
    for (int i = 0; i < tones; ++i) {
      m.freq.push_back(uf(rng));
      m.amp.push_back(ua(rng));
      m.phase.push_back(up(rng));
    }
    return m;
  }

  double operator()(double t) const {
    double s = 0.0;
    for (std::size_t i = 0; i < freq.size(); ++i) s += amp[i] * std::sin(2.0 * kPi * freq[i] * t + phase[i]);
    return s;
  }

  // Samples n = 0..count-1 at rate fs of the signal delayed by `delay` s,
  // multiplied by a Hann-shaped burst envelope centred at t_c.
  std::vector<double> burst(std::size_t count, double fs, double delay, double t_c, double width) const {
    std::vector<double> y(count);
    for (std::size_t n = 0; n < count; ++n) {
      const double t = static_cast<double>(n) / fs - delay;
      const double u = (t - t_c) / width;
      const double env = std::abs(u) < 0.5 ? std::pow(std::cos(kPi * u), 2) : 0.0;
      y[n] = env * (*this)(t);
    }
    return y;
  }
};

// Lag l maximizing sum_n a[n] b[n + l] by exhaustive search over |l| <= max_lag.
inline long best_integer_lag(const std::vector<double>& a, const std::vector<double>& b, long max_lag) {
  long best = 0;
  double best_v = -1e300;
  const long n = static_cast<long>(a.size());
  for (long l = -max_lag; l <= max_lag; ++l) {
    double s = 0.0;
    for (long i = 0; i < n; ++i)
      if (i + l >= 0 && i + l < static_cast<long>(b.size())) s += a[i] * b[i + l];
    if (s > best_v) {
      best_v = s;
      best = l;
    }
  }
  return best;
}

// Least-squares fit of c0 + c1 cos(wt) + c2 sin(wt); returns residual power
// and fitted sine power.
struct SineFit {
  double signal_power;
  double noise_power;
  double snr_db() const { return 10.0 * std::log10(signal_power / noise_power); }
};

inline SineFit sine_fit(const std::vector<double>& y, double freq, double fs) {
  double m[3][4] = {};
  const std::size_t n = y.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 2.0 * kPi * freq * static_cast<double>(i) / fs;
    const double basis[3] = {1.0, std::cos(w), std::sin(w)};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m[r][c] += basis[r] * basis[c];
      m[r][3] += basis[r] * y[i];
    }
  }
  // Gauss-Jordan on the 3x3 normal equations
  for (int p = 0; p < 3; ++p) {
    int piv = p;
    for (int r = p + 1; r < 3; ++r)
      if (std::abs(m[r][p]) > std::abs(m[piv][p])) piv = r;
    for (int c = 0; c < 4; ++c) std::swap(m[p][c], m[piv][c]);
    for (int r = 0; r < 3; ++r) {
      if (r == p) continue;
      const double f = m[r][p] / m[p][p];
      for (int c = 0; c < 4; ++c) m[r][c] -= f * m[p][c];
    }
  }
  const double c0 = m[0][3] / m[0][0], c1 = m[1][3] / m[1][1], c2 = m[2][3] / m[2][2];
  double resid = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 2.0 * kPi * freq * static_cast<double>(i) / fs;
    const double e = y[i] - (c0 + c1 * std::cos(w) + c2 * std::sin(w));
    resid += e * e;
  }
  return {0.5 * (c1 * c1 + c2 * c2), resid / static_cast<double>(n)};
}

inline double weighted_distance(const std::vector<double>& psd, const std::vector<double>& mean,
                                const std::vector<double>& sd) {
  double d = 0.0;
  for (std::size_t k = 0; k < psd.size(); ++k) d += std::pow((psd[k] - mean[k]) / sd[k], 2);
  return d;
}

}  // namespace oracle
