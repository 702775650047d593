#include "droneear/interp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "droneear/errors.hpp"

namespace droneear {

namespace {

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

double kaiser(double u, double beta) {
  if (std::abs(u) >= 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - u * u)) / std::cyl_bessel_i(0.0, beta);
}

double kernel_value(double u, const SincKernel& k) {
  return k.cutoff * sinc(k.cutoff * u) * kaiser(u / k.half_width, k.beta);
}

// Continuous kernel tabulated finely, linearly interpolated on lookup.
class KernelTable {
 public:
  KernelTable(const SincKernel& k, int per_unit) : k_(k), per_unit_(per_unit) {
    const int n = k.half_width * per_unit + 2;
    values_.resize(n);
    for (int i = 0; i < n; ++i) values_[i] = kernel_value(static_cast<double>(i) / per_unit, k);
  }
  double operator()(double u) const {
    const double a = std::abs(u) * per_unit_;
    const auto i = static_cast<std::size_t>(a);
    if (i + 1 >= values_.size()) return 0.0;
    const double f = a - static_cast<double>(i);
    return values_[i] + f * (values_[i + 1] - values_[i]);
  }

 private:
  SincKernel k_;
  int per_unit_;
  std::vector<double> values_;
};

}  // namespace

std::vector<double> sinc_taps(double frac, const SincKernel& k) {
  if (k.half_width < 1) throw InputDomainError("sinc_taps: half_width must be >= 1");
  const int h = k.half_width;
  std::vector<double> taps(2 * h);
  double sum = 0.0;
  for (int j = 0; j < 2 * h; ++j) {
    const double u = frac - static_cast<double>(j - h + 1);
    taps[j] = kernel_value(u, k);
    sum += taps[j];
  }
  for (auto& t : taps) t /= sum;
  return taps;
}

double interpolate_at(std::span<const double> x, double position, const SincKernel& k) {
  const double base = std::floor(position);
  const auto taps = sinc_taps(position - base, k);
  const long i0 = static_cast<long>(base) - k.half_width + 1;
  double acc = 0.0;
  for (std::size_t j = 0; j < taps.size(); ++j) {
    const long idx = i0 + static_cast<long>(j);
    if (idx >= 0 && idx < static_cast<long>(x.size())) acc += taps[j] * x[idx];
  }
  return acc;
}

std::vector<double> fractional_delay(std::span<const double> x, double delay, const SincKernel& k) {
  // y[n] = x(n - delay); n - delay = n - whole - frac' with frac' in [0,1)
  const double shift = -delay;
  const double whole = std::floor(shift);
  const double frac = shift - whole;
  const auto taps = sinc_taps(frac, k);
  const long offset = static_cast<long>(whole) - k.half_width + 1;
  std::vector<double> y(x.size(), 0.0);
  const long n_x = static_cast<long>(x.size());
  for (long n = 0; n < n_x; ++n) {
    const long i0 = n + offset;
    double acc = 0.0;
    const long j_lo = std::max(0L, -i0);
    const long j_hi = std::min(static_cast<long>(taps.size()), n_x - i0);
    for (long j = j_lo; j < j_hi; ++j) acc += taps[j] * x[i0 + j];
    y[n] = acc;
  }
  return y;
}

std::vector<double> resample(std::span<const double> x, double in_rate, double out_rate) {
  if (!(in_rate > 0.0) || !(out_rate > 0.0)) throw InputDomainError("resample: rates must be positive");
  if (in_rate == out_rate) return {x.begin(), x.end()};
  SincKernel k;
  k.cutoff = std::min(1.0, out_rate / in_rate) * 0.95;
  k.half_width = static_cast<int>(std::ceil(24.0 / k.cutoff));
  const KernelTable table(k, 512);

  const double step = in_rate / out_rate;
  const auto n_out = static_cast<std::size_t>(std::floor(static_cast<double>(x.size()) / step));
  std::vector<double> y(n_out);
  const long n_x = static_cast<long>(x.size());
  for (std::size_t n = 0; n < n_out; ++n) {
    const double t = static_cast<double>(n) * step;
    const long lo = std::max(0L, static_cast<long>(std::floor(t)) - k.half_width + 1);
    const long hi = std::min(n_x - 1, static_cast<long>(std::floor(t)) + k.half_width);
    double acc = 0.0;
    for (long m = lo; m <= hi; ++m) acc += table(t - static_cast<double>(m)) * x[m];
    y[n] = acc;
  }
  return y;
}

}  // namespace droneear
