#include "droneear/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>

#include "droneear/errors.hpp"

namespace droneear {

namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

RealFft::RealFft(std::size_t n) : n_(n) {
  if (n < 2) throw InputDomainError("RealFft: length must be >= 2");
  std::lock_guard<std::mutex> lock(planner_mutex());
  real_buf_ = fftw_alloc_real(n_);
  auto* cbuf = fftw_alloc_complex(n_ / 2 + 1);
  complex_buf_ = cbuf;
  forward_plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n_), real_buf_, cbuf, FFTW_ESTIMATE);
  inverse_plan_ = fftw_plan_dft_c2r_1d(static_cast<int>(n_), cbuf, real_buf_, FFTW_ESTIMATE);
}

RealFft::~RealFft() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
  fftw_free(real_buf_);
  fftw_free(complex_buf_);
}

std::vector<std::complex<double>> RealFft::forward(std::span<const double> x) {
  if (x.size() > n_) throw InputDomainError("RealFft::forward: input longer than transform");
  std::copy(x.begin(), x.end(), real_buf_);
  std::fill(real_buf_ + x.size(), real_buf_ + n_, 0.0);
  fftw_execute(static_cast<fftw_plan>(forward_plan_));
  auto* c = static_cast<fftw_complex*>(complex_buf_);
  std::vector<std::complex<double>> out(spectrum_size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = {c[k][0], c[k][1]};
  return out;
}

std::vector<double> RealFft::inverse(std::span<const std::complex<double>> spectrum) {
  if (spectrum.size() != spectrum_size())
    throw InputDomainError("RealFft::inverse: spectrum size mismatch");
  auto* c = static_cast<fftw_complex*>(complex_buf_);
  for (std::size_t k = 0; k < spectrum.size(); ++k) {
    c[k][0] = spectrum[k].real();
    c[k][1] = spectrum[k].imag();
  }
  // c2r destroys its input; the buffer is refilled on every call.
  fftw_execute(static_cast<fftw_plan>(inverse_plan_));
  std::vector<double> out(real_buf_, real_buf_ + n_);
  const double scale = 1.0 / static_cast<double>(n_);
  for (auto& v : out) v *= scale;
  return out;
}

}  // namespace droneear
