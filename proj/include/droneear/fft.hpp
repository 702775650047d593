#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace droneear {

// Real-input FFT of a fixed length backed by FFTW. Owns its plans and
// aligned work buffers; not copyable. Execution is reentrant per instance
// only (one thread at a time), plan creation is serialized internally.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }
  std::size_t spectrum_size() const { return n_ / 2 + 1; }

  // X[k] = sum_n x[n] exp(-j 2 pi k n / N), k = 0..N/2. Shorter input is
  // zero padded.
  std::vector<std::complex<double>> forward(std::span<const double> x);

  // Inverse of forward(), scaled by 1/N so that inverse(forward(x)) == x.
  std::vector<double> inverse(std::span<const std::complex<double>> spectrum);

 private:
  std::size_t n_;
  double* real_buf_;
  void* complex_buf_;
  void* forward_plan_;
  void* inverse_plan_;
};

}  // namespace droneear
