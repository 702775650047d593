#include "droneear/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "droneear/errors.hpp"
#include "droneear/fft.hpp"

namespace droneear {

LogAmpModel LogAmpModel::from_range(double x_min, double x_max, int code_max, double v_ref) {
  if (!(x_min > 0.0) || !(x_max > x_min)) throw InputDomainError("LogAmpModel: need 0 < x_min < x_max");
  LogAmpModel m;
  m.v_ref = v_ref;
  m.code_max = code_max;
  m.x_min = x_min;
  m.alpha = code_max / std::log(x_max / x_min);
  return m;
}

LogAmpModel LogAmpModel::standard() { return from_range(0.01, 1.0); }

void LogAmpModel::validate() const {
  if (!(x_min > 0.0) || !(alpha > 0.0) || code_max <= 0 || !(v_ref > 0.0))
    throw InputDomainError("LogAmpModel: invalid parameters");
}

double LogAmpModel::x_max() const { return x_min * std::exp(code_max / alpha); }

double LogAmpModel::forward(double x) const {
  if (!(x > x_min)) return 0.0;
  const double code = alpha * std::log(x / x_min);
  return std::min(code, static_cast<double>(code_max));
}

int LogAmpModel::quantize(double x) const {
  return static_cast<int>(std::lround(forward(x)));
}

double LogAmpModel::inverse(double code) const { return x_min * std::exp(code / alpha); }

double linearize(int code, const LogAmpModel& model) {
  if (code < 0 || code > model.code_max)
    throw InputDomainError("linearize: code " + std::to_string(code) + " outside [0, " +
                           std::to_string(model.code_max) + "]");
  return model.inverse(code);
}

double decimate64(std::span<const double> block) {
  if (block.size() != static_cast<std::size_t>(kDecimation))
    throw InputDomainError("decimate64: expected 64 samples, got " + std::to_string(block.size()));
  return decimate_block(block);
}

double decimate_block(std::span<const double> block) {
  if (block.empty()) throw InputDomainError("decimate_block: empty block");
  // accumulate, then scale once
  const double acc = std::accumulate(block.begin(), block.end(), 0.0);
  return acc / static_cast<double>(block.size());
}

std::size_t RawAdcBlock::samples_per_channel() const {
  return channel_count > 0 ? codes.size() / static_cast<std::size_t>(channel_count) : 0;
}

void RawAdcBlock::validate(int decimation) const {
  if (channel_count != 3 && channel_count != 6)
    throw InputDomainError("RawAdcBlock: channel_count must be 3 or 6");
  if (codes.size() % static_cast<std::size_t>(channel_count) != 0)
    throw InputDomainError("RawAdcBlock: code count not a multiple of channel_count");
  if (samples_per_channel() % static_cast<std::size_t>(decimation) != 0)
    throw InputDomainError("RawAdcBlock: block length not divisible by decimation factor");
  for (auto c : codes)
    if (c > kAdcCodeMax) throw InputDomainError("RawAdcBlock: code out of range");
}

int decimation_factor(double adc_rate) {
  const double ratio = adc_rate / kStreamRate;
  const long r = std::lround(ratio);
  if (r < 1 || std::abs(ratio - static_cast<double>(r)) > 1e-9)
    throw InputDomainError("ADC rate " + std::to_string(adc_rate) +
                           " Hz is not an integer multiple of 21875 Hz");
  return static_cast<int>(r);
}

FrontEnd::FrontEnd(const LogAmpModel& model, int channel_count, double adc_rate)
    : model_(model), channel_count_(channel_count), decimation_(decimation_factor(adc_rate)) {
  model_.validate();
  if (channel_count_ <= 0) throw InputDomainError("FrontEnd: channel_count must be positive");
  if (model_.code_max != kAdcCodeMax) throw InputDomainError("FrontEnd: only 12-bit codes supported");
  for (int code = 0; code <= kAdcCodeMax; ++code) table_[code] = model_.inverse(code);
}

void FrontEnd::push(std::span<const std::uint16_t> interleaved,
                    std::vector<std::vector<double>>& out) {
  out.resize(channel_count_);
  const std::size_t group = static_cast<std::size_t>(channel_count_) * decimation_;
  const double bias = model_.bias();
  const double inv_span = 1.0 / model_.half_span();
  const double inv_n = 1.0 / decimation_;

  auto consume = [&](const std::uint16_t* p) {
    for (int c = 0; c < channel_count_; ++c) {
      double acc = 0.0;
      for (int j = 0; j < decimation_; ++j) {
        const std::uint16_t code = p[static_cast<std::size_t>(j) * channel_count_ + c];
        if (code > kAdcCodeMax) throw InputDomainError("FrontEnd: code out of range");
        acc += table_[code];
      }
      out[c].push_back((acc * inv_n - bias) * inv_span);
    }
  };

  std::size_t pos = 0;
  if (!pending_.empty()) {
    const std::size_t need = std::min(group - pending_.size(), interleaved.size());
    pending_.insert(pending_.end(), interleaved.begin(), interleaved.begin() + need);
    pos = need;
    if (pending_.size() < group) return;
    consume(pending_.data());
    pending_.clear();
  }
  for (; pos + group <= interleaved.size(); pos += group) consume(interleaved.data() + pos);
  pending_.assign(interleaved.begin() + pos, interleaved.end());
}

DecimatedStream decode_block(const RawAdcBlock& block, const LogAmpModel& model) {
  const int factor = decimation_factor(block.sample_rate);
  block.validate(factor);
  FrontEnd fe(model, block.channel_count, block.sample_rate);
  DecimatedStream s;
  s.channels.resize(block.channel_count);
  fe.push(block.codes, s.channels);
  return s;
}

const std::vector<double>& hann_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kFrameLen);
    for (std::size_t n = 0; n < kFrameLen; ++n)
      v[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / static_cast<double>(kFrameLen));
    return v;
  }();
  return w;
}

Spectrum compute_spectrum(std::span<const double> frame) {
  if (frame.size() != kFrameLen)
    throw InputDomainError("compute_spectrum: expected 2048 samples, got " +
                           std::to_string(frame.size()));
  thread_local RealFft fft(kFrameLen);
  const auto& w = hann_window();
  std::vector<double> windowed(kFrameLen);
  for (std::size_t n = 0; n < kFrameLen; ++n) windowed[n] = frame[n] * w[n];
  auto full = fft.forward(windowed);

  Spectrum s;
  s.bins.assign(full.begin(), full.begin() + kBins);
  s.psd.resize(kBins);
  s.phase.resize(kBins);
  for (std::size_t k = 0; k < kBins; ++k) {
    s.psd[k] = std::norm(s.bins[k]);
    s.phase[k] = std::arg(s.bins[k]);
  }
  return s;
}

SpectrumFrame make_spectrum_frame(std::size_t frame_index,
                                  const std::vector<std::vector<double>>& channels,
                                  std::size_t start) {
  SpectrumFrame f;
  f.frame_index = frame_index;
  for (const auto& ch : channels) {
    if (start + kFrameLen > ch.size()) throw InputDomainError("make_spectrum_frame: frame past end");
    std::span<const double> view(ch.data() + start, kFrameLen);
    f.time_samples.emplace_back(view.begin(), view.end());
    f.channels.push_back(compute_spectrum(view));
  }
  return f;
}

std::vector<double> normalize_psd(std::span<const double> psd) {
  double total = 0.0;
  for (double v : psd) {
    if (!(v >= 0.0)) throw InputDomainError("normalize_psd: negative or NaN bin");
    total += v;
  }
  if (!(total > 0.0)) throw DegenerateInputError("normalize_psd: all-zero PSD");
  std::vector<double> out(psd.begin(), psd.end());
  for (auto& v : out) v /= total;
  return out;
}

}  // namespace droneear
