#include "droneear/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "droneear/errors.hpp"
#include "droneear/fft.hpp"
#include "droneear/interp.hpp"

namespace droneear {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kNyquist = kStreamRate / 2.0;
constexpr double kReferenceDistance = 1.0;
constexpr double kMinRange = 0.1;
constexpr double kMaxRange = 1000.0;

// Sub-stream identifiers for SceneRng::derive.
enum : std::uint64_t {
  kStreamPhases = 1,
  kStreamBroadband = 2,
  kStreamNoise = 100,
  kStreamDither = 1000,
};

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigurationError("scene config: bad number '" + v + "' for key '" + key + "'");
  }
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& part : split(v, ',')) out.push_back(to_double(key, part));
  return out;
}

std::vector<Vec3> to_points(const std::string& key, const std::string& v) {
  std::vector<Vec3> out;
  for (const auto& item : split(v, ';')) {
    if (item.empty()) continue;
    const auto xs = to_doubles(key, item);
    if (xs.size() != 3) throw ConfigurationError("scene config: '" + key + "' expects x,y,z triples");
    out.push_back({xs[0], xs[1], xs[2]});
  }
  return out;
}

}  // namespace

void SourceSpectrumSpec::validate() const {
  if (!(fundamental_hz > 0.0)) throw ConfigurationError("source: fundamental must be > 0");
  if (harmonic_count < 0) throw ConfigurationError("source: harmonic_count must be >= 0");
  if (!(band_extent_hz > 0.0) || band_extent_hz > kNyquist)
    throw ConfigurationError("source: band_extent must be in (0, 10937.5] Hz");
  if (harmonic_count == 0 && !std::isfinite(broadband_level_db))
    throw ConfigurationError("source: needs harmonics or a broadband component");
}

std::vector<std::string> preset_names() { return {"quad-large", "quad-mid", "quad-small"}; }

SourceSpectrumSpec preset(std::string_view name) {
  SourceSpectrumSpec s;
  s.name = std::string(name);
  s.harmonic_count = 40;
  if (name == "quad-large") {
    // large propellers: low blade-pass frequency, energy concentrated low
    s.fundamental_hz = 110.0;
    s.harmonic_rolloff_db_per_octave = 9.0;
    s.broadband_level_db = -25.0;
    s.band_extent_hz = 4000.0;
  } else if (name == "quad-mid") {
    s.fundamental_hz = 163.0;
    s.harmonic_rolloff_db_per_octave = 6.0;
    s.broadband_level_db = -20.0;
    s.band_extent_hz = 7000.0;
  } else if (name == "quad-small") {
    s.fundamental_hz = 227.0;
    s.harmonic_rolloff_db_per_octave = 3.0;
    s.broadband_level_db = -15.0;
    s.band_extent_hz = 10000.0;
  } else {
    throw ConfigurationError("unknown source preset '" + std::string(name) + "'");
  }
  return s;
}

void MicArray::validate() const {
  if (positions.empty()) throw ConfigurationError("mic array: no microphones");
  if (gains.size() != positions.size())
    throw ConfigurationError("mic array: gains and positions differ in length");
  for (double g : gains)
    if (!(g > 0.0)) throw ConfigurationError("mic array: gains must be positive");
}

Vec3 position_at(const std::vector<TrajectoryPoint>& trajectory, double t) {
  if (trajectory.empty()) throw ConfigurationError("trajectory is empty");
  if (t <= trajectory.front().t) return trajectory.front().position;
  if (t >= trajectory.back().t) return trajectory.back().position;
  auto hi = std::upper_bound(trajectory.begin(), trajectory.end(), t,
                             [](double v, const TrajectoryPoint& p) { return v < p.t; });
  auto lo = hi - 1;
  const double span = hi->t - lo->t;
  const double a = span > 0.0 ? (t - lo->t) / span : 0.0;
  return lo->position + a * (hi->position - lo->position);
}

SceneConfig SceneConfig::parse(std::string_view text) {
  SceneConfig c;
  c.mics.positions.clear();
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigurationError("scene config line " + std::to_string(lineno) + ": expected key = value");
    kv[trim(std::string_view(line).substr(0, eq))] = trim(std::string_view(line).substr(eq + 1));
  }

  SourceSpectrumSpec custom;
  bool custom_used = false;
  double x_min = 0.01, x_max = 1.0;
  for (const auto& [key, value] : kv) {
    if (key == "mics") {
      c.mics.positions = to_points(key, value);
    } else if (key == "gains") {
      c.mics.gains = to_doubles(key, value);
    } else if (key == "source") {
      if (value == "none") c.source.reset();
      else if (value == "custom") custom_used = true;
      else c.source = preset(value);
    } else if (key == "fundamental_hz") {
      custom.fundamental_hz = to_double(key, value);
    } else if (key == "harmonic_count") {
      custom.harmonic_count = static_cast<int>(to_double(key, value));
    } else if (key == "rolloff_db_per_octave") {
      custom.harmonic_rolloff_db_per_octave = to_double(key, value);
    } else if (key == "broadband_db") {
      custom.broadband_level_db =
          value == "none" ? -std::numeric_limits<double>::infinity() : to_double(key, value);
    } else if (key == "band_extent_hz") {
      custom.band_extent_hz = to_double(key, value);
    } else if (key == "position") {
      const auto p = to_points(key, value);
      if (p.size() != 1) throw ConfigurationError("scene config: 'position' expects one x,y,z");
      c.trajectory = {{0.0, p.front()}};
    } else if (key == "trajectory") {
      c.trajectory.clear();
      for (const auto& item : split(value, ';')) {
        if (item.empty()) continue;
        const auto xs = to_doubles(key, item);
        if (xs.size() != 4) throw ConfigurationError("scene config: 'trajectory' expects t,x,y,z");
        c.trajectory.push_back({xs[0], {xs[1], xs[2], xs[3]}});
      }
    } else if (key == "noise_db") {
      if (value == "none") c.noise_db.reset();
      else c.noise_db = to_double(key, value);
    } else if (key == "pulses") {
      c.pulses = to_points(key, value);
    } else if (key == "duration") {
      c.duration_s = to_double(key, value);
    } else if (key == "seed") {
      try {
        c.seed = std::stoull(value);
      } catch (const std::exception&) {
        throw ConfigurationError("scene config: bad seed '" + value + "'");
      }
    } else if (key == "sound_speed") {
      c.sound_speed = to_double(key, value);
    } else if (key == "adc_full_scale") {
      c.adc_full_scale = to_double(key, value);
    } else if (key == "logamp_x_min") {
      x_min = to_double(key, value);
    } else if (key == "logamp_x_max") {
      x_max = to_double(key, value);
    } else {
      throw ConfigurationError("scene config: unknown key '" + key + "'");
    }
  }
  if (custom_used) c.source = custom;
  if (c.mics.gains.empty()) c.mics.gains.assign(c.mics.positions.size(), 1.0);
  c.logamp = LogAmpModel::from_range(x_min, x_max);
  c.validate();
  return c;
}

SceneConfig SceneConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigurationError("cannot open scene config '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

void SceneConfig::validate() const {
  mics.validate();
  if (source) {
    source->validate();
    if (trajectory.empty()) throw ConfigurationError("scene config: source needs a position or trajectory");
  }
  if (!(duration_s > 0.0)) throw ConfigurationError("scene config: duration must be positive");
  if (!(sound_speed > 0.0)) throw ConfigurationError("scene config: sound_speed must be positive");
  if (!(adc_full_scale > 0.0)) throw ConfigurationError("scene config: adc_full_scale must be positive");
  for (std::size_t i = 1; i < trajectory.size(); ++i)
    if (trajectory[i].t < trajectory[i - 1].t)
      throw ConfigurationError("scene config: trajectory times must be nondecreasing");
}

std::vector<double> synth_source(const SourceSpectrumSpec& spec, double duration_s, std::uint64_t seed,
                                 std::size_t preroll) {
  spec.validate();
  if (!(duration_s > 0.0)) throw InputDomainError("synth_source: duration must be positive");
  const std::size_t n = static_cast<std::size_t>(std::llround(duration_s * kStreamRate)) + preroll;
  std::vector<double> x(n, 0.0);

  SceneRng phases(SceneRng::derive(seed, kStreamPhases));
  double harmonic_power = 0.0;
  for (int k = 1; k <= spec.harmonic_count; ++k) {
    const double f = k * spec.fundamental_hz;
    const double phase0 = kTwoPi * phases.uniform();
    if (f >= kNyquist) continue;  // truncated from the series
    const double amp = std::pow(10.0, -spec.harmonic_rolloff_db_per_octave * std::log2(k) / 20.0);
    harmonic_power += 0.5 * amp * amp;
    const double w = kTwoPi * f / kStreamRate;
    // Phasor recursion, re-anchored every 4096 samples.
    const std::complex<double> step = std::polar(1.0, w);
    std::complex<double> z;
    for (std::size_t i = 0; i < n; ++i) {
      if (i % 4096 == 0) z = std::polar(1.0, std::fmod(w * static_cast<double>(i), kTwoPi) + phase0);
      x[i] += amp * z.imag();
      z *= step;
    }
  }

  if (std::isfinite(spec.broadband_level_db)) {
    const std::size_t m = next_pow2(n);
    SceneRng rng(SceneRng::derive(seed, kStreamBroadband));
    std::vector<double> white(m);
    for (auto& v : white) v = rng.gaussian();
    RealFft fft(m);
    auto spectrum = fft.forward(white);
    const double df = kStreamRate / static_cast<double>(m);
    for (std::size_t k = 0; k < spectrum.size(); ++k) {
      const double f = k * df;
      if (k == 0 || f > spec.band_extent_hz) spectrum[k] = 0.0;
    }
    auto band = fft.inverse(spectrum);
    band.resize(n);
    double p = 0.0;
    for (double v : band) p += v * v;
    p /= static_cast<double>(n);
    const double target = (harmonic_power > 0.0 ? harmonic_power : 1.0) *
                          std::pow(10.0, spec.broadband_level_db / 10.0);
    const double scale = p > 0.0 ? std::sqrt(target / p) : 0.0;
    for (std::size_t i = 0; i < n; ++i) x[i] += scale * band[i];
  }

  double ms = 0.0;
  for (double v : x) ms += v * v;
  ms /= static_cast<double>(n);
  if (ms > 0.0) {
    const double g = 1.0 / std::sqrt(ms);
    for (auto& v : x) v *= g;
  }
  return x;
}

std::vector<std::vector<double>> propagate(std::span<const double> signal, std::size_t preroll,
                                           const std::vector<TrajectoryPoint>& trajectory,
                                           const MicArray& mics, double sound_speed) {
  mics.validate();
  if (preroll > signal.size()) throw InputDomainError("propagate: preroll longer than signal");
  const std::size_t out_len = signal.size() - preroll;
  const SincKernel kernel{};
  const long h = kernel.half_width;
  std::vector<std::vector<double>> out(mics.size(), std::vector<double>(out_len, 0.0));
  const long n_sig = static_cast<long>(signal.size());

  for (std::size_t seg = 0; seg < out_len; seg += kWindowLen) {
    const std::size_t len = std::min(kWindowLen, out_len - seg);
    const double t_mid = (static_cast<double>(seg) + 0.5 * static_cast<double>(len)) / kStreamRate;
    const Vec3 src = position_at(trajectory, t_mid);
    for (std::size_t i = 0; i < mics.size(); ++i) {
      const double r = distance(src, mics.positions[i]);
      if (r < kMinRange) throw GeometryError("propagate: source within 0.1 m of microphone " + std::to_string(i));
      if (r > kMaxRange) throw GeometryError("propagate: source farther than 1000 m");
      const double amp = mics.gains[i] / std::max(r, kReferenceDistance);
      // value at signal index preroll + n - delay
      const double pos0 = static_cast<double>(preroll) - r / sound_speed * kStreamRate;
      const double base = std::floor(pos0);
      const auto taps = sinc_taps(pos0 - base, kernel);
      const long offset = static_cast<long>(base) - h + 1;
      auto& y = out[i];
      for (std::size_t n = seg; n < seg + len; ++n) {
        const long i0 = static_cast<long>(n) + offset;
        double acc = 0.0;
        if (i0 >= 0 && i0 + 2 * h <= n_sig) {
          for (long j = 0; j < 2 * h; ++j) acc += taps[j] * signal[i0 + j];
        } else {
          for (long j = 0; j < 2 * h; ++j) {
            const long idx = i0 + j;
            if (idx >= 0 && idx < n_sig) acc += taps[j] * signal[idx];
          }
        }
        y[n] = amp * acc;
      }
    }
  }
  return out;
}

namespace {

void add_scene_noise(std::vector<std::vector<double>>& mics, const SceneConfig& config) {
  if (!config.noise_db) return;
  const double rms = std::pow(10.0, *config.noise_db / 20.0);
  for (std::size_t i = 0; i < mics.size(); ++i) {
    SceneRng rng(SceneRng::derive(config.seed, kStreamNoise + i));
    const double g = config.mics.gains[i] * rms;
    for (auto& v : mics[i]) v += g * rng.gaussian();
  }
}

}  // namespace

std::vector<std::vector<double>> render_scene(const SceneConfig& config) {
  config.validate();
  const std::size_t n = static_cast<std::size_t>(std::llround(config.duration_s * kStreamRate));
  std::vector<std::vector<double>> mics;
  if (config.source) {
    double max_r = 0.0;
    for (const auto& tp : config.trajectory)
      for (const auto& m : config.mics.positions) max_r = std::max(max_r, distance(tp.position, m));
    const auto preroll =
        static_cast<std::size_t>(std::ceil(max_r / config.sound_speed * kStreamRate)) + 64;
    const auto src = synth_source(*config.source, config.duration_s, config.seed, preroll);
    mics = propagate(src, preroll, config.trajectory, config.mics, config.sound_speed);
  } else {
    mics.assign(config.mics.size(), std::vector<double>(n, 0.0));
  }
  add_scene_noise(mics, config);
  return mics;
}

AdcRenderer::AdcRenderer(std::vector<std::vector<double>> mic_signals, const LogAmpModel& model,
                         double full_scale, std::uint64_t seed, int decimation)
    : signals_(std::move(mic_signals)), model_(model), full_scale_(full_scale), decimation_(decimation) {
  model_.validate();
  if (signals_.empty()) throw InputDomainError("AdcRenderer: no channels");
  if (!(full_scale_ > 0.0)) throw InputDomainError("AdcRenderer: full scale must be positive");
  if (decimation_ < 1) throw InputDomainError("AdcRenderer: decimation must be >= 1");
  length_ = signals_.front().size();
  for (const auto& s : signals_)
    if (s.size() != length_) throw InputDomainError("AdcRenderer: channel lengths differ");

  SincKernel k;
  k.half_width = 16;
  // High-rate sample j of block n sits at n + (j - (D-1)/2) / D.
  for (int j = 0; j < decimation_; ++j) {
    const double offset = (j - 0.5 * (decimation_ - 1)) / decimation_;
    const double base = std::floor(offset);
    phase_taps_.push_back({static_cast<long>(base), sinc_taps(offset - base, k)});
  }
  for (std::size_t c = 0; c < signals_.size(); ++c)
    rngs_.emplace_back(SceneRng::derive(seed, kStreamDither + c));
}

double AdcRenderer::upsampled(int channel, std::size_t n, int phase) const {
  const auto& [base, taps] = phase_taps_[phase];
  const long width = static_cast<long>(taps.size());
  const long h = width / 2;
  const long i0 = static_cast<long>(n) + base - h + 1;
  const auto& s = signals_[channel];
  const long len = static_cast<long>(s.size());
  double acc = 0.0;
  if (i0 >= 0 && i0 + width <= len) {
    const double* p = s.data() + i0;
    for (long j = 0; j < width; ++j) acc += taps[j] * p[j];
  } else {
    for (long j = 0; j < width; ++j) {
      const long idx = i0 + j;
      if (idx >= 0 && idx < len) acc += taps[j] * s[idx];
    }
  }
  return acc;
}

std::vector<double> AdcRenderer::staged(int channel, std::size_t begin, std::size_t count) const {
  std::vector<double> out;
  out.reserve(count * decimation_);
  const double bias = model_.bias();
  const double span = model_.half_span() / full_scale_;
  for (std::size_t n = begin; n < std::min(begin + count, length_); ++n)
    for (int j = 0; j < decimation_; ++j) out.push_back(bias + span * upsampled(channel, n, j));
  return out;
}

bool AdcRenderer::next(std::size_t low_rate_count, std::vector<std::uint16_t>& out) {
  out.clear();
  if (done()) return false;
  const std::size_t end = std::min(length_, cursor_ + low_rate_count);
  const int channels = channel_count();
  out.reserve((end - cursor_) * decimation_ * channels);
  const double bias = model_.bias();
  const double span = model_.half_span() / full_scale_;
  const double x_lo = model_.x_min;
  const double x_hi = model_.x_max();
  std::vector<double> values(channels);
  for (std::size_t n = cursor_; n < end; ++n) {
    for (int j = 0; j < decimation_; ++j) {
      for (int c = 0; c < channels; ++c) {
        const double x = bias + span * upsampled(c, n, j);
        if (x <= x_lo || x >= x_hi) ++stats_.clipped;
        const double dither = rngs_[c].uniform() - 0.5;
        const long code = std::lround(model_.forward(x) + dither);
        out.push_back(static_cast<std::uint16_t>(std::clamp<long>(code, 0, model_.code_max)));
      }
    }
  }
  stats_.total += (end - cursor_) * decimation_ * channels;
  cursor_ = end;
  return true;
}

RawAdcBlock logamp_adc(const std::vector<std::vector<double>>& mic_signals, const LogAmpModel& model,
                       std::uint64_t seed, double full_scale, AdcStats* stats) {
  AdcRenderer r(mic_signals, model, full_scale, seed);
  RawAdcBlock block;
  block.channel_count = r.channel_count();
  block.sample_rate = r.adc_rate();
  r.next(r.low_rate_length(), block.codes);
  if (stats) *stats = r.stats();
  return block;
}

std::vector<double> raised_cosine_click(double duration_s) {
  const auto n = static_cast<std::size_t>(std::llround(duration_s * kStreamRate));
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i)
    c[i] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(n));
  return c;
}

PulseRecordingSet pulse_scene(const std::vector<Vec3>& pulse_positions, const MicArray& mics,
                              const PulseSceneOptions& options) {
  mics.validate();
  if (pulse_positions.size() < 4) throw InputDomainError("pulse_scene: need at least 4 pulse positions");
  const Vec3 center = centroid(mics.positions);
  for (std::size_t a = 0; a < pulse_positions.size(); ++a) {
    const double r = distance(pulse_positions[a], center);
    if (r < 0.5 || r > 5.0)
      throw InputDomainError("pulse_scene: pulse " + std::to_string(a) + " not within 0.5-5 m of the array");
    for (std::size_t b = 0; b < a; ++b)
      if (distance(pulse_positions[a], pulse_positions[b]) < 1e-6)
        throw DegenerateSceneError("pulse_scene: coincident pulse positions");
  }
  const auto click = raised_cosine_click(options.click_duration_s);
  const auto pad = static_cast<std::size_t>(std::llround(options.padding_s * kStreamRate));
  std::vector<double> segment(2 * pad + click.size(), 0.0);
  std::copy(click.begin(), click.end(), segment.begin() + static_cast<long>(pad));

  PulseRecordingSet set;
  for (const auto& p : pulse_positions)
    set.pulses.push_back(propagate(segment, 0, {{0.0, p}}, mics, options.sound_speed));
  return set;
}

std::vector<std::vector<double>> scene_signals(const SceneConfig& config) {
  if (config.pulses.empty()) return render_scene(config);
  config.validate();
  PulseSceneOptions opt;
  opt.sound_speed = config.sound_speed;
  const auto set = pulse_scene(config.pulses, config.mics, opt);
  std::vector<std::vector<double>> mics(config.mics.size());
  for (const auto& pulse : set.pulses)
    for (std::size_t c = 0; c < mics.size(); ++c) mics[c].insert(mics[c].end(), pulse[c].begin(), pulse[c].end());
  add_scene_noise(mics, config);
  return mics;
}

DecimatedStream render_through_frontend(const SceneConfig& config, AdcStats* stats) {
  AdcRenderer adc(scene_signals(config), config.logamp, config.adc_full_scale, config.seed);
  FrontEnd fe(config.logamp, adc.channel_count(), adc.adc_rate());
  DecimatedStream out;
  out.channels.resize(adc.channel_count());
  std::vector<std::uint16_t> codes;
  while (adc.next(kStreamRateHz / 4, codes)) fe.push(codes, out.channels);
  if (stats) *stats = adc.stats();
  return out;
}

}  // namespace droneear
