#include "droneear/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "droneear/errors.hpp"
#include "droneear/io.hpp"

namespace droneear {

using nlohmann::json;

namespace {

// v rounded to `digits` decimals; dividing by the power of ten keeps the
// shortest JSON representation (0.6, not 0.6000000000000001)
double round_to(double v, int digits) {
  const double scale = std::pow(10.0, digits);
  return std::round(v * scale) / scale;
}

json doa_json(const DoaEstimate& d) {
  json j;
  j["method"] = to_string(d.method);
  j["azimuth_deg"] = round_to(d.azimuth_deg, 6);
  if (d.elevation_deg) j["elevation_deg"] = round_to(*d.elevation_deg, 6);
  if (d.position_2d) j["position"] = {round_to((*d.position_2d)[0], 6), round_to((*d.position_2d)[1], 6)};
  j["response_power"] = d.response_power;
  j["ambiguous"] = d.ambiguous;
  return j;
}

}  // namespace

void PipelineConfig::validate() const {
  namespace fs = std::filesystem;
  if (input_path.empty() || !fs::exists(input_path)) throw ConfigurationError("input not found: " + input_path);
  if (geometry_path.empty() || !fs::exists(geometry_path))
    throw ConfigurationError("geometry file not found: " + geometry_path);
  if (library_path.empty() || !fs::exists(library_path))
    throw ConfigurationError("library file not found: " + library_path);
  if (!input_format.empty() && input_format != "raw-adc" && input_format != "wav")
    throw ConfigurationError("input format must be raw-adc or wav");
  if (!(settings.gate_threshold > 0.0)) throw ConfigurationError("gate threshold must be positive");
  if (!(settings.scan_step_deg > 0.0)) throw ConfigurationError("scan step must be positive");
  if (!(settings.noise_lambda > 0.0 && settings.noise_lambda <= 1.0))
    throw ConfigurationError("noise lambda must be in (0, 1]");
}

std::string PipelineSummary::to_json() const {
  json j;
  j["type"] = "summary";
  j["frames"] = frames;
  j["frames_gated_on"] = frames_gated_on;
  j["gated_on_ratio"] = gated_on_ratio();
  j["windows"] = windows;
  j["doa_estimates"] = doa_estimates;
  j["seconds_classified"] = seconds_classified;
  j["events"] = events;
  j["audio_seconds"] = audio_seconds;
  j["wall_seconds"] = wall_seconds;
  j["realtime_factor"] = realtime_factor();
  return j.dump();
}

std::vector<double> combined_psd(const SpectrumFrame& frame, std::span<const double> gains) {
  if (gains.size() != frame.channels.size()) throw PreconditionError("combined_psd: gains/channels mismatch");
  std::vector<double> out(kBins, 0.0);
  for (std::size_t i = 0; i < gains.size(); ++i) {
    const double w = 1.0 / (gains[i] * gains[i] * static_cast<double>(gains.size()));
    for (std::size_t k = 0; k < kBins; ++k) out[k] += w * frame.channels[i].psd[k];
  }
  return out;
}

Pipeline::Pipeline(ArrayGeometry geometry, SignatureLibrary library, PipelineSettings settings, Sink sink)
    : geometry_(std::move(geometry)),
      library_(std::move(library)),
      settings_(settings),
      sink_(std::move(sink)),
      beamformer_(geometry_, settings.scan_step_deg) {
  if (library_.empty()) throw ConfigurationError("pipeline: signature library is empty");
  buf_.resize(geometry_.size());
}

void Pipeline::push(const std::vector<std::vector<double>>& samples) {
  if (samples.size() != buf_.size()) throw PreconditionError("pipeline: channel count does not match geometry");
  const std::size_t n = samples.front().size();
  for (std::size_t c = 0; c < samples.size(); ++c) {
    if (samples[c].size() != n) throw InputDomainError("pipeline: ragged channel push");
    buf_[c].insert(buf_[c].end(), samples[c].begin(), samples[c].end());
  }
  total_ += n;
  summary_.audio_seconds = static_cast<double>(total_) / kStreamRate;
  while ((next_second_ + 1) * kSecondLen <= total_) process_until((next_second_ + 1) * kSecondLen, false);
}

void Pipeline::finish() {
  if (total_ > next_second_ * kSecondLen) process_until(total_, true);
}

std::vector<std::vector<double>> Pipeline::slice(std::size_t start, std::size_t len) const {
  std::vector<std::vector<double>> out;
  for (const auto& ch : buf_)
    out.emplace_back(ch.begin() + static_cast<long>(start - buf_start_),
                     ch.begin() + static_cast<long>(start - buf_start_ + len));
  return out;
}

void Pipeline::process_until(std::size_t end, bool final) {
  const std::size_t second = next_second_;

  // 200 ms windows: gate, then energy DOA.
  std::vector<std::pair<std::size_t, DoaEstimate>> energy;
  while ((next_window_ + 1) * kWindowLen <= end) {
    const std::size_t w = next_window_++;
    const auto win = make_energy_window(w, slice(w * kWindowLen, kWindowLen), 0);
    const bool on = power_gate(win, geometry_.gains, settings_.gate_threshold);
    window_gate_.push_back(on);
    ++summary_.windows;
    if (on) {
      ++summary_.windows_gated_on;
      energy.emplace_back(w, energy_doa(win, geometry_));
    }
  }

  // 2048-sample frames completing inside this span.
  std::vector<FrameOutcome> frames;
  std::vector<FrameResult> results;
  while ((next_frame_ + 1) * kFrameLen <= end) {
    const std::size_t f = next_frame_++;
    const std::size_t centre = f * kFrameLen + kFrameLen / 2;
    const std::size_t w = centre / kWindowLen;
    // a frame centred in the unfinished last window of the stream is gated off
    const bool on = w < window_gate_.size() && window_gate_[w];
    FrameOutcome fo{f, on, std::nullopt, make_spectrum_frame(f, slice(f * kFrameLen, kFrameLen), 0)};
    const auto psd = combined_psd(fo.spectra, geometry_.gains);
    ++summary_.frames;
    if (on) {
      ++summary_.frames_gated_on;
      fo.result = classify(normalize_psd(psd), library_);
      results.push_back(*fo.result);
    } else {
      noise_ = update_noise_profile(noise_, psd, false, settings_.noise_lambda);
    }
    frames.push_back(std::move(fo));
  }

  // DOA lines for gated-on windows, beamformed on the nearest frame.
  for (const auto& [w, est] : energy) {
    const double centre = (static_cast<double>(w) + 0.5) * kWindowLen;
    const FrameOutcome* nearest = nullptr;
    double best = 0.0;
    for (const auto& fo : frames) {
      const double dist = std::abs((static_cast<double>(fo.index) + 0.5) * kFrameLen - centre);
      if (!nearest || dist < best) {
        nearest = &fo;
        best = dist;
      }
    }
    json j;
    j["type"] = "doa";
    j["t"] = round_to(static_cast<double>((w + 1) * kWindowLen) / kStreamRate, 9);
    j["window"] = w;
    j["energy"] = doa_json(est);
    if (nearest) {
      const auto psd = combined_psd(nearest->spectra, geometry_.gains);
      const auto p_ss = estimate_signal_psd(psd, noise_.p_nn);
      const auto h = noise_.p_nn.empty() ? std::vector<double>{} : wiener_weight(p_ss, noise_.p_nn);
      j["frame"] = nearest->index;
      j["beamformer"] = doa_json(beamformer_.scan(nearest->spectra.channels, h));
    }
    latest_doa_ = j.dump();
    sink_(*latest_doa_);
    ++summary_.doa_estimates;
  }

  // One decision per second that has gated-on frames.
  if (!results.empty()) {
    const auto decision = decide_second(results, second);
    ++summary_.seconds_classified;
    json d;
    d["type"] = "second";
    d["second"] = second;
    d["uav_id"] = decision.id;
    d["distance"] = decision.distance;
    d["frames"] = results.size();
    sink_(d.dump());
    auto confirm = temporal_confirm(temporal_, decision, library_.distance_threshold);
    temporal_ = confirm.state;
    if (confirm.event) {
      const auto& ev = *confirm.event;
      const Signature* sig = library_.find(ev.uav_id);
      json e;
      e["type"] = "event";
      e["t"] = ev.t;
      e["uav_id"] = ev.uav_id;
      e["uav_name"] = sig ? sig->name : "";
      e["distance"] = ev.distance;
      e["previous_distance"] = ev.previous_distance;
      e["second_pair"] = {ev.first_second, ev.first_second + 1};
      if (latest_doa_) e["doa"] = json::parse(*latest_doa_);
      sink_(e.dump());
      ++summary_.events;
    }
  }

  next_second_ = second + 1;
  if (final) next_second_ = (end + kSecondLen - 1) / kSecondLen;
  trim();
}

void Pipeline::trim() {
  const std::size_t keep_from = std::min(next_window_ * kWindowLen, next_frame_ * kFrameLen);
  if (keep_from <= buf_start_) return;
  const auto drop = static_cast<long>(keep_from - buf_start_);
  for (auto& ch : buf_) ch.erase(ch.begin(), ch.begin() + drop);
  buf_start_ = keep_from;
}

PipelineSummary run_pipeline(const PipelineConfig& config, std::ostream& out) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto geometry = load_geometry(config.geometry_path);
  auto library = SignatureLibrary::load(config.library_path);

  std::ofstream file;
  std::ostream* sink_stream = &out;
  if (!config.output_path.empty()) {
    file.open(config.output_path, std::ios::trunc);
    if (!file) throw ConfigurationError("cannot open output " + config.output_path);
    sink_stream = &file;
  }
  Pipeline pipe(geometry, std::move(library), config.settings,
                [sink_stream](const std::string& line) { *sink_stream << line << '\n'; });

  std::string fmt = config.input_format;
  if (fmt.empty())
    fmt = config.input_path.size() >= 4 && config.input_path.substr(config.input_path.size() - 4) == ".wav"
              ? "wav"
              : "raw-adc";
  try {
    if (fmt == "wav") {
      const auto stream = to_stream(read_wav(config.input_path));
      if (stream.channels.size() != geometry.size())
        throw ConfigurationError("input has " + std::to_string(stream.channels.size()) + " channels, geometry " +
                                 std::to_string(geometry.size()));
      for (std::size_t s = 0; s < stream.length(); s += kSecondLen) {
        const std::size_t len = std::min(kSecondLen, stream.length() - s);
        std::vector<std::vector<double>> chunk;
        for (const auto& ch : stream.channels) chunk.emplace_back(ch.begin() + s, ch.begin() + s + len);
        pipe.push(chunk);
      }
    } else {
      RawAdcReader reader(config.input_path);
      if (static_cast<std::size_t>(reader.channel_count()) != geometry.size())
        throw ConfigurationError("input has " + std::to_string(reader.channel_count()) + " channels, geometry " +
                                 std::to_string(geometry.size()));
      FrontEnd fe(config.logamp, reader.channel_count(), reader.sample_rate());
      std::vector<std::uint16_t> codes;
      const auto chunk = static_cast<std::size_t>(reader.sample_rate() / 4);
      while (reader.read(chunk, codes)) {
        std::vector<std::vector<double>> dec(reader.channel_count());
        fe.push(codes, dec);
        pipe.push(dec);
      }
    }
    pipe.finish();
  } catch (const FormatError& e) {
    json err;
    err["type"] = "error";
    err["message"] = e.what();
    *sink_stream << err.dump() << '\n';
    sink_stream->flush();
    throw;
  }
  sink_stream->flush();
  auto summary = pipe.summary();
  summary.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return summary;
}

void emit_plot_data(const DecimatedStream& stream, std::ostream& out) {
  const std::size_t frames = frame_count(stream.length());
  if (stream.channels.empty() || frames == 0) throw InputDomainError("plot: input shorter than one frame");
  std::vector<std::vector<double>> avg(stream.channels.size(), std::vector<double>(kBins, 0.0));
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t c = 0; c < stream.channels.size(); ++c) {
      const auto spec = compute_spectrum(std::span<const double>(stream.channels[c]).subspan(f * kFrameLen, kFrameLen));
      for (std::size_t k = 0; k < kBins; ++k) avg[c][k] += spec.psd[k] / static_cast<double>(frames);
    }
  out << "bin_hz";
  for (std::size_t c = 0; c < avg.size(); ++c) out << ",psd_ch" << c;
  out << '\n' << std::setprecision(10);
  for (std::size_t k = 0; k < kBins; ++k) {
    out << static_cast<double>(k) * kBinWidthHz;
    for (const auto& ch : avg) out << ',' << ch[k];
    out << '\n';
  }
}

std::vector<double> window_gate_statistics(const DecimatedStream& stream, std::span<const double> gains) {
  std::vector<double> stats;
  const std::size_t n = energy_window_count(stream.length());
  for (std::size_t w = 0; w < n; ++w)
    stats.push_back(gate_statistic(make_energy_window(w, stream.channels, w * kWindowLen), gains));
  return stats;
}

std::vector<std::vector<double>> extract_training_frames(const DecimatedStream& stream,
                                                         std::span<const double> gains, double gate_threshold) {
  const auto gate = window_gate_statistics(stream, gains);
  std::vector<std::vector<double>> out;
  const std::size_t frames = frame_count(stream.length());
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t w = (f * kFrameLen + kFrameLen / 2) / kWindowLen;
    if (gate_threshold > 0.0 && (w >= gate.size() || !(gate[w] > gate_threshold))) continue;
    const auto sf = make_spectrum_frame(f, stream.channels, f * kFrameLen);
    out.push_back(normalize_psd(combined_psd(sf, gains)));
  }
  return out;
}

ThresholdSweep sweep_thresholds(const std::vector<double>& noise_stats, const std::vector<double>& drone_stats,
                                int steps) {
  if (noise_stats.empty() || drone_stats.empty()) throw InputDomainError("threshold-sweep: need noise and drone windows");
  if (steps < 2) throw InputDomainError("threshold-sweep: need at least 2 steps");
  ThresholdSweep sw;
  sw.noise_max = *std::max_element(noise_stats.begin(), noise_stats.end());
  sw.drone_min = *std::min_element(drone_stats.begin(), drone_stats.end());
  if (sw.drone_min > sw.noise_max && sw.noise_max > 0.0) sw.proposed = std::sqrt(sw.noise_max * sw.drone_min);

  const double lo = std::max(std::min(sw.noise_max, sw.drone_min) * 0.1, 1e-12);
  const double hi = std::max(sw.noise_max, *std::max_element(drone_stats.begin(), drone_stats.end())) * 10.0;
  auto rate = [](const std::vector<double>& v, double t) {
    return static_cast<double>(std::count_if(v.begin(), v.end(), [t](double x) { return x > t; })) /
           static_cast<double>(v.size());
  };
  for (int i = 0; i < steps; ++i) {
    const double t = lo * std::pow(hi / lo, i / static_cast<double>(steps - 1));
    sw.rows.push_back({t, rate(noise_stats, t), rate(drone_stats, t)});
  }
  return sw;
}

}  // namespace droneear
