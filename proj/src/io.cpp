#include "droneear/io.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>

#include <json.hpp>

#include "droneear/errors.hpp"
#include "droneear/interp.hpp"

namespace droneear {

namespace {

void put_bytes(std::ostream& out, std::uint64_t v, int n) {
  for (int b = 0; b < n; ++b) out.put(static_cast<char>((v >> (8 * b)) & 0xFF));
}

std::uint64_t get_bytes(const unsigned char* p, int n) {
  std::uint64_t v = 0;
  for (int b = 0; b < n; ++b) v |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return v;
}

}  // namespace

RawAdcWriter::RawAdcWriter(const std::string& path, int channel_count, double sample_rate)
    : out_(path, std::ios::binary | std::ios::trunc), channel_count_(channel_count) {
  if (!out_) throw FormatError("raw: cannot open " + path + " for writing");
  if (channel_count < 1 || channel_count > 255) throw InputDomainError("raw: channel count must be 1..255");
  out_.write("DEAR", 4);
  put_bytes(out_, static_cast<std::uint64_t>(channel_count), 1);
  put_bytes(out_, static_cast<std::uint64_t>(std::llround(sample_rate)), 4);
}

void RawAdcWriter::write(const std::vector<std::uint16_t>& interleaved) {
  if (interleaved.size() % static_cast<std::size_t>(channel_count_) != 0)
    throw InputDomainError("raw: partial sample group");
  std::vector<char> buf(interleaved.size() * 2);
  for (std::size_t i = 0; i < interleaved.size(); ++i) {
    buf[2 * i] = static_cast<char>(interleaved[i] & 0xFF);
    buf[2 * i + 1] = static_cast<char>(interleaved[i] >> 8);
  }
  out_.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out_) throw FormatError("raw: write failed");
}

void RawAdcWriter::close() { out_.close(); }

RawAdcReader::RawAdcReader(const std::string& path) : in_(path, std::ios::binary) {
  if (!in_) throw FormatError("raw: cannot open " + path);
  unsigned char h[kRawHeaderBytes];
  in_.read(reinterpret_cast<char*>(h), kRawHeaderBytes);
  if (!in_ || std::memcmp(h, "DEAR", 4) != 0) throw FormatError("raw: bad header in " + path);
  channel_count_ = h[4];
  sample_rate_ = static_cast<double>(get_bytes(h + 5, 4));
  if (channel_count_ < 1) throw FormatError("raw: zero channels");
  if (!(sample_rate_ > 0.0)) throw FormatError("raw: zero sample rate");
}

bool RawAdcReader::read(std::size_t max_samples, std::vector<std::uint16_t>& out) {
  const std::size_t group = static_cast<std::size_t>(channel_count_) * 2;
  std::vector<unsigned char> buf(max_samples * group);
  in_.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  const auto got = static_cast<std::size_t>(in_.gcount());
  if (got % group != 0) throw FormatError("raw: truncated sample group");
  out.resize(got / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint16_t>(buf[2 * i] | (buf[2 * i + 1] << 8));
  return got > 0;
}

void write_raw_adc(const std::string& path, const RawAdcBlock& block) {
  RawAdcWriter w(path, block.channel_count, block.sample_rate);
  w.write(block.codes);
  w.close();
}

RawAdcBlock read_raw_adc(const std::string& path) {
  RawAdcReader r(path);
  RawAdcBlock block;
  block.channel_count = r.channel_count();
  block.sample_rate = r.sample_rate();
  std::vector<std::uint16_t> chunk;
  while (r.read(1 << 16, chunk)) block.codes.insert(block.codes.end(), chunk.begin(), chunk.end());
  return block;
}

WavData read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("wav: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw FormatError("wav: not a RIFF/WAVE file");

  int format = 0, channels = 0, bits = 0;
  double rate = 0.0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const auto len = static_cast<std::size_t>(get_bytes(&bytes[pos + 4], 4));
    const unsigned char* body = &bytes[pos + 8];
    const std::size_t avail = std::min(len, bytes.size() - pos - 8);
    if (std::memcmp(&bytes[pos], "fmt ", 4) == 0) {
      if (avail < 16) throw FormatError("wav: short fmt chunk");
      format = static_cast<int>(get_bytes(body, 2));
      channels = static_cast<int>(get_bytes(body + 2, 2));
      rate = static_cast<double>(get_bytes(body + 4, 4));
      bits = static_cast<int>(get_bytes(body + 14, 2));
      if (format == 0xFFFE && avail >= 26) format = static_cast<int>(get_bytes(body + 24, 2));
    } else if (std::memcmp(&bytes[pos], "data", 4) == 0) {
      data = body;
      data_len = avail;
    }
    pos += 8 + len + (len & 1);
  }
  if (!data || channels < 1 || !(rate > 0.0)) throw FormatError("wav: missing fmt or data chunk");
  const bool pcm = format == 1 && (bits == 16 || bits == 24 || bits == 32);
  const bool flt = format == 3 && bits == 32;
  if (!pcm && !flt) throw FormatError("wav: unsupported encoding (need PCM 16/24/32 or float32)");

  const int width = bits / 8;
  const std::size_t frames = data_len / (static_cast<std::size_t>(width) * channels);
  WavData wav;
  wav.sample_rate = rate;
  wav.channels.assign(channels, std::vector<double>(frames));
  const double scale = std::ldexp(1.0, bits - 1);
  for (std::size_t n = 0; n < frames; ++n)
    for (int c = 0; c < channels; ++c) {
      const unsigned char* p = data + (n * channels + c) * width;
      const std::uint64_t raw = get_bytes(p, width);
      double v;
      if (flt) {
        v = std::bit_cast<float>(static_cast<std::uint32_t>(raw));
      } else {
        const std::int64_t s = static_cast<std::int64_t>(raw << (64 - bits)) >> (64 - bits);
        v = static_cast<double>(s) / scale;
      }
      wav.channels[c][n] = v;
    }
  return wav;
}

void write_wav(const std::string& path, const WavData& data) {
  if (data.channels.empty()) throw InputDomainError("wav: no channels");
  const std::size_t channels = data.channels.size();
  const std::size_t frames = data.channels.front().size();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("wav: cannot open " + path + " for writing");
  const std::uint64_t data_len = frames * channels * 4;
  out.write("RIFF", 4);
  put_bytes(out, 36 + data_len, 4);
  out.write("WAVEfmt ", 8);
  put_bytes(out, 16, 4);
  put_bytes(out, 3, 2);
  put_bytes(out, channels, 2);
  const auto rate = static_cast<std::uint64_t>(std::llround(data.sample_rate));
  put_bytes(out, rate, 4);
  put_bytes(out, rate * channels * 4, 4);
  put_bytes(out, channels * 4, 2);
  put_bytes(out, 32, 2);
  out.write("data", 4);
  put_bytes(out, data_len, 4);
  for (std::size_t n = 0; n < frames; ++n)
    for (std::size_t c = 0; c < channels; ++c)
      put_bytes(out, std::bit_cast<std::uint32_t>(static_cast<float>(data.channels[c][n])), 4);
  if (!out) throw FormatError("wav: write failed");
}

DecimatedStream to_stream(const WavData& wav) {
  DecimatedStream s;
  s.sample_rate = kStreamRate;
  for (const auto& ch : wav.channels)
    s.channels.push_back(wav.sample_rate == kStreamRate ? ch : resample(ch, wav.sample_rate, kStreamRate));
  return s;
}

DecimatedStream read_stream(const std::string& path, const std::string& format, const LogAmpModel& model) {
  std::string fmt = format;
  if (fmt.empty()) fmt = path.size() >= 4 && path.substr(path.size() - 4) == ".wav" ? "wav" : "raw-adc";
  if (fmt == "wav") return to_stream(read_wav(path));
  if (fmt != "raw-adc") throw ConfigurationError("unknown input format '" + fmt + "'");
  RawAdcReader r(path);
  FrontEnd fe(model, r.channel_count(), r.sample_rate());
  DecimatedStream s;
  s.channels.resize(r.channel_count());
  std::vector<std::uint16_t> chunk;
  while (r.read(1 << 16, chunk)) fe.push(chunk, s.channels);
  return s;
}

void save_geometry(const std::string& path, const ArrayGeometry& geometry, const std::vector<std::string>& warnings) {
  geometry.validate();
  nlohmann::json j;
  j["format_version"] = kGeometryFormatVersion;
  j["sound_speed"] = geometry.sound_speed;
  j["positions"] = nlohmann::json::array();
  for (const auto& p : geometry.positions) j["positions"].push_back({p[0], p[1], p[2]});
  j["gains"] = geometry.gains;
  j["warnings"] = warnings;
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  j["timestamp"] = stamp;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("geometry: cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
}

ArrayGeometry load_geometry(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("geometry: cannot open " + path);
  ArrayGeometry g;
  try {
    const auto j = nlohmann::json::parse(in);
    const int version = j.at("format_version").get<int>();
    if (version != kGeometryFormatVersion)
      throw FormatError("geometry: unsupported format_version " + std::to_string(version));
    g.sound_speed = j.value("sound_speed", kSoundSpeed);
    for (const auto& p : j.at("positions")) g.positions.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
    g.gains = j.at("gains").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("geometry: ") + e.what());
  }
  try {
    g.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("geometry: ") + e.what());
  }
  return g;
}

PulseRecordingSet segment_pulses(const DecimatedStream& stream, const SegmentOptions& options) {
  const std::size_t n = stream.length();
  if (n == 0) throw InputDomainError("segment_pulses: empty recording");
  std::vector<double> env(n, 0.0);
  for (const auto& ch : stream.channels)
    for (std::size_t i = 0; i < n; ++i) env[i] = std::max(env[i], std::abs(ch[i]));

  std::vector<double> sorted = env;
  std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
  const double median = sorted[n / 2];
  const double peak = *std::max_element(env.begin(), env.end());
  const double thr = std::max(10.0 * median, 0.02 * peak);
  if (!(peak > 0.0)) throw CalibrationSignalError("segment_pulses: silent recording");

  const auto gap = static_cast<std::size_t>(options.min_gap_s * stream.sample_rate);
  const auto pad = static_cast<std::size_t>(options.padding_s * stream.sample_rate);
  std::vector<std::pair<std::size_t, std::size_t>> regions;
  for (std::size_t i = 0; i < n; ++i) {
    if (env[i] <= thr) continue;
    if (!regions.empty() && i - regions.back().second <= gap)
      regions.back().second = i;
    else
      regions.emplace_back(i, i);
  }

  PulseRecordingSet set;
  set.sample_rate = stream.sample_rate;
  for (std::size_t r = 0; r < regions.size(); ++r) {
    std::size_t lo = regions[r].first > pad ? regions[r].first - pad : 0;
    std::size_t hi = std::min(n, regions[r].second + pad + 1);
    // never reach into a neighbour's active region
    if (r > 0) lo = std::max(lo, (regions[r - 1].second + regions[r].first) / 2);
    if (r + 1 < regions.size()) hi = std::min(hi, (regions[r].second + regions[r + 1].first) / 2);
    std::vector<std::vector<double>> pulse;
    for (const auto& ch : stream.channels) pulse.emplace_back(ch.begin() + lo, ch.begin() + hi);
    set.pulses.push_back(std::move(pulse));
  }
  return set;
}

}  // namespace droneear
