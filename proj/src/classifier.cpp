#include "droneear/classifier.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "droneear/errors.hpp"

namespace droneear {

Signature train_signature(const std::vector<std::vector<double>>& frames, const std::string& name, int id) {
  if (frames.size() < kMinTrainingFrames)
    throw InsufficientTrainingDataError("train_signature: need at least 10 frames, got " +
                                        std::to_string(frames.size()));
  const std::size_t n_bins = frames.front().size();
  for (const auto& f : frames)
    if (f.size() != n_bins) throw InputDomainError("train_signature: frames differ in length");

  const double n = static_cast<double>(frames.size());
  Signature sig;
  sig.id = id;
  sig.name = name;
  sig.train_frames = frames.size();
  sig.mean.assign(n_bins, 0.0);
  sig.std.assign(n_bins, 0.0);
  for (const auto& f : frames)
    for (std::size_t k = 0; k < n_bins; ++k) sig.mean[k] += f[k];
  for (double& m : sig.mean) m /= n;
  for (const auto& f : frames)
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double d = f[k] - sig.mean[k];
      sig.std[k] += d * d;
    }
  for (double& s : sig.std) s = std::max(std::sqrt(s / (n - 1.0)), kStdFloor);

  double total = 0.0;
  for (double m : sig.mean) total += m;
  if (!(total > 0.0)) throw DegenerateInputError("train_signature: mean spectrum is zero");
  for (double& m : sig.mean) m /= total;
  return sig;
}

double signature_distance(std::span<const double> psd, const Signature& sig) {
  if (psd.size() != sig.mean.size()) throw InputDomainError("classify: psd length does not match signature");
  double d = 0.0;
  for (std::size_t k = 0; k < psd.size(); ++k) {
    const double z = (psd[k] - sig.mean[k]) / sig.std[k];
    d += z * z;
  }
  return d;
}

void SignatureLibrary::add(Signature sig) {
  if (slots_.size() >= kMaxSignatures) throw CapacityError("library: all 32 slots are in use");
  if (sig.id < 0 || sig.id >= static_cast<int>(kMaxSignatures))
    throw ConfigurationError("library: slot id must be in 0..31");
  if (find(sig.id)) throw ConfigurationError("library: slot id " + std::to_string(sig.id) + " already used");
  if (sig.mean.size() != kBins || sig.std.size() != kBins)
    throw InputDomainError("library: signatures must have 1024 bins");
  auto pos = std::lower_bound(slots_.begin(), slots_.end(), sig.id,
                              [](const Signature& s, int id) { return s.id < id; });
  slots_.insert(pos, std::move(sig));
}

std::optional<int> SignatureLibrary::free_id() const {
  for (int id = 0; id < static_cast<int>(kMaxSignatures); ++id)
    if (!find(id)) return id;
  return std::nullopt;
}

bool SignatureLibrary::remove(int id) {
  auto it = std::find_if(slots_.begin(), slots_.end(), [id](const Signature& s) { return s.id == id; });
  if (it == slots_.end()) return false;
  slots_.erase(it);
  return true;
}

const Signature* SignatureLibrary::find(int id) const {
  for (const auto& s : slots_)
    if (s.id == id) return &s;
  return nullptr;
}

const Signature* SignatureLibrary::find(const std::string& name) const {
  for (const auto& s : slots_)
    if (s.name == name) return &s;
  return nullptr;
}

namespace {

constexpr char kMagic[4] = {'D', 'S', 'I', 'G'};

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t b = 0; b < sizeof(T); ++b) out.put(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * b)) & 0xFF));
}

template <typename T>
T get_le(std::istream& in) {
  std::uint64_t v = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw FormatError("library: truncated file");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * b);
  }
  return static_cast<T>(v);
}

void put_f32(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
float get_f32(std::istream& in) { return std::bit_cast<float>(get_le<std::uint32_t>(in)); }

}  // namespace

void SignatureLibrary::write(std::ostream& out) const {
  out.write(kMagic, 4);
  put_le<std::uint16_t>(out, version);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(slots_.size()));
  put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(distance_threshold));
  for (const auto& s : slots_) {
    if (s.name.size() > 255) throw FormatError("library: name longer than 255 bytes");
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(s.id));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(s.name.size()));
    out.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
    for (double m : s.mean) put_f32(out, m);
    for (double v : s.std) put_f32(out, v);
  }
  if (!out) throw FormatError("library: write failed");
}

SignatureLibrary SignatureLibrary::read(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("library: bad magic");
  SignatureLibrary lib;
  lib.version = get_le<std::uint16_t>(in);
  if (lib.version != kLibraryVersion)
    throw FormatError("library: unsupported version " + std::to_string(lib.version));
  const int count = get_le<std::uint8_t>(in);
  if (count > static_cast<int>(kMaxSignatures)) throw FormatError("library: slot count exceeds 32");
  lib.distance_threshold = std::bit_cast<double>(get_le<std::uint64_t>(in));
  for (int s = 0; s < count; ++s) {
    Signature sig;
    sig.id = get_le<std::uint8_t>(in);
    const std::size_t len = get_le<std::uint8_t>(in);
    sig.name.resize(len);
    in.read(sig.name.data(), static_cast<std::streamsize>(len));
    if (!in) throw FormatError("library: truncated name");
    sig.mean.resize(kBins);
    sig.std.resize(kBins);
    for (auto& m : sig.mean) m = get_f32(in);
    for (auto& v : sig.std) {
      v = get_f32(in);
      if (!(v > 0.0)) throw FormatError("library: non-positive std");
    }
    try {
      lib.add(std::move(sig));
    } catch (const Error& e) {
      throw FormatError(std::string("library: ") + e.what());
    }
  }
  return lib;
}

void SignatureLibrary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("library: cannot open " + path + " for writing");
  write(out);
}

SignatureLibrary SignatureLibrary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("library: cannot open " + path);
  return read(in);
}

FrameResult classify(std::span<const double> psd, const SignatureLibrary& library) {
  if (library.empty()) throw ConfigurationError("classify: library is empty");
  FrameResult best;
  for (const auto& s : library.slots()) {
    const double d = signature_distance(psd, s);
    // slots are id-ordered, so strict < keeps the lowest id on ties
    if (best.id < 0 || d < best.distance) {
      best.id = s.id;
      best.distance = d;
    }
  }
  return best;
}

SecondDecision decide_second(std::span<const FrameResult> frames, std::size_t second) {
  if (frames.empty()) throw PreconditionError("decide_second: no frames in second");
  std::map<int, std::vector<double>> by_label;
  for (const auto& f : frames) by_label[f.id].push_back(f.distance);
  SecondDecision out;
  out.second = second;
  std::size_t votes = 0;
  for (auto& [id, dists] : by_label)
    if (dists.size() > votes) {
      votes = dists.size();
      out.id = id;
    }
  auto& d = by_label[out.id];
  std::sort(d.begin(), d.end());
  const std::size_t n = d.size();
  out.distance = n % 2 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
  return out;
}

ConfirmResult temporal_confirm(const TemporalState& state, const SecondDecision& decision, double threshold) {
  if (state.last_second && decision.second <= *state.last_second)
    throw SequencingError("temporal_confirm: second " + std::to_string(decision.second) + " does not follow " +
                          std::to_string(*state.last_second));
  ConfirmResult r;
  const bool consecutive = state.last_second && decision.second == *state.last_second + 1;
  if (consecutive && state.last_second_label == decision.id && state.last_second_distance < threshold &&
      decision.distance < threshold) {
    DetectionEvent ev;
    ev.uav_id = decision.id;
    ev.distance = decision.distance;
    ev.previous_distance = state.last_second_distance;
    ev.first_second = *state.last_second;
    ev.t = static_cast<double>(decision.second + 1);
    r.event = ev;
  }
  r.state.last_second = decision.second;
  r.state.last_second_label = decision.id;
  r.state.last_second_distance = decision.distance;
  r.state.confirmed = r.event.has_value();
  return r;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw InputDomainError("percentile: no values");
  if (!(p >= 0.0 && p <= 100.0)) throw InputDomainError("percentile: p must be in [0, 100]");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(values.size())));
  return values[rank == 0 ? 0 : rank - 1];
}

double self_distance_threshold(const std::vector<std::vector<double>>& frames, const Signature& sig) {
  std::vector<double> d;
  d.reserve(frames.size());
  for (const auto& f : frames) d.push_back(signature_distance(f, sig));
  return percentile(std::move(d), 99.0);
}

}  // namespace droneear
