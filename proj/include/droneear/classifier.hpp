#pragma once

// Spectral-signature training, nearest-neighbour classification against a
// small slot library, per-second aggregation and two-second confirmation.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "droneear/constants.hpp"

namespace droneear {

inline constexpr double kStdFloor = 1e-6;
inline constexpr std::size_t kMinTrainingFrames = 10;
inline constexpr std::uint16_t kLibraryVersion = 1;

struct Signature {
  int id = 0;
  std::string name;
  std::vector<double> mean;  // normalized PSD
  std::vector<double> std;   // floored at kStdFloor
  std::size_t train_frames = 0;
};

// Per-bin sample mean and standard deviation (n - 1) of normalized PSDs.
// Throws InsufficientTrainingDataError for fewer than 10 frames.
Signature train_signature(const std::vector<std::vector<double>>& frames, const std::string& name, int id = 0);

// sum_k ((psd[k] - mean[k]) / std[k])^2
double signature_distance(std::span<const double> psd, const Signature& sig);

class SignatureLibrary {
 public:
  std::uint16_t version = kLibraryVersion;
  double distance_threshold = 0.0;

  const std::vector<Signature>& slots() const { return slots_; }
  std::size_t size() const { return slots_.size(); }
  bool empty() const { return slots_.empty(); }

  // Inserts keeping slots ordered by id. Throws CapacityError when all 32
  // slots are used, else ConfigurationError on a duplicate or out-of-range id.
  void add(Signature sig);
  // Lowest unused id, or nullopt when full.
  std::optional<int> free_id() const;
  // Returns false when no slot has that id.
  bool remove(int id);
  const Signature* find(int id) const;
  const Signature* find(const std::string& name) const;

  void write(std::ostream& out) const;
  static SignatureLibrary read(std::istream& in);
  void save(const std::string& path) const;
  static SignatureLibrary load(const std::string& path);

 private:
  std::vector<Signature> slots_;
};

struct FrameResult {
  int id = -1;
  double distance = 0.0;
};

// Argmin over slots, ties to the lowest id. Throws ConfigurationError on an
// empty library.
FrameResult classify(std::span<const double> psd, const SignatureLibrary& library);

struct SecondDecision {
  std::size_t second = 0;
  int id = -1;
  double distance = 0.0;
};

// Majority vote (ties to the lowest id) and the median distance of the
// winning label's frames.
SecondDecision decide_second(std::span<const FrameResult> frames, std::size_t second = 0);

struct TemporalState {
  std::optional<std::size_t> last_second;
  std::optional<int> last_second_label;
  double last_second_distance = 0.0;
  bool confirmed = false;
};

struct DetectionEvent {
  int uav_id = -1;
  std::string uav_name;
  double distance = 0.0;           // current second
  double previous_distance = 0.0;  // preceding second
  std::size_t first_second = 0;    // s in the pair (s, s+1)
  double t = 0.0;                  // end of second s+1
};

struct ConfirmResult {
  TemporalState state;
  std::optional<DetectionEvent> event;
};

// Two consecutive seconds with the same id and both distances below
// threshold yield an event. A skipped second breaks the chain; a
// non-increasing second throws SequencingError.
ConfirmResult temporal_confirm(const TemporalState& state, const SecondDecision& decision, double threshold);

// Nearest-rank percentile, p in [0, 100].
double percentile(std::vector<double> values, double p);

// 99th percentile of the training frames' distances to their own signature.
double self_distance_threshold(const std::vector<std::vector<double>>& frames, const Signature& sig);

}  // namespace droneear
