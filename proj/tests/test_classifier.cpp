#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "droneear/classifier.hpp"
#include "droneear/errors.hpp"
#include "droneear/frontend.hpp"
#include "droneear/simulator.hpp"
#include "oracles.hpp"

using namespace droneear;

namespace {

std::vector<double> random_psd(std::mt19937_64& rng) {
  std::exponential_distribution<double> ex(1.0);
  std::vector<double> p(kBins);
  double s = 0.0;
  for (auto& v : p) s += (v = ex(rng));
  for (auto& v : p) v /= s;
  return p;
}

Signature random_signature(std::mt19937_64& rng, int id, std::string name = "") {
  Signature s;
  s.id = id;
  s.name = name.empty() ? "uav" + std::to_string(id) : name;
  s.mean = random_psd(rng);
  std::uniform_real_distribution<double> u(1e-4, 1e-3);
  s.std.resize(kBins);
  for (auto& v : s.std) v = u(rng);
  return s;
}

std::vector<std::vector<double>> preset_frames(const std::string& name, std::size_t count, std::uint64_t seed) {
  const double seconds = static_cast<double>(count * kFrameLen) / kStreamRate + 0.01;
  const auto x = synth_source(preset(name), seconds, seed);
  std::vector<std::vector<double>> frames;
  for (std::size_t f = 0; f < count; ++f)
    frames.push_back(normalize_psd(compute_spectrum(std::span<const double>(x).subspan(f * kFrameLen, kFrameLen)).psd));
  return frames;
}

std::string bytes_of(const SignatureLibrary& lib) {
  std::ostringstream out(std::ios::binary);
  lib.write(out);
  return out.str();
}

}  // namespace

TEST_CASE("training statistics") {
  std::mt19937_64 rng(1);
  const auto f = random_psd(rng);
  const auto same = train_signature(std::vector<std::vector<double>>(12, f), "flat", 4);
  CHECK(same.id == 4);
  CHECK(same.train_frames == 12);
  for (std::size_t k = 0; k < kBins; ++k) {
    REQUIRE(same.mean[k] == doctest::Approx(f[k]).epsilon(1e-12));
    REQUIRE(same.std[k] == kStdFloor);
  }

  // per-bin n-1 statistics against a direct evaluation
  std::vector<std::vector<double>> frames;
  for (int i = 0; i < 25; ++i) frames.push_back(random_psd(rng));
  const auto sig = train_signature(frames, "x");
  double l1 = 0.0;
  for (std::size_t k = 0; k < kBins; ++k) {
    double m = 0.0;
    for (const auto& fr : frames) m += fr[k] / 25.0;
    double v = 0.0;
    for (const auto& fr : frames) v += (fr[k] - m) * (fr[k] - m) / 24.0;
    REQUIRE(sig.mean[k] == doctest::Approx(m).epsilon(1e-12));
    REQUIRE(sig.std[k] == doctest::Approx(std::max(std::sqrt(v), kStdFloor)).epsilon(1e-12));
    l1 += sig.mean[k];
  }
  CHECK(std::abs(l1 - 1.0) <= 1e-9);

  CHECK_THROWS_AS(train_signature(std::vector<std::vector<double>>(9, f), "few"), InsufficientTrainingDataError);
}

TEST_CASE("two-frame standard deviation") {
  // the sample formula on two values: |x1 - x2| / sqrt(2)
  const std::vector<double> a{0.5, 0.25, 0.25}, b{0.3, 0.45, 0.25};
  const double n = 2.0, m0 = 0.4;
  const double s0 = std::sqrt(((a[0] - m0) * (a[0] - m0) + (b[0] - m0) * (b[0] - m0)) / (n - 1.0));
  CHECK(s0 == doctest::Approx(std::abs(a[0] - b[0]) / std::sqrt(2.0)));
  // the trainer applies the same formula once it has enough frames
  std::vector<std::vector<double>> frames;
  for (int i = 0; i < 5; ++i) {
    frames.push_back(a);
    frames.push_back(b);
  }
  const auto sig = train_signature(frames, "ab");
  CHECK(sig.std[0] == doctest::Approx(std::abs(a[0] - b[0]) / 2.0 * std::sqrt(10.0 / 9.0)));
  CHECK(sig.std[2] == kStdFloor);
}

TEST_CASE("distance matches an elementwise oracle") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    const auto s = random_signature(rng, 0);
    const auto p = random_psd(rng);
    const double ref = oracle::weighted_distance(p, s.mean, s.std);
    REQUIRE(std::abs(signature_distance(p, s) - ref) <= 1e-12 * ref);
  }
  const auto s = random_signature(rng, 0);
  CHECK(signature_distance(s.mean, s) == 0.0);
  CHECK_THROWS_AS(signature_distance(std::vector<double>(10, 0.1), s), InputDomainError);
}

TEST_CASE("classify: own mean, ties, empty library, single slot") {
  std::mt19937_64 rng(3);
  SignatureLibrary lib;
  CHECK_THROWS_AS(classify(random_psd(rng), lib), ConfigurationError);

  for (int id : {7, 2, 11}) lib.add(random_signature(rng, id));
  for (const auto& s : lib.slots()) {
    const auto r = classify(s.mean, lib);
    CHECK(r.id == s.id);
    CHECK(r.distance == 0.0);
  }

  SignatureLibrary one;
  one.add(random_signature(rng, 9));
  for (int t = 0; t < 10; ++t) CHECK(classify(random_psd(rng), one).id == 9);

  // identical signatures under two ids: the lower id wins
  SignatureLibrary twins;
  auto a = random_signature(rng, 5), b = a;
  b.id = 3;
  twins.add(a);
  twins.add(b);
  CHECK(classify(random_psd(rng), twins).id == 3);
}

TEST_CASE("classify argmin is invariant to a common rescaling of std") {
  std::mt19937_64 rng(4);
  SignatureLibrary lib, scaled;
  for (int id = 0; id < 6; ++id) {
    auto s = random_signature(rng, id);
    lib.add(s);
    for (auto& v : s.std) v *= 3.7;
    scaled.add(s);
  }
  for (int t = 0; t < 100; ++t) {
    const auto p = random_psd(rng);
    const auto a = classify(p, lib), b = classify(p, scaled);
    REQUIRE(a.id == b.id);
    REQUIRE(b.distance == doctest::Approx(a.distance / (3.7 * 3.7)).epsilon(1e-12));
  }
}

TEST_CASE("simulated preset round trip") {
  const auto a = preset_frames("quad-small", 1200, 31);
  const std::vector<std::vector<double>> train(a.begin(), a.begin() + 1000);
  const auto sig_a = train_signature(train, "quad-small", 0);
  const double threshold = self_distance_threshold(train, sig_a);

  SignatureLibrary lib;
  lib.add(sig_a);
  lib.add(train_signature(preset_frames("quad-large", 200, 32), "quad-large", 1));

  std::vector<double> held_mean(kBins, 0.0);
  for (std::size_t f = 1000; f < a.size(); ++f)
    for (std::size_t k = 0; k < kBins; ++k) held_mean[k] += a[f][k] / 200.0;
  const auto r = classify(held_mean, lib);
  CHECK(r.id == 0);
  CHECK(r.distance < threshold);
}

TEST_CASE("decide_second") {
  const std::vector<FrameResult> agree{{3, 1.0}, {3, 5.0}, {3, 2.0}};
  const auto d = decide_second(agree, 7);
  CHECK(d.id == 3);
  CHECK(d.distance == 2.0);
  CHECK(d.second == 7);

  const std::vector<FrameResult> majority{{1, 4.0}, {1, 6.0}, {2, 0.1}};
  CHECK(decide_second(majority).id == 1);
  CHECK(decide_second(majority).distance == 5.0);

  const std::vector<FrameResult> tie{{2, 0.1}, {1, 9.0}};
  CHECK(decide_second(tie).id == 1);
  CHECK(decide_second(tie).distance == 9.0);

  CHECK_THROWS_AS(decide_second(std::span<const FrameResult>{}), PreconditionError);
}

TEST_CASE("temporal confirmation examples") {
  const double T = 10.0;
  auto run = [&](std::vector<SecondDecision> seq) {
    TemporalState st;
    std::vector<DetectionEvent> events;
    for (const auto& d : seq) {
      auto r = temporal_confirm(st, d, T);
      st = r.state;
      if (r.event) events.push_back(*r.event);
    }
    return events;
  };

  const auto both = run({{0, 1, 2.0}, {1, 1, 3.0}});
  REQUIRE(both.size() == 1);
  CHECK(both[0].uav_id == 1);
  CHECK(both[0].previous_distance == 2.0);
  CHECK(both[0].distance == 3.0);
  CHECK(both[0].first_second == 0);
  CHECK(both[0].t == 2.0);

  CHECK(run({{0, 1, 2.0}, {1, 2, 3.0}}).empty());
  CHECK(run({{0, 1, 2.0}, {1, 1, 10.0}}).empty());
  CHECK(run({{0, 1, 12.0}, {1, 1, 3.0}}).empty());
  // a skipped second breaks the chain
  CHECK(run({{0, 1, 2.0}, {2, 1, 3.0}}).empty());

  // never on the first second, at most one per pair
  TemporalState st;
  auto r = temporal_confirm(st, {4, 1, 1.0}, T);
  CHECK_FALSE(r.event);
  CHECK_FALSE(r.state.confirmed);
  CHECK(r.state.last_second_label == 1);
  const auto events = run({{0, 1, 1.0}, {1, 1, 1.0}, {2, 1, 1.0}, {3, 1, 1.0}});
  CHECK(events.size() == 3);

  r = temporal_confirm(r.state, {5, 1, 1.0}, T);
  CHECK(r.state.confirmed);
  CHECK_THROWS_AS(temporal_confirm(r.state, {5, 1, 1.0}, T), SequencingError);
  CHECK_THROWS_AS(temporal_confirm(r.state, {3, 1, 1.0}, T), SequencingError);
}

TEST_CASE("library capacity and slot management") {
  std::mt19937_64 rng(6);
  SignatureLibrary lib;
  for (int id = 31; id >= 0; --id) lib.add(random_signature(rng, id));
  CHECK(lib.size() == 32);
  CHECK_FALSE(lib.free_id().has_value());
  for (std::size_t i = 0; i < 32; ++i) CHECK(lib.slots()[i].id == static_cast<int>(i));
  CHECK_THROWS_AS(lib.add(random_signature(rng, 0)), CapacityError);
  CHECK_THROWS_AS(lib.add(random_signature(rng, 40)), CapacityError);
  CHECK(lib.size() == 32);

  CHECK(lib.remove(12));
  CHECK_FALSE(lib.remove(12));
  CHECK(lib.free_id() == 12);
  CHECK(lib.find(12) == nullptr);
  CHECK(lib.find("uav13") == lib.find(13));
  CHECK_THROWS_AS(lib.add(random_signature(rng, 5)), ConfigurationError);
  CHECK_THROWS_AS(lib.add(random_signature(rng, 32)), ConfigurationError);
  CHECK_THROWS_AS(lib.add(random_signature(rng, -1)), ConfigurationError);
  lib.add(random_signature(rng, 12));
  CHECK(lib.size() == 32);
}

TEST_CASE("library serialization") {
  std::mt19937_64 rng(7);
  SignatureLibrary lib;
  lib.distance_threshold = 1234.5678;
  lib.add(random_signature(rng, 3, "quad-small"));
  lib.add(random_signature(rng, 0, "\xc3\xa9t\xc3\xa9"));
  const std::string first = bytes_of(lib);

  std::istringstream in(first, std::ios::binary);
  const auto back = SignatureLibrary::read(in);
  CHECK(back.distance_threshold == lib.distance_threshold);
  REQUIRE(back.size() == 2);
  for (std::size_t s = 0; s < 2; ++s) {
    CHECK(back.slots()[s].id == lib.slots()[s].id);
    CHECK(back.slots()[s].name == lib.slots()[s].name);
    for (std::size_t k = 0; k < kBins; ++k) {
      REQUIRE(back.slots()[s].mean[k] == static_cast<double>(static_cast<float>(lib.slots()[s].mean[k])));
      REQUIRE(back.slots()[s].std[k] == static_cast<double>(static_cast<float>(lib.slots()[s].std[k])));
    }
  }
  CHECK(bytes_of(back) == first);

  // header layout
  CHECK(first.substr(0, 4) == "DSIG");
  CHECK(static_cast<unsigned char>(first[4]) == 1);
  CHECK(static_cast<unsigned char>(first[5]) == 0);
  CHECK(static_cast<unsigned char>(first[6]) == 2);
  CHECK(first.size() == 4 + 2 + 1 + 8 + (2 + 10 + 8 * kBins) + (2 + 5 + 8 * kBins));

  auto bad = first;
  bad[0] = 'X';
  std::istringstream b1(bad, std::ios::binary);
  CHECK_THROWS_AS(SignatureLibrary::read(b1), FormatError);
  bad = first;
  bad[4] = 2;
  std::istringstream b2(bad, std::ios::binary);
  CHECK_THROWS_AS(SignatureLibrary::read(b2), FormatError);
  std::istringstream b3(first.substr(0, first.size() - 3), std::ios::binary);
  CHECK_THROWS_AS(SignatureLibrary::read(b3), FormatError);
  CHECK_THROWS_AS(SignatureLibrary::load("/nonexistent/lib.dsig"), FormatError);
}

TEST_CASE("nearest-rank percentile and self-distance threshold") {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(101 - i);
  CHECK(percentile(v, 99.0) == 99.0);
  CHECK(percentile(v, 100.0) == 100.0);
  CHECK(percentile(v, 0.0) == 1.0);
  CHECK(percentile({5.0, 1.0, 3.0}, 50.0) == 3.0);
  CHECK(percentile({5.0, 1.0, 3.0}, 99.0) == 5.0);
  CHECK_THROWS_AS(percentile({}, 50.0), InputDomainError);
  CHECK_THROWS_AS(percentile({1.0}, 101.0), InputDomainError);

  std::mt19937_64 rng(8);
  std::vector<std::vector<double>> frames;
  for (int i = 0; i < 30; ++i) frames.push_back(random_psd(rng));
  const auto sig = train_signature(frames, "r");
  std::vector<double> d;
  for (const auto& f : frames) d.push_back(oracle::weighted_distance(f, sig.mean, sig.std));
  std::sort(d.begin(), d.end());
  CHECK(self_distance_threshold(frames, sig) == doctest::Approx(d[29]).epsilon(1e-12));
}
