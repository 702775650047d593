#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "droneear/constants.hpp"
#include "droneear/errors.hpp"
#include "droneear/frontend.hpp"
#include "oracles.hpp"

using namespace droneear;

TEST_CASE("rate arithmetic") {
  CHECK(kAdcRate == 1'400'000.0);
  CHECK(kStreamRate == 21875.0);
  CHECK(kBinWidthHz == doctest::Approx(10.68115234375).epsilon(1e-15));
  CHECK(kSecondLen == 21875);
  CHECK(decimation_factor(1.4e6) == 64);
  CHECK(decimation_factor(0.7e6) == 32);
  CHECK_THROWS_AS(decimation_factor(1.0e6), InputDomainError);
}

TEST_CASE("log-amp model maps its range onto the code span") {
  const auto m = LogAmpModel::standard();
  CHECK(m.forward(0.01) == doctest::Approx(0.0));
  CHECK(m.forward(1.0) == doctest::Approx(4095.0));
  CHECK(m.x_max() == doctest::Approx(1.0));
  CHECK(m.forward(1e-6) == 0.0);
  CHECK(m.forward(5.0) == 4095.0);
  CHECK_THROWS_AS(LogAmpModel::from_range(0.0, 1.0), InputDomainError);
  CHECK_THROWS_AS(LogAmpModel::from_range(1.0, 0.5), InputDomainError);
}

TEST_CASE("linearize inverts the log law for every code") {
  const auto m = LogAmpModel::standard();
  const double alpha = 4095.0 / std::log(100.0);
  for (int code = 0; code <= 4095; ++code) {
    const double expect = 0.01 * std::exp(code / alpha);
    REQUIRE(linearize(code, m) == doctest::Approx(expect).epsilon(1e-12));
    REQUIRE(m.quantize(linearize(code, m)) == code);
  }
  // constant relative step
  CHECK(linearize(1001, m) / linearize(1000, m) == doctest::Approx(std::exp(1.0 / alpha)).epsilon(1e-12));
  CHECK_THROWS_AS(linearize(-1, m), InputDomainError);
  CHECK_THROWS_AS(linearize(4096, m), InputDomainError);
}

TEST_CASE("decimate64 is the block mean") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> block(64);
  for (auto& v : block) v = u(rng);
  double s = 0.0;
  for (double v : block) s += v;
  CHECK(decimate64(block) == doctest::Approx(s / 64.0).epsilon(1e-14));
  CHECK(decimate64(std::vector<double>(64, 0.25)) == doctest::Approx(0.25));
  CHECK_THROWS_AS(decimate64(std::vector<double>(63, 0.0)), InputDomainError);
  CHECK(decimate_block(std::vector<double>(32, -0.5)) == doctest::Approx(-0.5));
  CHECK_THROWS_AS(decimate_block({}), InputDomainError);
}

TEST_CASE("raw block validation") {
  RawAdcBlock b;
  b.channel_count = 3;
  b.codes.assign(3 * 64, 2048);
  CHECK_NOTHROW(b.validate());
  CHECK(b.samples_per_channel() == 64);
  b.codes.push_back(1);
  CHECK_THROWS_AS(b.validate(), InputDomainError);
  b.codes.assign(3 * 60, 0);
  CHECK_THROWS_AS(b.validate(), InputDomainError);
  b.codes.assign(3 * 64, 5000);
  CHECK_THROWS_AS(b.validate(), InputDomainError);
}

TEST_CASE("front end output is independent of how the stream is chunked") {
  const auto m = LogAmpModel::standard();
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> code(0, 4095);
  std::vector<std::uint16_t> codes(3 * 64 * 40);
  for (auto& c : codes) c = static_cast<std::uint16_t>(code(rng));

  FrontEnd whole(m, 3);
  std::vector<std::vector<double>> a(3), b(3);
  whole.push(codes, a);

  FrontEnd pieces(m, 3);
  std::size_t pos = 0;
  std::uniform_int_distribution<std::size_t> step(1, 500);
  while (pos < codes.size()) {
    const std::size_t n = std::min(step(rng), codes.size() - pos);
    pieces.push(std::span<const std::uint16_t>(codes).subspan(pos, n), b);
    pos += n;
  }
  REQUIRE(a[0].size() == 40);
  for (int c = 0; c < 3; ++c) CHECK(a[c] == b[c]);

  // each output is (mean of linearized codes - bias) / half span
  for (int s = 0; s < 40; ++s) {
    double acc = 0.0;
    for (int j = 0; j < 64; ++j) acc += linearize(codes[(s * 64 + j) * 3 + 1], m);
    CHECK(a[1][s] == doctest::Approx((acc / 64.0 - m.bias()) / m.half_span()).epsilon(1e-12));
  }
}

TEST_CASE("decode_block on constant codes") {
  const auto m = LogAmpModel::standard();
  RawAdcBlock b;
  b.codes.assign(3 * 128, static_cast<std::uint16_t>(m.quantize(m.bias())));
  const auto s = decode_block(b, m);
  REQUIRE(s.length() == 2);
  for (const auto& ch : s.channels)
    for (double v : ch) CHECK(std::abs(v) < 2.0 * m.lsb_at(m.bias()) / m.half_span());
}

TEST_CASE("periodic Hann window") {
  const auto& w = hann_window();
  const auto ref = oracle::hann(2048);
  REQUIRE(w.size() == 2048);
  for (std::size_t i = 0; i < w.size(); ++i) REQUIRE(w[i] == doctest::Approx(ref[i]).epsilon(1e-15));
  CHECK(w[0] == 0.0);
  CHECK(w[1024] == doctest::Approx(1.0));
}

TEST_CASE("pure tone peaks at its bin") {
  std::vector<double> x(2048);
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = std::sin(2.0 * oracle::kPi * 100.0 * n / 2048.0);
  const auto s = compute_spectrum(x);
  REQUIRE(s.psd.size() == 1024);
  CHECK(std::max_element(s.psd.begin(), s.psd.end()) - s.psd.begin() == 100);
  CHECK_THROWS_AS(compute_spectrum(std::vector<double>(100, 0.0)), InputDomainError);
}

TEST_CASE("Parseval holds once the dropped Nyquist bin is added back") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  std::vector<double> x(2048);
  for (auto& v : x) v = g(rng);
  const auto s = compute_spectrum(x);
  const auto w = oracle::hann(2048);
  double time_energy = 0.0, nyquist = 0.0;
  for (std::size_t n = 0; n < 2048; ++n) {
    time_energy += std::pow(x[n] * w[n], 2);
    nyquist += (n % 2 ? -1.0 : 1.0) * x[n] * w[n];
  }
  double spec = s.psd[0] + nyquist * nyquist;
  for (std::size_t k = 1; k < 1024; ++k) spec += 2.0 * s.psd[k];
  CHECK(spec / 2048.0 == doctest::Approx(time_energy).epsilon(1e-10));
}

TEST_CASE("psd and phase are consistent with the complex bins") {
  std::vector<double> x(2048);
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = std::cos(0.37 * n) + 0.2;
  const auto s = compute_spectrum(x);
  for (std::size_t k = 0; k < 1024; ++k) {
    REQUIRE(s.psd[k] == doctest::Approx(std::norm(s.bins[k])).epsilon(1e-12));
    if (std::abs(s.bins[k]) > 1e-6) REQUIRE(s.phase[k] == doctest::Approx(std::arg(s.bins[k])).epsilon(1e-12));
  }
}

TEST_CASE("make_spectrum_frame slices each channel") {
  std::vector<std::vector<double>> ch(2, std::vector<double>(5000));
  for (std::size_t n = 0; n < 5000; ++n) {
    ch[0][n] = std::sin(0.1 * n);
    ch[1][n] = std::cos(0.2 * n);
  }
  const auto f = make_spectrum_frame(1, ch, 2048);
  CHECK(f.frame_index == 1);
  REQUIRE(f.channels.size() == 2);
  const auto direct = compute_spectrum(std::span<const double>(ch[1]).subspan(2048, 2048));
  CHECK(f.channels[1].psd == direct.psd);
  CHECK_THROWS_AS(make_spectrum_frame(2, ch, 4096), InputDomainError);
  CHECK(frame_count(21875) == 10);
}

TEST_CASE("normalize_psd") {
  const std::vector<double> p{1.0, 3.0, 0.0, 4.0};
  const auto n = normalize_psd(p);
  CHECK(n[0] == doctest::Approx(0.125));
  CHECK(n[3] == doctest::Approx(0.5));
  CHECK(std::accumulate(n.begin(), n.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(normalize_psd(std::vector<double>(4, 0.0)), DegenerateInputError);
  CHECK_THROWS_AS(normalize_psd(std::vector<double>{1.0, -1.0}), InputDomainError);
  CHECK_THROWS_AS(normalize_psd(std::vector<double>{1.0, NAN}), InputDomainError);
}
