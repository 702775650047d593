#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "droneear/errors.hpp"
#include "droneear/io.hpp"
#include "droneear/pipeline.hpp"
#include "oracles.hpp"
#include "scenario.hpp"

using namespace droneear;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const SignatureLibrary& library() {
  static const SignatureLibrary lib = scenario::train_library(12.0, 100);
  return lib;
}

std::vector<std::string> csv_rows(const std::string& text) {
  std::vector<std::string> rows;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) rows.push_back(l);
  return rows;
}

std::vector<double> column(const std::vector<std::string>& rows, std::size_t col) {
  std::vector<double> v;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    std::istringstream in(rows[r]);
    std::string cell;
    for (std::size_t c = 0; c <= col; ++c) std::getline(in, cell, ',');
    v.push_back(std::stod(cell));
  }
  return v;
}

void write_raw(const std::string& path, const SceneConfig& cfg) {
  const auto block = logamp_adc(scene_signals(cfg), cfg.logamp, cfg.seed, cfg.adc_full_scale);
  write_raw_adc(path, block);
}

}  // namespace

TEST_CASE("noise-only input produces no events and no DOA") {
  const auto cfg = scenario::scene("none", 0.0, 10.0, 7);
  PipelineSummary sum;
  const auto lines =
      scenario::run_lines(render_through_frontend(cfg), scenario::true_geometry(cfg), library(), kSecondLen / 4, &sum);
  CHECK(scenario::of_type(lines, "event").empty());
  CHECK(scenario::of_type(lines, "doa").empty());
  CHECK(sum.frames_gated_on == 0);
  CHECK(sum.windows == 50);
}

TEST_CASE("quad-small at 5 m: one confirmed id and a 5 Hz DOA stream") {
  const auto cfg = scenario::scene("quad-small", 0.0, 10.0, 501);
  PipelineSummary sum;
  const auto lines =
      scenario::run_lines(render_through_frontend(cfg), scenario::true_geometry(cfg), library(), kSecondLen / 4, &sum);

  std::set<int> ids;
  const auto events = scenario::of_type(lines, "event");
  REQUIRE_FALSE(events.empty());
  for (const auto& e : events) {
    const auto j = json::parse(e);
    ids.insert(j["uav_id"].get<int>());
    CHECK(j["uav_name"] == "quad-small");
    CHECK(j["second_pair"][1].get<int>() == j["second_pair"][0].get<int>() + 1);
    CHECK(j["t"].get<double>() == doctest::Approx(j["second_pair"][1].get<double>() + 1.0));
    CHECK(j.contains("doa"));
  }
  CHECK(ids.size() == 1);

  // every window is gated on: 5 estimates per second, 0.2 s apart
  const auto doa = scenario::of_type(lines, "doa");
  CHECK(doa.size() == 50);
  CHECK(sum.doa_estimates == 50);
  for (std::size_t i = 0; i < doa.size(); ++i) {
    const auto j = json::parse(doa[i]);
    CHECK(j["window"].get<std::size_t>() == i);
    CHECK(j["t"].get<double>() == doctest::Approx(0.2 * (i + 1)));
    CHECK(angular_difference_deg(j["beamformer"]["azimuth_deg"].get<double>(), 0.0) <= 5.0);
  }
  for (int s = 0; s < 10; ++s) {
    std::size_t in_second = 0;
    for (const auto& d : doa) {
      const double t = json::parse(d)["t"].get<double>();
      in_second += t > s + 1e-9 && t <= s + 1 + 1e-9;
    }
    CHECK(in_second == 5);
  }
  CHECK(scenario::of_type(lines, "second").size() == 10);
  CHECK(sum.frames == 106);
}

TEST_CASE("output is deterministic and independent of chunking") {
  const auto cfg = scenario::scene("quad-mid", 90.0, 4.0, 77);
  const auto stream = render_through_frontend(cfg);
  const auto geo = scenario::true_geometry(cfg);
  const auto a = scenario::run_lines(stream, geo, library());
  const auto b = scenario::run_lines(stream, geo, library());
  const auto c = scenario::run_lines(stream, geo, library(), 997);
  CHECK(a == b);
  CHECK(a == c);
  CHECK(render_through_frontend(cfg).channels == stream.channels);
}

TEST_CASE("plot data table") {
  DecimatedStream tone;
  tone.channels.assign(2, std::vector<double>(3 * kFrameLen));
  for (std::size_t n = 0; n < tone.length(); ++n) {
    tone.channels[0][n] = std::sin(2.0 * oracle::kPi * 200.0 * n / 2048.0);
    tone.channels[1][n] = 0.5 * std::sin(2.0 * oracle::kPi * 37.0 * n / 2048.0);
  }
  std::ostringstream out;
  emit_plot_data(tone, out);
  const auto rows = csv_rows(out.str());
  REQUIRE(rows.size() == 1025);
  CHECK(rows[0] == "bin_hz,psd_ch0,psd_ch1");
  const auto hz = column(rows, 0), ch0 = column(rows, 1), ch1 = column(rows, 2);
  CHECK(hz[1] == doctest::Approx(21875.0 / 2048.0));
  CHECK(hz[1023] == doctest::Approx(1023.0 * 21875.0 / 2048.0));
  CHECK(std::max_element(ch0.begin(), ch0.end()) - ch0.begin() == 200);
  CHECK(std::max_element(ch1.begin(), ch1.end()) - ch1.begin() == 37);
  // a single dominant row: the next largest is the Hann side bin at -6 dB
  auto sorted = ch0;
  std::sort(sorted.rbegin(), sorted.rend());
  CHECK(sorted[0] >= 3.9 * sorted[1]);

  DecimatedStream short_input;
  short_input.channels.assign(1, std::vector<double>(100, 0.0));
  std::ostringstream o2;
  CHECK_THROWS_AS(emit_plot_data(short_input, o2), InputDomainError);
}

TEST_CASE("quad-large plot shows a decaying harmonic comb") {
  const auto cfg = scenario::scene("quad-large", 0.0, 3.0, 5);
  std::ostringstream out;
  emit_plot_data(render_through_frontend(cfg), out);
  const auto rows = csv_rows(out.str());
  REQUIRE(rows.size() == 1025);
  const auto psd = column(rows, 1);
  const double f0 = preset("quad-large").fundamental_hz;
  std::vector<double> energy;
  for (int h = 1; h <= 12; ++h) {
    const auto centre = static_cast<long>(std::lround(h * f0 / kBinWidthHz));
    double e = 0.0;
    for (long k = centre - 2; k <= centre + 2; ++k) e += psd[k];
    energy.push_back(e);
    // the harmonic stands well above the bins half way to its neighbour
    const auto mid = static_cast<long>(std::lround((h + 0.5) * f0 / kBinWidthHz));
    CHECK(psd[centre] > 10.0 * psd[mid]);
  }
  for (std::size_t h = 1; h < energy.size(); ++h) CHECK(energy[h] < energy[h - 1]);
}

TEST_CASE("threshold sweep") {
  const auto sw = sweep_thresholds({0.01, 0.02, 0.015}, {3.0, 8.0, 12.0}, 10);
  CHECK(sw.noise_max == 0.02);
  CHECK(sw.drone_min == 3.0);
  REQUIRE(sw.proposed.has_value());
  CHECK(*sw.proposed == doctest::Approx(std::sqrt(0.02 * 3.0)));
  REQUIRE(sw.rows.size() == 10);
  for (std::size_t i = 1; i < sw.rows.size(); ++i) {
    CHECK(sw.rows[i].threshold > sw.rows[i - 1].threshold);
    CHECK(sw.rows[i].false_alarm_rate <= sw.rows[i - 1].false_alarm_rate);
    CHECK(sw.rows[i].detection_rate <= sw.rows[i - 1].detection_rate);
  }
  CHECK(sw.rows.front().false_alarm_rate == 1.0);
  CHECK(sw.rows.back().detection_rate == 0.0);
  CHECK_FALSE(sweep_thresholds({0.5}, {0.4}).proposed.has_value());
  CHECK_THROWS_AS(sweep_thresholds({}, {1.0}), InputDomainError);

  // the default gate separates rendered noise from a drone at 5 m
  const auto noise = window_gate_statistics(render_through_frontend(scenario::scene("none", 0.0, 3.0, 9)),
                                            std::vector<double>{1.0, 0.5, 2.0});
  const auto drone = window_gate_statistics(render_through_frontend(scenario::scene("quad-large", 0.0, 3.0, 9)),
                                            std::vector<double>{1.0, 0.5, 2.0});
  CHECK(*std::max_element(noise.begin(), noise.end()) < kDefaultGateThreshold);
  CHECK(*std::min_element(drone.begin(), drone.end()) > kDefaultGateThreshold);
}

TEST_CASE("configuration is validated before any processing") {
  const auto dir = fs::temp_directory_path() / ("droneear_pipe_" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  const auto cfg = scenario::scene("none", 0.0, 2.0, 3);
  PipelineConfig pc;
  pc.input_path = (dir / "in.raw").string();
  pc.geometry_path = (dir / "geo.json").string();
  pc.library_path = (dir / "lib.dsig").string();
  std::ostringstream sink;
  CHECK_THROWS_AS(run_pipeline(pc, sink), ConfigurationError);

  write_raw(pc.input_path, cfg);
  save_geometry(pc.geometry_path, scenario::true_geometry(cfg));
  CHECK_THROWS_AS(run_pipeline(pc, sink), ConfigurationError);
  library().save(pc.library_path);
  CHECK_NOTHROW(pc.validate());

  auto bad = pc;
  bad.settings.gate_threshold = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigurationError);
  bad = pc;
  bad.settings.noise_lambda = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigurationError);
  bad = pc;
  bad.input_format = "mp3";
  CHECK_THROWS_AS(bad.validate(), ConfigurationError);
  CHECK(sink.str().empty());

  const auto summary = run_pipeline(pc, sink);
  CHECK(summary.events == 0);
  CHECK(summary.audio_seconds == doctest::Approx(2.0));

  // a library with a bad version is a startup error
  {
    std::fstream f(pc.library_path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    f.put(9);
  }
  CHECK_THROWS_AS(run_pipeline(pc, sink), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("a corrupt stream emits an error line and halts") {
  const auto dir = fs::temp_directory_path() / ("droneear_pipe_" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  const auto cfg = scenario::scene("quad-small", 0.0, 2.0, 4);
  PipelineConfig pc;
  pc.input_path = (dir / "in.raw").string();
  pc.geometry_path = (dir / "geo.json").string();
  pc.library_path = (dir / "lib.dsig").string();
  write_raw(pc.input_path, cfg);
  fs::resize_file(pc.input_path, fs::file_size(pc.input_path) - 3);
  save_geometry(pc.geometry_path, scenario::true_geometry(cfg));
  library().save(pc.library_path);

  std::ostringstream sink;
  CHECK_THROWS_AS(run_pipeline(pc, sink), FormatError);
  const auto lines = csv_rows(sink.str());
  REQUIRE_FALSE(lines.empty());
  const auto last = json::parse(lines.back());
  CHECK(last["type"] == "error");
  CHECK(last["message"].get<std::string>().find("truncated") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("combined psd compensates gains") {
  std::vector<std::vector<double>> ch(2, std::vector<double>(kFrameLen));
  for (std::size_t n = 0; n < kFrameLen; ++n) {
    ch[0][n] = std::sin(0.2 * n);
    ch[1][n] = 2.0 * std::sin(0.2 * n);
  }
  const auto f = make_spectrum_frame(0, ch, 0);
  const std::vector<double> gains{0.5, 1.0};
  const auto p = combined_psd(f, gains);
  for (std::size_t k = 0; k < kBins; k += 50)
    CHECK(p[k] == doctest::Approx(0.5 * (f.channels[0].psd[k] / 0.25 + f.channels[1].psd[k])));
}
