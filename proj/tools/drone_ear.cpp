// drone-ear: command-line front end for the library.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "droneear/calibration.hpp"
#include "droneear/classifier.hpp"
#include "droneear/errors.hpp"
#include "droneear/io.hpp"
#include "droneear/pipeline.hpp"
#include "droneear/simulator.hpp"

using namespace droneear;
using nlohmann::json;

namespace {

std::vector<double> unit_gains(std::size_t n) { return std::vector<double>(n, 1.0); }

std::vector<double> gains_for(const std::string& geometry_path, std::size_t channels) {
  if (geometry_path.empty()) return unit_gains(channels);
  auto g = load_geometry(geometry_path);
  if (g.size() != channels) throw ConfigurationError("geometry/input channel count mismatch");
  return g.gains;
}

void write_truth(const std::string& path, const SceneConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["duration_s"] = cfg.duration_s;
  j["sound_speed"] = cfg.sound_speed;
  j["mics"] = json::array();
  for (const auto& p : cfg.mics.positions) j["mics"].push_back({p[0], p[1], p[2]});
  j["gains"] = cfg.mics.gains;
  if (cfg.source) j["source"] = cfg.source->name;
  j["trajectory"] = json::array();
  for (const auto& tp : cfg.trajectory)
    j["trajectory"].push_back({{"t", tp.t}, {"position", {tp.position[0], tp.position[1], tp.position[2]}}});
  j["pulses"] = json::array();
  for (const auto& p : cfg.pulses) j["pulses"].push_back({p[0], p[1], p[2]});
  if (cfg.noise_db) j["noise_db"] = *cfg.noise_db;
  std::ofstream out(path);
  if (!out) throw ConfigurationError("cannot write " + path);
  out << j.dump(2) << "\n";
}

int cmd_simulate(const std::string& config_path, const std::string& out_path, const std::string& wav_path,
                 const std::string& truth_path, std::optional<std::uint64_t> seed) {
  auto cfg = SceneConfig::load(config_path);
  if (seed) cfg.seed = *seed;
  auto signals = scene_signals(cfg);
  if (!wav_path.empty()) {
    WavData wav;
    for (const auto& ch : signals) {
      std::vector<double> scaled(ch.size());
      for (std::size_t n = 0; n < ch.size(); ++n) scaled[n] = std::clamp(ch[n] / cfg.adc_full_scale, -1.0, 1.0);
      wav.channels.push_back(std::move(scaled));
    }
    write_wav(wav_path, wav);
  }
  if (!out_path.empty()) {
    AdcRenderer adc(std::move(signals), cfg.logamp, cfg.adc_full_scale, cfg.seed);
    RawAdcWriter writer(out_path, adc.channel_count(), adc.adc_rate());
    std::vector<std::uint16_t> codes;
    while (adc.next(kStreamRateHz / 4, codes)) writer.write(codes);
    writer.close();
    if (adc.stats().saturation_warning())
      std::cerr << "warning: " << adc.stats().clipped << " of " << adc.stats().total
                << " converter samples clipped (saturation)\n";
  }
  if (!truth_path.empty()) write_truth(truth_path, cfg);
  return 0;
}

int cmd_calibrate(const std::string& input, const std::string& format, const std::string& out_path,
                  double sound_speed) {
  const auto stream = read_stream(input, format);
  const auto set = segment_pulses(stream);
  CalibrationOptions opt;
  opt.sound_speed = sound_speed;
  const auto result = calibrate(set, opt);
  save_geometry(out_path, result.geometry, result.warnings);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  json j;
  j["pulses_found"] = set.pulse_count();
  j["pulses_used"] = result.pulses_used;
  j["pulses_discarded"] = result.pulses_discarded;
  j["direction_spread_deg"] = result.direction_spread_deg;
  j["gains"] = result.geometry.gains;
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_train(const std::string& input, const std::string& format, const std::string& name,
              const std::string& library_path, const std::string& geometry_path, double gate, int id,
              bool calibrate_threshold) {
  const auto stream = read_stream(input, format);
  const auto gains = gains_for(geometry_path, stream.channels.size());
  const auto frames = extract_training_frames(stream, gains, gate);
  SignatureLibrary lib;
  if (std::ifstream(library_path).good()) lib = SignatureLibrary::load(library_path);
  if (lib.find(name)) throw ConfigurationError("library already has a signature named '" + name + "'");
  if (id < 0) {
    const auto free = lib.free_id();
    if (!free) throw CapacityError("library: all 32 slots are in use");
    id = *free;
  }
  auto sig = train_signature(frames, name, id);
  if (calibrate_threshold) lib.distance_threshold = std::max(lib.distance_threshold, self_distance_threshold(frames, sig));
  lib.add(std::move(sig));
  lib.save(library_path);
  std::cout << json{{"id", id}, {"name", name}, {"frames", frames.size()}, {"threshold", lib.distance_threshold}}.dump()
            << "\n";
  return 0;
}

int cmd_classify(const std::string& input, const std::string& format, const std::string& library_path,
                 const std::string& geometry_path, double gate) {
  const auto stream = read_stream(input, format);
  const auto lib = SignatureLibrary::load(library_path);
  const auto gains = gains_for(geometry_path, stream.channels.size());
  const auto stats = window_gate_statistics(stream, gains);
  TemporalState state;
  const std::size_t frames = frame_count(stream.length());
  std::vector<FrameResult> second_results;
  std::size_t second = 0;
  auto flush = [&]() {
    if (second_results.empty()) return;
    const auto d = decide_second(second_results, second);
    const Signature* s = lib.find(d.id);
    json j{{"type", "second"}, {"second", second}, {"uav_id", d.id}, {"uav_name", s ? s->name : ""},
           {"distance", d.distance}, {"frames", second_results.size()}};
    std::cout << j.dump() << "\n";
    auto r = temporal_confirm(state, d, lib.distance_threshold);
    state = r.state;
    if (r.event)
      std::cout << json{{"type", "event"}, {"t", r.event->t}, {"uav_id", r.event->uav_id},
                        {"uav_name", s ? s->name : ""}, {"distance", r.event->distance}}
                       .dump()
                << "\n";
    second_results.clear();
  };
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t end = (f + 1) * kFrameLen;
    const std::size_t s = (end - 1) / kSecondLen;
    if (s != second) {
      flush();
      second = s;
    }
    const std::size_t w = (f * kFrameLen + kFrameLen / 2) / kWindowLen;
    if (gate > 0.0 && (w >= stats.size() || !(stats[w] > gate))) continue;
    const auto sf = make_spectrum_frame(f, stream.channels, f * kFrameLen);
    second_results.push_back(classify(normalize_psd(combined_psd(sf, gains)), lib));
  }
  flush();
  return 0;
}

int cmd_library_list(const std::string& path) {
  const auto lib = SignatureLibrary::load(path);
  std::cout << "version " << lib.version << ", " << lib.size() << "/" << kMaxSignatures
            << " slots, threshold " << lib.distance_threshold << "\n";
  for (const auto& s : lib.slots()) std::cout << "  " << s.id << "\t" << s.name << "\n";
  return 0;
}

int cmd_library_add(const std::string& path, const std::string& from, const std::string& name, int id) {
  SignatureLibrary lib;
  if (std::ifstream(path).good()) lib = SignatureLibrary::load(path);
  const auto src = SignatureLibrary::load(from);
  const Signature* s = src.find(name);
  if (!s) throw ConfigurationError("no signature named '" + name + "' in " + from);
  Signature copy = *s;
  if (id < 0) {
    const auto free = lib.free_id();
    if (!free) throw CapacityError("library: all 32 slots are in use");
    id = *free;
  }
  copy.id = id;
  lib.add(std::move(copy));
  lib.distance_threshold = std::max(lib.distance_threshold, src.distance_threshold);
  lib.save(path);
  return 0;
}

int cmd_library_remove(const std::string& path, int id) {
  auto lib = SignatureLibrary::load(path);
  if (!lib.remove(id)) throw ConfigurationError("no slot with id " + std::to_string(id));
  lib.save(path);
  return 0;
}

int cmd_sweep(const std::string& noise, const std::string& drone, const std::string& format,
              const std::string& geometry_path) {
  const auto ns = read_stream(noise, format);
  const auto ds = read_stream(drone, format);
  const auto gains = gains_for(geometry_path, ns.channels.size());
  const auto sw = sweep_thresholds(window_gate_statistics(ns, gains), window_gate_statistics(ds, gains));
  std::cout << "threshold,false_alarm_rate,detection_rate\n";
  for (const auto& r : sw.rows) std::cout << r.threshold << "," << r.false_alarm_rate << "," << r.detection_rate << "\n";
  std::cerr << "noise max " << sw.noise_max << ", drone min " << sw.drone_min;
  if (sw.proposed)
    std::cerr << ", proposed threshold " << *sw.proposed << "\n";
  else
    std::cerr << ", classes overlap: no threshold separates them\n";
  return 0;
}

int cmd_plot(const std::string& input, const std::string& format, const std::string& out_path) {
  const auto stream = read_stream(input, format);
  if (out_path.empty() || out_path == "-") {
    emit_plot_data(stream, std::cout);
  } else {
    std::ofstream out(out_path);
    if (!out) throw ConfigurationError("cannot write " + out_path);
    emit_plot_data(stream, out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"drone-ear: acoustic UAV detection, classification and DOA"};
  app.require_subcommand(1);

  std::string input, format, out, wav, truth, config, library, geometry, name, from, noise, drone;
  double gate = kDefaultGateThreshold, sound_speed = kSoundSpeed;
  int id = -1;
  bool calib_threshold = false;
  PipelineConfig pc;

  auto* sim = app.add_subcommand("simulate", "render a scene config to a raw converter file");
  sim->add_option("config", config, "scene config (key=value)")->required()->check(CLI::ExistingFile);
  sim->add_option("-o,--out", out, "raw converter output");
  sim->add_option("--wav", wav, "float WAV output (full-scale units)");
  sim->add_option("--truth", truth, "ground-truth JSON output");
  std::optional<std::uint64_t> seed;
  sim->add_option("--seed", seed, "override the config seed");

  auto* cal = app.add_subcommand("calibrate", "estimate array geometry and gains from a pulse recording");
  cal->add_option("input", input)->required()->check(CLI::ExistingFile);
  cal->add_option("-o,--out", out, "geometry JSON")->required();
  cal->add_option("--format", format, "raw-adc or wav");
  cal->add_option("--sound-speed", sound_speed);

  auto* train = app.add_subcommand("train", "train a signature and add it to a library");
  train->add_option("input", input)->required()->check(CLI::ExistingFile);
  train->add_option("-n,--name", name)->required();
  train->add_option("-l,--library", library)->required();
  train->add_option("-g,--geometry", geometry);
  train->add_option("--format", format);
  train->add_option("--gate-threshold", gate, "0 trains on every frame");
  train->add_option("--id", id);
  train->add_flag("--calibrate-threshold", calib_threshold, "set the library distance threshold from this data");

  auto* cls = app.add_subcommand("classify", "per-second decisions and confirmations, no DOA");
  cls->add_option("input", input)->required()->check(CLI::ExistingFile);
  cls->add_option("-l,--library", library)->required()->check(CLI::ExistingFile);
  cls->add_option("-g,--geometry", geometry);
  cls->add_option("--format", format);
  cls->add_option("--gate-threshold", gate);

  auto* lib = app.add_subcommand("library", "inspect or edit a signature library");
  lib->require_subcommand(1);
  auto* lib_list = lib->add_subcommand("list", "print slots and the distance threshold");
  lib_list->add_option("library", library)->required()->check(CLI::ExistingFile);
  auto* lib_add = lib->add_subcommand("add", "copy a named signature from another library");
  lib_add->add_option("library", library)->required();
  lib_add->add_option("--from", from)->required()->check(CLI::ExistingFile);
  lib_add->add_option("-n,--name", name)->required();
  lib_add->add_option("--id", id);
  auto* lib_rm = lib->add_subcommand("remove", "free a slot by id");
  lib_rm->add_option("library", library)->required()->check(CLI::ExistingFile);
  lib_rm->add_option("--id", id)->required();

  auto* run = app.add_subcommand("run", "detect, classify and locate; JSON lines on stdout");
  run->add_option("input", pc.input_path)->required();
  run->add_option("-g,--geometry", pc.geometry_path)->required();
  run->add_option("-l,--library", pc.library_path)->required();
  run->add_option("-o,--output", pc.output_path);
  run->add_option("--format", pc.input_format);
  run->add_option("--gate-threshold", pc.settings.gate_threshold);
  run->add_option("--scan-step", pc.settings.scan_step_deg);
  run->add_option("--noise-lambda", pc.settings.noise_lambda);

  auto* sweep = app.add_subcommand("threshold-sweep", "gate statistics of noise-only versus drone recordings");
  sweep->add_option("--noise", noise)->required()->check(CLI::ExistingFile);
  sweep->add_option("--drone", drone)->required()->check(CLI::ExistingFile);
  sweep->add_option("-g,--geometry", geometry);
  sweep->add_option("--format", format);

  auto* plot = app.add_subcommand("plot", "average per-channel PSD as CSV");
  plot->add_option("input", input)->required()->check(CLI::ExistingFile);
  plot->add_option("-o,--out", out);
  plot->add_option("--format", format);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return cmd_simulate(config, out, wav, truth, seed);
    if (*cal) return cmd_calibrate(input, format, out, sound_speed);
    if (*train) return cmd_train(input, format, name, library, geometry, gate, id, calib_threshold);
    if (*cls) return cmd_classify(input, format, library, geometry, gate);
    if (*lib_list) return cmd_library_list(library);
    if (*lib_add) return cmd_library_add(library, from, name, id);
    if (*lib_rm) return cmd_library_remove(library, id);
    if (*run) {
      const auto summary = run_pipeline(pc, std::cout);
      std::cerr << summary.to_json() << "\n";
      return 0;
    }
    if (*sweep) return cmd_sweep(noise, drone, format, geometry);
    if (*plot) return cmd_plot(input, format, out);
  } catch (const Error& e) {
    std::cerr << "drone-ear: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "drone-ear: unexpected failure: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
