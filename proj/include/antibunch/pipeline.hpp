#pragma once

// End-to-end runs: simulate or load timestamp streams, then run any of the
// g2cw, g2pw, lifetime and blinking stages and collect a JSON report.

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "antibunch/blinking.hpp"
#include "antibunch/core.hpp"
#include "antibunch/correlator.hpp"
#include "antibunch/fit/g2.hpp"
#include "antibunch/fit/lifetime.hpp"
#include "antibunch/io/csv.hpp"
#include "antibunch/io/report.hpp"
#include "antibunch/io/timestamp_file.hpp"
#include "antibunch/sim.hpp"

namespace antibunch {

enum class ConfigErrc { invalid_config, missing_period, missing_sync, inconsistent_bin_width };

inline const char* to_string(ConfigErrc c) {
  switch (c) {
    case ConfigErrc::invalid_config: return "invalid_config";
    case ConfigErrc::missing_period: return "missing_period";
    case ConfigErrc::missing_sync: return "missing_sync";
    case ConfigErrc::inconsistent_bin_width: return "inconsistent_bin_width";
  }
  return "invalid_config";
}

class ConfigError : public std::runtime_error {
 public:
  ConfigError(ConfigErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ConfigErrc code() const { return code_; }

 private:
  ConfigErrc code_;
};

inline const std::vector<std::string>& known_stages() {
  static const std::vector<std::string> stages{"g2cw", "g2pw", "lifetime", "blinking"};
  return stages;
}

struct SimulationSettings {
  double duration_s = 10.0;
  sim::EmitterModel emitter;
  sim::ExcitationConfig excitation;
  sim::DetectorModel detector;
};

struct AnalysisSettings {
  Picoseconds bin_width = 500;
  Picoseconds cw_window = 1'000'000;
  std::optional<Picoseconds> pw_window;  // defaults to (side_peaks + 0.5) * period
  std::optional<Picoseconds> period;     // defaults to the median sync spacing
  int side_peaks = 5;
  double threshold_per_ms = 50.0;
  Picoseconds trace_bin = kPsPerMs;
  int lifetime_components = 3;
  bool exclude_censored = true;
};

struct PipelineConfig {
  std::string mode = "simulate";
  std::vector<std::string> stages{"g2cw", "g2pw", "lifetime", "blinking"};
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  std::string input;       // PTST file, analyze mode
  std::string output_dir;  // CSV side files; empty keeps histograms inline
  bool write_streams = false;
  SimulationSettings simulation;
  AnalysisSettings analysis;

  bool wants(const std::string& stage) const {
    return std::find(stages.begin(), stages.end(), stage) != stages.end();
  }
};

namespace detail {

using io::Json;

inline void reject_unknown(const Json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(ConfigErrc::invalid_config, where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* key) { return k == key; }))
      throw ConfigError(ConfigErrc::invalid_config, "unknown key '" + k + "' in " + where);
  }
}

template <class T>
void patch(const Json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(ConfigErrc::invalid_config, std::string("bad value for '") + key + "': " + e.what());
  }
}

template <class T>
void patch(const Json& j, const char* key, std::optional<T>& field) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    field.reset();
    return;
  }
  T v{};
  patch(j, key, v);
  field = v;
}

inline sim::BlinkingKind blinking_kind(const std::string& s) {
  if (s == "none") return sim::BlinkingKind::none;
  if (s == "two_state_exponential") return sim::BlinkingKind::two_state_exponential;
  if (s == "power_law") return sim::BlinkingKind::power_law;
  throw ConfigError(ConfigErrc::invalid_config, "unknown blinking kind '" + s + "'");
}

inline const char* to_string(sim::BlinkingKind k) {
  switch (k) {
    case sim::BlinkingKind::none: return "none";
    case sim::BlinkingKind::two_state_exponential: return "two_state_exponential";
    case sim::BlinkingKind::power_law: return "power_law";
  }
  return "none";
}

inline void apply_json(const Json& j, sim::BlinkingLaw& b) {
  reject_unknown(j, {"kind", "alpha_on", "alpha_off", "min_dwell_ms", "max_dwell_ms", "mean_on_ms", "mean_off_ms",
                     "off_emission_rate"},
                 "blinking");
  if (j.contains("kind")) {
    std::string kind;
    patch(j, "kind", kind);
    b.kind = blinking_kind(kind);
  }
  patch(j, "alpha_on", b.alpha_on);
  patch(j, "alpha_off", b.alpha_off);
  patch(j, "min_dwell_ms", b.min_dwell_ms);
  patch(j, "max_dwell_ms", b.max_dwell_ms);
  patch(j, "mean_on_ms", b.mean_on_ms);
  patch(j, "mean_off_ms", b.mean_off_ms);
  patch(j, "off_emission_rate", b.off_emission_rate);
}

inline void apply_json(const Json& j, sim::EmitterModel& e) {
  reject_unknown(j, {"lifetime_ns", "biexciton_lifetime_ns", "biexciton_probability", "quantum_yield",
                     "background_lifetime_ns", "blinking"},
                 "emitter");
  patch(j, "lifetime_ns", e.lifetime_ns);
  patch(j, "biexciton_lifetime_ns", e.biexciton_lifetime_ns);
  patch(j, "biexciton_probability", e.biexciton_probability);
  patch(j, "quantum_yield", e.quantum_yield);
  patch(j, "background_lifetime_ns", e.background_lifetime_ns);
  if (j.contains("blinking")) apply_json(j.at("blinking"), e.blinking);
}

inline void apply_json(const Json& j, sim::ExcitationConfig& x) {
  reject_unknown(j, {"mode", "cw_excitation_rate", "pulse_period_ps", "excitation_probability_per_pulse",
                     "pulse_width_ps"},
                 "excitation");
  if (j.contains("mode")) {
    std::string mode;
    patch(j, "mode", mode);
    if (mode == "cw") x.mode = sim::ExcitationMode::cw;
    else if (mode == "pulsed") x.mode = sim::ExcitationMode::pulsed;
    else throw ConfigError(ConfigErrc::invalid_config, "excitation mode must be cw or pulsed");
  }
  patch(j, "cw_excitation_rate", x.cw_excitation_rate);
  patch(j, "pulse_period_ps", x.pulse_period);
  patch(j, "excitation_probability_per_pulse", x.excitation_probability_per_pulse);
  patch(j, "pulse_width_ps", x.pulse_width);
}

inline void apply_json(const Json& j, sim::DetectorModel& d) {
  reject_unknown(j, {"efficiency", "dark_rate_per_ms", "jitter_sigma_ps", "dead_time_ps", "splitter_ratio",
                     "record_sync"},
                 "detector");
  patch(j, "efficiency", d.efficiency);
  patch(j, "dark_rate_per_ms", d.dark_rate);
  patch(j, "jitter_sigma_ps", d.jitter_sigma);
  patch(j, "dead_time_ps", d.dead_time);
  patch(j, "splitter_ratio", d.splitter_ratio);
  patch(j, "record_sync", d.record_sync);
}

}  // namespace detail

// Overrides only the keys present in `j`; unknown keys are rejected.
inline void apply_json(const io::Json& j, PipelineConfig& c) {
  using detail::patch;
  detail::reject_unknown(j, {"mode", "stages", "seed", "workers", "input", "output_dir", "write_streams", "simulation",
                             "analysis"},
                         "config");
  patch(j, "mode", c.mode);
  patch(j, "stages", c.stages);
  patch(j, "seed", c.seed);
  patch(j, "workers", c.workers);
  patch(j, "input", c.input);
  patch(j, "output_dir", c.output_dir);
  patch(j, "write_streams", c.write_streams);
  if (j.contains("simulation")) {
    const auto& s = j.at("simulation");
    detail::reject_unknown(s, {"duration_s", "emitter", "excitation", "detector"}, "simulation");
    patch(s, "duration_s", c.simulation.duration_s);
    if (s.contains("emitter")) detail::apply_json(s.at("emitter"), c.simulation.emitter);
    if (s.contains("excitation")) detail::apply_json(s.at("excitation"), c.simulation.excitation);
    if (s.contains("detector")) detail::apply_json(s.at("detector"), c.simulation.detector);
  }
  if (j.contains("analysis")) {
    const auto& a = j.at("analysis");
    detail::reject_unknown(a, {"bin_width_ps", "cw_window_ps", "pw_window_ps", "period_ps", "side_peaks",
                               "threshold_per_ms", "trace_bin_ps", "lifetime_components", "exclude_censored"},
                           "analysis");
    patch(a, "bin_width_ps", c.analysis.bin_width);
    patch(a, "cw_window_ps", c.analysis.cw_window);
    patch(a, "pw_window_ps", c.analysis.pw_window);
    patch(a, "period_ps", c.analysis.period);
    patch(a, "side_peaks", c.analysis.side_peaks);
    patch(a, "threshold_per_ms", c.analysis.threshold_per_ms);
    patch(a, "trace_bin_ps", c.analysis.trace_bin);
    patch(a, "lifetime_components", c.analysis.lifetime_components);
    patch(a, "exclude_censored", c.analysis.exclude_censored);
  }
}

inline io::Json to_json(const PipelineConfig& c) {
  using io::Json;
  const auto& e = c.simulation.emitter;
  const auto& b = e.blinking;
  const auto& x = c.simulation.excitation;
  const auto& d = c.simulation.detector;
  const auto& a = c.analysis;
  auto opt = [](const auto& o) { return o ? Json(*o) : Json(nullptr); };
  Json j;
  j["mode"] = c.mode;
  j["stages"] = c.stages;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["input"] = c.input;
  j["output_dir"] = c.output_dir;
  j["write_streams"] = c.write_streams;
  j["simulation"] = Json{
      {"duration_s", c.simulation.duration_s},
      {"emitter",
       Json{{"lifetime_ns", e.lifetime_ns},
            {"biexciton_lifetime_ns", opt(e.biexciton_lifetime_ns)},
            {"biexciton_probability", e.biexciton_probability},
            {"quantum_yield", e.quantum_yield},
            {"background_lifetime_ns", opt(e.background_lifetime_ns)},
            {"blinking", Json{{"kind", detail::to_string(b.kind)},
                              {"alpha_on", b.alpha_on},
                              {"alpha_off", b.alpha_off},
                              {"min_dwell_ms", b.min_dwell_ms},
                              {"max_dwell_ms", b.max_dwell_ms},
                              {"mean_on_ms", b.mean_on_ms},
                              {"mean_off_ms", b.mean_off_ms},
                              {"off_emission_rate", b.off_emission_rate}}}}},
      {"excitation", Json{{"mode", x.mode == sim::ExcitationMode::cw ? "cw" : "pulsed"},
                          {"cw_excitation_rate", x.cw_excitation_rate},
                          {"pulse_period_ps", x.pulse_period},
                          {"excitation_probability_per_pulse", x.excitation_probability_per_pulse},
                          {"pulse_width_ps", x.pulse_width}}},
      {"detector", Json{{"efficiency", d.efficiency},
                        {"dark_rate_per_ms", d.dark_rate},
                        {"jitter_sigma_ps", d.jitter_sigma},
                        {"dead_time_ps", d.dead_time},
                        {"splitter_ratio", d.splitter_ratio},
                        {"record_sync", d.record_sync}}}};
  j["analysis"] = Json{{"bin_width_ps", a.bin_width},
                       {"cw_window_ps", a.cw_window},
                       {"pw_window_ps", opt(a.pw_window)},
                       {"period_ps", opt(a.period)},
                       {"side_peaks", a.side_peaks},
                       {"threshold_per_ms", a.threshold_per_ms},
                       {"trace_bin_ps", a.trace_bin},
                       {"lifetime_components", a.lifetime_components},
                       {"exclude_censored", a.exclude_censored}};
  return j;
}

// Checks that do not need the data. Throws ConfigError.
inline void validate(const PipelineConfig& c) {
  if (c.mode != "simulate" && c.mode != "analyze")
    throw ConfigError(ConfigErrc::invalid_config, "mode must be simulate or analyze");
  if (c.stages.empty()) throw ConfigError(ConfigErrc::invalid_config, "no analysis stages requested");
  for (const auto& s : c.stages)
    if (std::find(known_stages().begin(), known_stages().end(), s) == known_stages().end())
      throw ConfigError(ConfigErrc::invalid_config, "unknown stage '" + s + "'");
  if (c.mode == "analyze" && c.input.empty()) throw ConfigError(ConfigErrc::invalid_config, "analyze mode needs an input file");
  if (c.workers == 0) throw ConfigError(ConfigErrc::invalid_config, "workers must be at least 1");

  const auto& a = c.analysis;
  if (a.bin_width <= 0 || a.trace_bin <= 0) throw ConfigError(ConfigErrc::inconsistent_bin_width, "bin widths must be positive");
  if (a.side_peaks < 1) throw ConfigError(ConfigErrc::invalid_config, "side_peaks must be at least 1");
  if (a.lifetime_components < 1 || a.lifetime_components > 3)
    throw ConfigError(ConfigErrc::invalid_config, "lifetime_components must be 1, 2 or 3");
  if (c.wants("g2cw") && a.bin_width >= a.cw_window)
    throw ConfigError(ConfigErrc::inconsistent_bin_width, "bin width must be smaller than the CW window");
  if (c.wants("blinking") && a.trace_bin < a.bin_width)
    throw ConfigError(ConfigErrc::inconsistent_bin_width, "trace bin must not be finer than the histogram bin");

  const bool needs_period = c.wants("g2pw") || c.wants("lifetime");
  if (needs_period && !a.period && c.mode == "simulate") {
    const auto& x = c.simulation.excitation;
    if (x.mode == sim::ExcitationMode::cw)
      throw ConfigError(ConfigErrc::missing_period, "g2pw and lifetime need pulsed excitation or a configured period");
    if (!c.simulation.detector.record_sync)
      throw ConfigError(ConfigErrc::missing_sync, "g2pw and lifetime need sync events or a configured period");
  }
  if (needs_period && a.period) {
    if (*a.period <= 0) throw ConfigError(ConfigErrc::invalid_config, "period must be positive");
    if (*a.period % a.bin_width != 0)
      throw ConfigError(ConfigErrc::inconsistent_bin_width, "bin width must divide the pulse period");
    if (a.pw_window && *a.pw_window * 2 < (2 * a.side_peaks + 1) * *a.period)
      throw ConfigError(ConfigErrc::invalid_config, "pulsed window must cover (side_peaks + 0.5) periods");
  }
}

struct PipelineReport {
  io::Json document;
  int errors = 0;

  bool ok() const { return errors == 0; }
  int exit_status() const { return errors == 0 ? 0 : 1; }
  std::string dump() const { return document.dump(2) + "\n"; }
};

namespace detail {

inline Picoseconds median_spacing(const TimestampStream& sync) {
  if (sync.events.size() < 2) throw ConfigError(ConfigErrc::missing_sync, "need at least two sync events");
  std::vector<Picoseconds> gaps(sync.events.size() - 1);
  for (std::size_t i = 1; i < sync.events.size(); ++i)
    gaps[i - 1] = static_cast<Picoseconds>(sync.events[i] - sync.events[i - 1]);
  const auto mid = gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2);
  std::nth_element(gaps.begin(), mid, gaps.end());
  return *mid;
}

class StageRunner {
 public:
  StageRunner(const PipelineConfig& c, const io::StreamMap& streams) : c_(c), streams_(streams) {}

  io::Json run(const std::string& stage) {
    if (stage == "g2cw") return g2cw();
    if (stage == "g2pw") return g2pw();
    if (stage == "lifetime") return lifetime();
    return blinking();
  }

 private:
  const TimestampStream& channel(ChannelId ch, const char* what) const {
    auto it = streams_.find(ch);
    if (it == streams_.end()) throw ConfigError(ConfigErrc::missing_sync, std::string("input has no ") + what + " channel");
    return it->second;
  }

  const TimestampStream& photons() {
    if (!merged_) merged_ = merge_streams(channel(kArm0Channel, "arm 0"), channel(kArm1Channel, "arm 1"));
    return *merged_;
  }

  Picoseconds period() {
    if (c_.analysis.period) return *c_.analysis.period;
    auto it = streams_.find(kSyncChannel);
    if (it == streams_.end() || it->second.events.size() < 2)
      throw ConfigError(ConfigErrc::missing_sync, "no sync events and no configured period");
    const Picoseconds t = median_spacing(it->second);
    if (t % c_.analysis.bin_width != 0)
      throw ConfigError(ConfigErrc::inconsistent_bin_width, "bin width must divide the pulse period");
    return t;
  }

  // Inline array or CSV side file, depending on output_dir.
  template <class H>
  io::Json place(const H& h, const std::string& name) {
    if (c_.output_dir.empty()) return io::to_json(h);
    std::filesystem::create_directories(c_.output_dir);
    const std::string file = name + ".csv";
    io::export_histogram_csv(h, (std::filesystem::path(c_.output_dir) / file).string());
    return io::Json{{"csv", file}};
  }

  io::Json g2cw() {
    const auto& a = c_.analysis;
    const auto h = corr::cross_correlate(channel(kArm0Channel, "arm 0"), channel(kArm1Channel, "arm 1"), a.cw_window,
                                         a.bin_width, c_.workers);
    const auto fit = fit::fit_g2_cw(h);
    io::Json j;
    j["pairs"] = h.total();
    j["params"] = io::to_json(fit);
    const auto norm = fit::normalize_g2(h, fit);
    j["g2_at_tau0"] = io::to_json(norm.g2_at_tau0);
    j["verdict"] = fit::to_string(fit::single_photon_verdict(norm.g2_at_tau0));
    j["histogram"] = place(h, "g2cw_histogram");
    j["normalized"] = place(norm, "g2cw_normalized");
    return j;
  }

  io::Json g2pw() {
    const auto& a = c_.analysis;
    const Picoseconds t = period();
    const Picoseconds window = a.pw_window.value_or((2 * a.side_peaks + 1) * t / 2);
    if (window * 2 < (2 * a.side_peaks + 1) * t)
      throw ConfigError(ConfigErrc::invalid_config, "pulsed window must cover (side_peaks + 0.5) periods");
    const auto h = corr::cross_correlate(channel(kArm0Channel, "arm 0"), channel(kArm1Channel, "arm 1"), window,
                                         a.bin_width, c_.workers);
    const auto fit = fit::fit_g2_pw(h, ps_to_ns(t), a.side_peaks);
    io::Json j;
    j["period_ps"] = t;
    j["pairs"] = h.total();
    j["params"] = io::to_json(fit);
    const auto norm = fit::normalize_g2(h, fit);
    j["g2_at_tau0"] = io::to_json(norm.g2_at_tau0);
    j["verdict"] = fit::to_string(fit::single_photon_verdict(norm.g2_at_tau0));
    j["histogram"] = place(h, "g2pw_histogram");
    j["normalized"] = place(norm, "g2pw_normalized");
    return j;
  }

  io::Json lifetime() {
    const auto& a = c_.analysis;
    const Picoseconds t = period();
    auto sync = streams_.find(kSyncChannel);
    const DecayHistogram d = (!a.period && sync != streams_.end())
                                 ? corr::sync_decay_histogram(photons(), sync->second, a.bin_width, t)
                                 : corr::sync_decay_histogram(photons(), t, a.bin_width);
    io::Json j;
    j["period_ps"] = t;
    io::Json tried = io::Json::array();
    std::optional<fit::MultiExpFit> chosen;
    // Step down while the fit reports a degenerate component.
    for (int n = a.lifetime_components; n >= 1; --n) {
      auto m = fit::fit_multiexp(d, n);
      tried.push_back(io::Json{{"components", n}, {"degenerate", m.degenerate}});
      if (!m.degenerate || n == 1) {
        chosen = std::move(m);
        break;
      }
    }
    j["attempts"] = tried;
    j["selected_components"] = chosen->result.params.components.size();
    j["params"] = io::to_json(*chosen);
    j["histogram"] = place(d, "decay_histogram");
    return j;
  }

  io::Json blinking() {
    const auto& a = c_.analysis;
    const auto trace = corr::intensity_trace(photons(), a.trace_bin);
    blink::BlinkingOptions opt;
    opt.threshold_per_ms = a.threshold_per_ms;
    opt.exclude_censored = a.exclude_censored;
    const auto r = blink::analyze_blinking(trace, opt);
    io::Json j = io::to_json(r, c_.output_dir.empty());
    j["trace"] = place(trace, "intensity_trace");
    return j;
  }

  const PipelineConfig& c_;
  const io::StreamMap& streams_;
  std::optional<TimestampStream> merged_;
};

}  // namespace detail

inline io::StreamMap simulate_streams(const PipelineConfig& c) {
  const auto& s = c.simulation;
  if (!(s.duration_s > 0.0)) throw ConfigError(ConfigErrc::invalid_config, "simulation duration must be positive");
  const auto duration = static_cast<Timestamp>(std::llround(s.duration_s * static_cast<double>(kPsPerSecond)));
  const auto emission = sim::generate_emission(s.emitter, s.excitation, duration, c.seed, c.workers);
  auto hbt = sim::detect_hbt(emission, s.detector, c.seed + 1, c.workers);
  io::StreamMap out;
  out[kArm0Channel] = std::move(hbt.arm0);
  out[kArm1Channel] = std::move(hbt.arm1);
  if (!hbt.sync.events.empty()) out[kSyncChannel] = std::move(hbt.sync);
  return out;
}

// Stages run in the fixed order g2cw, g2pw, lifetime, blinking. Errors inside
// a stage are recorded in the report; configuration errors throw.
inline PipelineReport run_pipeline(const PipelineConfig& c) {
  validate(c);
  PipelineReport report;
  io::Json& doc = report.document;
  doc["schema"] = io::kReportSchema;
  doc["schema_version"] = io::kReportSchemaVersion;

  io::StreamMap streams;
  io::Json input;
  if (c.mode == "simulate") {
    try {
      streams = simulate_streams(c);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(ConfigErrc::invalid_config, e.what());
    }
    const auto bytes = io::encode_timestamps(streams);
    input["source"] = "simulation";
    input["digest"] = io::digest(bytes);
    if (c.write_streams && !c.output_dir.empty()) {
      std::filesystem::create_directories(c.output_dir);
      io::write_file_bytes((std::filesystem::path(c.output_dir) / "streams.ptst").string(), bytes);
      input["streams_file"] = "streams.ptst";
    }
  } else {
    const auto bytes = io::read_file_bytes(c.input);
    streams = io::decode_timestamps(bytes);
    input["source"] = "file";
    input["path"] = c.input;
    input["digest"] = io::digest(bytes);
  }
  io::Json counts = io::Json::object();
  for (const auto& [ch, s] : streams) counts[std::to_string(ch)] = s.events.size();
  input["events_per_channel"] = counts;
  Timestamp duration = 0;
  for (const auto& [ch, s] : streams) duration = std::max(duration, s.duration);
  input["duration_ps"] = duration;
  doc["input"] = input;
  doc["config"] = to_json(c);

  detail::StageRunner runner(c, streams);
  io::Json stages = io::Json::object();
  for (const auto& name : known_stages()) {
    if (!c.wants(name)) continue;
    try {
      io::Json r = runner.run(name);
      io::Json entry{{"status", "ok"}};
      entry.update(r);
      stages[name] = entry;
    } catch (const ConfigError&) {
      throw;
    } catch (const fit::FitError& e) {
      stages[name] = io::Json{{"status", "error"}, {"error", fit::to_string(e.code())}, {"message", e.what()}};
      ++report.errors;
    } catch (const std::exception& e) {
      stages[name] = io::Json{{"status", "error"}, {"error", "runtime"}, {"message", e.what()}};
      ++report.errors;
    }
  }
  doc["stages"] = stages;
  doc["errors"] = report.errors;
  return report;
}

}  // namespace antibunch
