// antibunch: simulate, correlate and fit photon time-tag data.
//
// Exit status: 0 success, 1 a pipeline stage failed, 2 bad configuration,
// 3 file error.

#include <CLI11.hpp>

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "antibunch/antibunch.hpp"

using namespace antibunch;
namespace fs = std::filesystem;

namespace {

struct Flags {
  std::string config_file;
  std::string output_dir;
  std::string input;
  std::string output;
  Picoseconds period = 0;
  std::string excitation = "pulsed";
  std::string blinking = "none";
  std::string model = "cw";
  bool timestamp = true;
};

std::string default_output_dir() {
  const char* env = std::getenv("ANTIBUNCH_OUTPUT_DIR");
  return env ? env : "";
}

io::Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io::IoError(io::IoErrc::open_failed, "cannot open " + path);
  try {
    return io::Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(ConfigErrc::invalid_config, path + ": " + e.what());
  }
}

void add_common(CLI::App* app, PipelineConfig& c, Flags& f) {
  app->add_option("--config", f.config_file, "JSON config; its keys override flags");
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--workers", c.workers, "worker threads");
  app->add_option("--output-dir", f.output_dir, "output directory (default $ANTIBUNCH_OUTPUT_DIR)");
}

void add_simulation(CLI::App* app, PipelineConfig& c, Flags& f) {
  auto& s = c.simulation;
  app->add_option("--duration-s", s.duration_s, "acquisition time in seconds");
  app->add_option("--lifetime-ns", s.emitter.lifetime_ns, "exciton lifetime");
  app->add_option("--excitation", f.excitation, "pulsed or cw")->check(CLI::IsMember({"pulsed", "cw"}));
  app->add_option("--pulse-period-ps", s.excitation.pulse_period, "laser period");
  app->add_option("--excitation-probability", s.excitation.excitation_probability_per_pulse, "per pulse");
  app->add_option("--cw-rate", s.excitation.cw_excitation_rate, "CW excitations per second");
  app->add_option("--blinking", f.blinking, "none, power_law or two_state_exponential")
      ->check(CLI::IsMember({"none", "power_law", "two_state_exponential"}));
  app->add_option("--alpha-on", s.emitter.blinking.alpha_on, "power-law ON exponent");
  app->add_option("--alpha-off", s.emitter.blinking.alpha_off, "power-law OFF exponent");
  app->add_option("--efficiency", s.detector.efficiency, "detector efficiency");
  app->add_option("--dark-rate", s.detector.dark_rate, "dark counts per ms per channel");
}

void add_analysis(CLI::App* app, PipelineConfig& c, Flags& f) {
  auto& a = c.analysis;
  app->add_option("--bin-width", a.bin_width, "histogram bin width in ps")->capture_default_str();
  app->add_option("--threshold", a.threshold_per_ms, "ON/OFF threshold in counts per ms")->capture_default_str();
  app->add_option("--period", f.period, "pulse period in ps (default: from sync events)");
  app->add_option("--cw-window", a.cw_window, "CW correlation half-window in ps");
  app->add_option("--side-peaks", a.side_peaks, "side peaks per side in the pulsed fit");
  app->add_option("--trace-bin", a.trace_bin, "intensity trace bin in ps");
  app->add_option("--components", a.lifetime_components, "exponentials in the lifetime fit");
}

// Flags first, then the config file on top.
void finish_config(PipelineConfig& c, const Flags& f) {
  if (f.period > 0) c.analysis.period = f.period;
  c.simulation.excitation.mode = f.excitation == "cw" ? sim::ExcitationMode::cw : sim::ExcitationMode::pulsed;
  c.simulation.emitter.blinking.kind = detail::blinking_kind(f.blinking);
  c.output_dir = f.output_dir.empty() ? default_output_dir() : f.output_dir;
  if (!f.config_file.empty()) apply_json(read_json_file(f.config_file), c);
}

std::string output_path(const PipelineConfig& c, const std::string& name) {
  if (c.output_dir.empty()) return name;
  fs::create_directories(c.output_dir);
  return (fs::path(c.output_dir) / name).string();
}

void emit(const io::Json& j, const std::string& path) {
  const std::string text = j.dump(2) + "\n";
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw io::IoError(io::IoErrc::write_failed, "cannot write " + path);
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

const TimestampStream& need(const io::StreamMap& m, ChannelId ch) {
  auto it = m.find(ch);
  if (it == m.end()) throw ConfigError(ConfigErrc::invalid_config, "input has no channel " + std::to_string(ch));
  return it->second;
}

int cmd_simulate(PipelineConfig& c, const Flags& f) {
  const auto streams = simulate_streams(c);
  const std::string path = output_path(c, f.output.empty() ? "streams.ptst" : f.output);
  io::write_timestamps(streams, path);
  std::cout << path;
  for (const auto& [ch, s] : streams) std::cout << " ch" << int(ch) << "=" << s.size();
  std::cout << "\n";
  return 0;
}

int cmd_correlate(PipelineConfig& c, const Flags& f) {
  const auto streams = io::read_timestamps(f.input);
  const auto h = corr::cross_correlate(need(streams, kArm0Channel), need(streams, kArm1Channel), c.analysis.cw_window,
                                       c.analysis.bin_width, c.workers);
  const std::string path = output_path(c, f.output.empty() ? "coincidences.csv" : f.output);
  io::export_histogram_csv(h, path);
  std::cout << path << " pairs=" << h.total() << "\n";
  return 0;
}

// lifetime and blink are single-stage pipelines over a file.
void analyze_only(PipelineConfig& c, const Flags& f, const char* stage) {
  c.mode = "analyze";
  c.input = f.input;
  c.stages = {stage};
}

int cmd_fit(PipelineConfig& c, const Flags& f) {
  const auto h = io::coincidence_from_csv(io::read_csv(f.input));
  io::Json j;
  j["input"] = f.input;
  if (f.model == "cw") {
    const auto r = fit::fit_g2_cw(h);
    const auto n = fit::normalize_g2(h, r);
    j["params"] = io::to_json(r);
    j["g2_at_tau0"] = io::to_json(n.g2_at_tau0);
    j["verdict"] = fit::to_string(fit::single_photon_verdict(n.g2_at_tau0));
  } else {
    if (!c.analysis.period)
      throw ConfigError(ConfigErrc::missing_period, "the pulsed fit needs --period");
    const auto r = fit::fit_g2_pw(h, ps_to_ns(*c.analysis.period), c.analysis.side_peaks);
    const auto n = fit::normalize_g2(h, r);
    j["params"] = io::to_json(r);
    j["g2_at_tau0"] = io::to_json(n.g2_at_tau0);
    j["verdict"] = fit::to_string(fit::single_photon_verdict(n.g2_at_tau0));
  }
  emit(j, f.output.empty() ? "" : output_path(c, f.output));
  return 0;
}

// Runs the pipeline and prints or writes the report.
int run_report(const PipelineConfig& c, const Flags& f) {
  auto report = run_pipeline(c);
  if (f.timestamp) report.document["generated_at"] = utc_now();
  std::string path;
  if (!f.output.empty()) path = output_path(c, f.output);
  else if (!c.output_dir.empty()) path = output_path(c, "report.json");
  emit(report.document, path);
  if (!path.empty()) std::cerr << "report written to " << path << "\n";
  return report.exit_status();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Photon antibunching analysis"};
  app.require_subcommand(1);
  PipelineConfig config;
  Flags flags;

  auto* simulate = app.add_subcommand("simulate", "simulate an emitter and write a PTST time-tag file");
  add_common(simulate, config, flags);
  add_simulation(simulate, config, flags);
  simulate->add_option("-o,--output", flags.output, "file name (default streams.ptst)");

  auto* correlate = app.add_subcommand("correlate", "arm 0 x arm 1 coincidence histogram to CSV");
  add_common(correlate, config, flags);
  add_analysis(correlate, config, flags);
  correlate->add_option("input", flags.input, "PTST file")->required();
  correlate->add_option("-o,--output", flags.output, "CSV name (default coincidences.csv)");

  auto* lifetime = app.add_subcommand("lifetime", "multi-exponential fit of the sync-referenced decay");
  add_common(lifetime, config, flags);
  add_analysis(lifetime, config, flags);
  lifetime->add_option("input", flags.input, "PTST file")->required();
  lifetime->add_option("-o,--output", flags.output, "report name (default stdout)");

  auto* blinking = app.add_subcommand("blink", "ON/OFF segmentation and dwell-time statistics");
  add_common(blinking, config, flags);
  add_analysis(blinking, config, flags);
  blinking->add_option("input", flags.input, "PTST file")->required();
  blinking->add_option("-o,--output", flags.output, "report name (default stdout)");

  auto* fitting = app.add_subcommand("fit", "fit a coincidence histogram CSV");
  add_common(fitting, config, flags);
  add_analysis(fitting, config, flags);
  fitting->add_option("input", flags.input, "histogram CSV")->required();
  fitting->add_option("--model", flags.model, "cw or pw")->check(CLI::IsMember({"cw", "pw"}));
  fitting->add_option("-o,--output", flags.output, "report name (default stdout)");

  auto* pipeline = app.add_subcommand("pipeline", "simulate or read data and run the analysis stages");
  add_common(pipeline, config, flags);
  add_simulation(pipeline, config, flags);
  add_analysis(pipeline, config, flags);
  pipeline->add_option("--mode", config.mode, "simulate or analyze");
  pipeline->add_option("--input", config.input, "PTST file for analyze mode");
  pipeline->add_option("--stages", config.stages, "subset of g2cw g2pw lifetime blinking");
  pipeline->add_flag("--write-streams", config.write_streams, "keep the simulated PTST file");
  pipeline->add_flag("!--no-timestamp", flags.timestamp, "omit generated_at from the report");
  pipeline->add_option("-o,--output", flags.output, "report name (default report.json or stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    finish_config(config, flags);
    if (simulate->parsed()) return cmd_simulate(config, flags);
    if (correlate->parsed()) return cmd_correlate(config, flags);
    if (fitting->parsed()) return cmd_fit(config, flags);
    if (lifetime->parsed()) analyze_only(config, flags, "lifetime");
    if (blinking->parsed()) analyze_only(config, flags, "blinking");
    return run_report(config, flags);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return 2;
  } catch (const io::IoError& e) {
    std::cerr << "file error (" << io::to_string(e.code()) << "): " << e.what() << "\n";
    return 3;
  } catch (const fit::FitError& e) {
    std::cerr << "fit error (" << fit::to_string(e.code()) << "): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
