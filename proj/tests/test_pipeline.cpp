#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "antibunch/pipeline.hpp"

using namespace antibunch;

namespace {

namespace fs = std::filesystem;

PipelineConfig pulsed_config() {
  PipelineConfig c;
  c.stages = {"g2pw", "lifetime", "blinking"};
  c.seed = 11;
  c.simulation.duration_s = 0.1;
  c.simulation.emitter.lifetime_ns = 4.7;
  return c;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("antibunch_pipeline_" + std::to_string(std::random_device{}()) + "_" + name);
  fs::create_directories(p);
  return p;
}

ConfigErrc config_error(const PipelineConfig& c) {
  try {
    run_pipeline(c);
  } catch (const ConfigError& e) {
    return e.code();
  }
  ADD_FAILURE() << "no configuration error";
  return ConfigErrc::invalid_config;
}

}  // namespace

TEST(Pipeline, PulsedSimulationEndToEnd) {
  const auto report = run_pipeline(pulsed_config());
  ASSERT_TRUE(report.ok()) << report.dump();
  const auto& doc = report.document;
  EXPECT_EQ(doc["schema"], "antibunch.report");
  EXPECT_EQ(doc["stages"]["g2pw"]["status"], "ok");
  EXPECT_LT(doc["stages"]["g2pw"]["g2_at_tau0"]["value"].get<double>(), 0.5);
  EXPECT_EQ(doc["stages"]["g2pw"]["verdict"], "single_photon");
  EXPECT_EQ(doc["stages"]["g2pw"]["period_ps"].get<Picoseconds>(), 100'000);
  const auto& tau = doc["stages"]["lifetime"]["params"]["average_lifetime_ns"];
  EXPECT_NEAR(tau["value"].get<double>(), 4.7, std::max(3.0 * tau["sigma"].get<double>(), 0.1));
  EXPECT_EQ(doc["stages"]["blinking"]["status"], "ok");
  EXPECT_EQ(doc["errors"].get<int>(), 0);
}

TEST(Pipeline, FileInputReproducesSimulation) {
  const auto dir = scratch("file");
  auto c = pulsed_config();
  c.output_dir = dir.string();
  c.write_streams = true;
  const auto sim = run_pipeline(c);
  ASSERT_TRUE(sim.ok());

  PipelineConfig a = c;
  a.mode = "analyze";
  a.input = (dir / "streams.ptst").string();
  a.output_dir = (dir / "analyze").string();
  a.write_streams = false;
  const auto ana = run_pipeline(a);
  ASSERT_TRUE(ana.ok()) << ana.dump();
  EXPECT_EQ(sim.document["input"]["digest"], ana.document["input"]["digest"]);
  EXPECT_EQ(sim.document["stages"], ana.document["stages"]);
  EXPECT_TRUE(fs::exists(dir / "analyze" / "g2pw_histogram.csv"));
  EXPECT_TRUE(fs::exists(dir / "analyze" / "decay_histogram.csv"));
  fs::remove_all(dir);
}

TEST(Pipeline, ByteIdenticalReports) {
  auto c = pulsed_config();
  c.simulation.duration_s = 0.02;
  const auto one = run_pipeline(c).dump();
  c.workers = 3;
  auto three = run_pipeline(c);
  // The echoed config differs only in the worker count.
  three.document["config"]["workers"] = 1;
  EXPECT_EQ(one, three.dump());
  c.workers = 1;
  EXPECT_EQ(one, run_pipeline(c).dump());
}

TEST(Pipeline, CwStageOnCwSimulation) {
  PipelineConfig c;
  c.stages = {"g2cw", "blinking"};
  c.simulation.duration_s = 0.5;
  c.simulation.excitation.mode = sim::ExcitationMode::cw;
  c.simulation.excitation.cw_excitation_rate = 2e6;
  c.analysis.cw_window = 100'000;
  const auto report = run_pipeline(c);
  ASSERT_TRUE(report.ok()) << report.dump();
  EXPECT_EQ(report.document["stages"]["g2cw"]["verdict"], "single_photon");
  EXPECT_FALSE(report.document["stages"].contains("g2pw"));
}

TEST(Pipeline, PulsedStageWithoutPeriodIsConfigError) {
  PipelineConfig c;
  c.stages = {"g2pw"};
  c.simulation.excitation.mode = sim::ExcitationMode::cw;
  EXPECT_EQ(config_error(c), ConfigErrc::missing_period);
  c.simulation.excitation.mode = sim::ExcitationMode::pulsed;
  c.simulation.detector.record_sync = false;
  EXPECT_EQ(config_error(c), ConfigErrc::missing_sync);
}

TEST(Pipeline, BinWidthMustDividePeriod) {
  auto c = pulsed_config();
  c.analysis.period = 100'000;
  c.analysis.bin_width = 300;
  EXPECT_EQ(config_error(c), ConfigErrc::inconsistent_bin_width);
  c.analysis.bin_width = 0;
  EXPECT_EQ(config_error(c), ConfigErrc::inconsistent_bin_width);
}

TEST(Pipeline, CwWindowMustExceedBin) {
  PipelineConfig c;
  c.stages = {"g2cw"};
  c.analysis.cw_window = 500;
  EXPECT_EQ(config_error(c), ConfigErrc::inconsistent_bin_width);
}

TEST(Pipeline, UnknownStageAndMode) {
  PipelineConfig c;
  c.stages = {"g3"};
  EXPECT_EQ(config_error(c), ConfigErrc::invalid_config);
  c = PipelineConfig{};
  c.mode = "replay";
  EXPECT_EQ(config_error(c), ConfigErrc::invalid_config);
  c.mode = "analyze";
  EXPECT_EQ(config_error(c), ConfigErrc::invalid_config);
}

TEST(PipelineConfig, JsonPatchesOnlyGivenKeys) {
  PipelineConfig c;
  apply_json(io::Json::parse(R"({"seed": 42, "analysis": {"bin_width_ps": 250}})"), c);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.analysis.bin_width, 250);
  EXPECT_EQ(c.analysis.cw_window, PipelineConfig{}.analysis.cw_window);
  EXPECT_EQ(c.stages.size(), 4u);
}

TEST(PipelineConfig, UnknownKeyRejected) {
  PipelineConfig c;
  EXPECT_THROW(apply_json(io::Json::parse(R"({"sead": 1})"), c), ConfigError);
  EXPECT_THROW(apply_json(io::Json::parse(R"({"analysis": {"bin": 1}})"), c), ConfigError);
}

TEST(PipelineConfig, EchoRoundTrips) {
  PipelineConfig c;
  c.seed = 9;
  c.analysis.period = 50'000;
  c.simulation.emitter.blinking.kind = sim::BlinkingKind::power_law;
  PipelineConfig d;
  apply_json(to_json(c), d);
  EXPECT_EQ(to_json(d), to_json(c));
}
