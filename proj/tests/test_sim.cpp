#include <gtest/gtest.h>

#include <cmath>

#include "antibunch/blinking.hpp"
#include "antibunch/correlator.hpp"
#include "antibunch/sim.hpp"

using namespace antibunch;

namespace {

sim::EmitterModel quiet_emitter() {
  sim::EmitterModel em;
  em.blinking.off_emission_rate = 0.0;
  return em;
}

sim::DetectorModel ideal_detector() {
  sim::DetectorModel d;
  d.efficiency = 1.0;
  d.dark_rate = 0.0;
  d.jitter_sigma = 0.0;
  d.dead_time = 0;
  return d;
}

std::size_t count_source(const sim::EmissionRecord& r, sim::PhotonSource s) {
  return static_cast<std::size_t>(std::count(r.sources.begin(), r.sources.end(), s));
}

}  // namespace

TEST(GenerateEmission, EveryPulseYieldsOnePhotonAtUnitProbability) {
  sim::ExcitationConfig ex;
  ex.excitation_probability_per_pulse = 1.0;
  const Timestamp duration = 1'000'000 * static_cast<Timestamp>(ex.pulse_period);
  const auto e = sim::generate_emission(quiet_emitter(), ex, duration, 5);
  EXPECT_EQ(e.pulse_count(), 1'000'000u);
  EXPECT_EQ(e.times.size(), 1'000'000u);
  EXPECT_EQ(count_source(e, sim::PhotonSource::exciton), 1'000'000u);
}

TEST(GenerateEmission, ZeroYieldEmitsNothing) {
  auto em = quiet_emitter();
  em.quantum_yield = 0.0;
  sim::ExcitationConfig ex;
  const auto e = sim::generate_emission(em, ex, 100 * kPsPerMs, 5);
  EXPECT_TRUE(e.times.empty());
}

TEST(GenerateEmission, DelayMeanMatchesLifetime) {
  sim::ExcitationConfig ex;
  ex.excitation_probability_per_pulse = 0.2;
  const auto e = sim::generate_emission(quiet_emitter(), ex, 300 * kPsPerMs, 17);
  const auto period = static_cast<Timestamp>(ex.pulse_period);
  double sum = 0.0;
  for (Timestamp t : e.times) sum += ps_to_ns(t % period);
  const auto n = static_cast<double>(e.times.size());
  ASSERT_GT(n, 1e5);
  // Excitation lands uniformly inside the 50 ps pulse, adding 25 ps on average.
  const double expected = 4.7 + 0.025;
  EXPECT_NEAR(sum / n, expected, 3.0 * 4.7 / std::sqrt(n));
}

TEST(GenerateEmission, NoPulseCarriesTwoSignalPhotons) {
  sim::ExcitationConfig ex;
  ex.excitation_probability_per_pulse = 0.6;
  auto em = sim::EmitterModel{};
  em.blinking.kind = sim::BlinkingKind::power_law;
  const auto e = sim::generate_emission(em, ex, 400 * kPsPerMs, 23);
  const auto period = static_cast<Timestamp>(ex.pulse_period);
  Timestamp last_pulse = std::numeric_limits<Timestamp>::max();
  for (std::size_t i = 0; i < e.times.size(); ++i) {
    if (e.sources[i] != sim::PhotonSource::exciton) continue;
    const Timestamp pulse = e.times[i] / period;
    ASSERT_NE(pulse, last_pulse) << "two exciton photons in pulse " << pulse;
    last_pulse = pulse;
  }
}

TEST(GenerateEmission, BiexcitonPrecedesExciton) {
  auto em = quiet_emitter();
  em.biexciton_lifetime_ns = 0.833;
  em.biexciton_probability = 1.0;
  sim::ExcitationConfig ex;
  ex.excitation_probability_per_pulse = 0.5;
  const auto e = sim::generate_emission(em, ex, 50 * kPsPerMs, 3);
  const auto xx = count_source(e, sim::PhotonSource::biexciton);
  const auto x = count_source(e, sim::PhotonSource::exciton);
  EXPECT_EQ(xx, x);
  EXPECT_GT(x, 0u);
  const auto period = static_cast<Timestamp>(ex.pulse_period);
  for (std::size_t i = 0; i + 1 < e.times.size(); ++i) {
    if (e.sources[i] != sim::PhotonSource::biexciton) continue;
    if (e.times[i] / period != e.times[i + 1] / period) continue;  // cascade crossing the period edge
    EXPECT_EQ(e.sources[i + 1], sim::PhotonSource::exciton);
  }
}

TEST(GenerateEmission, RejectsPowerLawExponentOutsideUnitInterval) {
  auto em = sim::EmitterModel{};
  em.blinking.kind = sim::BlinkingKind::power_law;
  for (double bad : {0.0, 1.0, 1.2, -0.3}) {
    em.blinking.alpha_on = bad;
    EXPECT_THROW(sim::generate_emission(em, sim::ExcitationConfig{}, kPsPerMs, 1), std::invalid_argument);
  }
  em.blinking.alpha_on = 0.5;
  em.blinking.alpha_off = 1.0;
  EXPECT_THROW(sim::generate_emission(em, sim::ExcitationConfig{}, kPsPerMs, 1), std::invalid_argument);
}

TEST(GenerateEmission, RejectsZeroDuration) {
  EXPECT_THROW(sim::generate_emission(sim::EmitterModel{}, sim::ExcitationConfig{}, 0, 1), std::invalid_argument);
}

TEST(GenerateEmission, SameSeedSameStreamDifferentSeedDifferent) {
  sim::ExcitationConfig ex;
  ex.excitation_probability_per_pulse = 0.1;
  const auto a = sim::generate_emission(sim::EmitterModel{}, ex, 20 * kPsPerMs, 8);
  const auto b = sim::generate_emission(sim::EmitterModel{}, ex, 20 * kPsPerMs, 8);
  const auto c = sim::generate_emission(sim::EmitterModel{}, ex, 20 * kPsPerMs, 9);
  EXPECT_EQ(a.times, b.times);
  EXPECT_NE(a.times, c.times);
}

TEST(GenerateEmission, OffSegmentsEmitOnlyBackground) {
  auto em = sim::EmitterModel{};
  em.blinking.kind = sim::BlinkingKind::two_state_exponential;
  em.blinking.mean_on_ms = 20;
  em.blinking.mean_off_ms = 20;
  sim::ExcitationConfig ex;
  ex.excitation_probability_per_pulse = 0.05;
  const auto e = sim::generate_emission(em, ex, 500 * kPsPerMs, 4);
  ASSERT_GT(e.segments.size(), 4u);
  // Exciton photons come from excitations inside ON segments; allow for the
  // photon landing just after the segment closes.
  const auto slack = static_cast<Timestamp>(ex.pulse_period);
  for (std::size_t i = 0; i < e.times.size(); ++i) {
    if (e.sources[i] != sim::PhotonSource::exciton) continue;
    auto it = std::upper_bound(e.segments.begin(), e.segments.end(), e.times[i],
                               [](Timestamp t, const sim::StateSegment& s) { return t < s.begin; });
    const auto& seg = *std::prev(it);
    if (!seg.on) {
      ASSERT_LT(e.times[i] - seg.begin, slack);
    }
  }
}

TEST(Segments, PowerLawDwellsRecoverExponent) {
  sim::BlinkingLaw law;
  law.kind = sim::BlinkingKind::power_law;
  law.alpha_on = 0.369;
  law.alpha_off = 0.6;
  law.max_dwell_ms = 1e8;  // far above the bulk so truncation bias is negligible
  const Timestamp duration = 5'000'000'000'000'000'000ull;
  const auto segs = sim::generate_segments(law, duration, 77);
  std::vector<double> on;
  for (std::size_t i = 0; i + 1 < segs.size(); ++i)
    if (segs[i].on) on.push_back(segs[i].duration_ms());
  ASSERT_GT(on.size(), 1000u);
  const auto a = blink::fit_power_law_mle(on, 1.0);
  EXPECT_NEAR(a.value, 0.369, 3.0 * a.sigma + 0.004);
  // CCDF slope on log-log axes is -alpha.
  const auto h = blink::dwell_histogram(on, 8);
  const auto slope = blink::log_log_slope(h);
  EXPECT_NEAR(slope.value, -1.369, std::max(3.0 * slope.sigma, 0.05));
}

TEST(Segments, StartOnAndTileTheTrace) {
  sim::BlinkingLaw law;
  law.kind = sim::BlinkingKind::power_law;
  const Timestamp duration = 30 * kPsPerSecond;
  const auto segs = sim::generate_segments(law, duration, 5);
  ASSERT_FALSE(segs.empty());
  EXPECT_TRUE(segs.front().on);
  EXPECT_EQ(segs.front().begin, 0u);
  EXPECT_EQ(segs.back().end, duration);
  for (std::size_t i = 1; i < segs.size(); ++i) {
    EXPECT_EQ(segs[i].begin, segs[i - 1].end);
    EXPECT_NE(segs[i].on, segs[i - 1].on);
  }
}

TEST(TruncatedPareto, InverseCdfEndpoints) {
  EXPECT_DOUBLE_EQ(sim::truncated_pareto(0.0, 0.369, 1.0, 1e5), 1.0);
  EXPECT_NEAR(sim::truncated_pareto(1.0, 0.369, 1.0, 1e5), 1e5, 1e-6);
  // Median of the truncated law solves F(m) = 1/2.
  const double m = sim::truncated_pareto(0.5, 0.5, 1.0, 100.0);
  EXPECT_NEAR((1.0 - std::pow(m, -0.5)) / (1.0 - std::pow(100.0, -0.5)), 0.5, 1e-12);
}

TEST(DetectHbt, IdealDetectorConservesPhotons) {
  sim::ExcitationConfig ex;
  ex.excitation_probability_per_pulse = 0.3;
  const auto e = sim::generate_emission(quiet_emitter(), ex, 50 * kPsPerMs, 2);
  const auto h = sim::detect_hbt(e, ideal_detector(), 3);
  EXPECT_EQ(h.arm0.size() + h.arm1.size(), e.times.size());
  EXPECT_GT(h.arm0.size(), 0u);
  EXPECT_GT(h.arm1.size(), 0u);
}

TEST(DetectHbt, DarkCountsArePoissonPerChannel) {
  sim::ExcitationConfig ex;
  ex.excitation_probability_per_pulse = 0.0;
  auto em = quiet_emitter();
  const auto e = sim::generate_emission(em, ex, 10 * kPsPerSecond, 4);
  ASSERT_TRUE(e.times.empty());
  sim::DetectorModel d;
  d.efficiency = 0.0;
  d.dark_rate = 1.0;
  const auto h = sim::detect_hbt(e, d, 6);
  EXPECT_NEAR(static_cast<double>(h.arm0.size()), 1e4, 300.0);
  EXPECT_NEAR(static_cast<double>(h.arm1.size()), 1e4, 300.0);
}

TEST(DetectHbt, DeadTimeDropsSecondPhoton) {
  sim::EmissionRecord e;
  e.duration = kPsPerMs;
  e.times = {1'000'000, 1'005'000, 1'100'000};
  e.sources.assign(3, sim::PhotonSource::exciton);
  e.segments.push_back({0, e.duration, true});
  auto d = ideal_detector();
  d.splitter_ratio = 1.0;
  d.dead_time = 22'000;
  const auto h = sim::detect_hbt(e, d, 1);
  EXPECT_EQ(h.arm0.events, (std::vector<Timestamp>{1'000'000, 1'100'000}));
  EXPECT_TRUE(h.arm1.empty());
}

TEST(DetectHbt, SyncMarksEveryPulse) {
  sim::ExcitationConfig ex;
  ex.excitation_probability_per_pulse = 0.01;
  const Timestamp duration = 3 * kPsPerMs + 1;
  const auto e = sim::generate_emission(quiet_emitter(), ex, duration, 1);
  const auto h = sim::detect_hbt(e, sim::DetectorModel{}, 1);
  ASSERT_EQ(h.sync.size(), e.pulse_count());
  EXPECT_EQ(h.sync.events.front(), 0u);
  EXPECT_EQ(h.sync.events[7], 7u * 100'000u);
  EXPECT_LE(h.sync.events.back(), duration);
  EXPECT_EQ(h.sync.channel, kSyncChannel);
}

TEST(DetectHbt, RejectsOutOfRangeDetector) {
  sim::DetectorModel d;
  d.efficiency = 1.5;
  EXPECT_THROW(sim::detect_hbt(sim::EmissionRecord{}, d, 1), std::invalid_argument);
}

TEST(SimulatePoissonian, CountMatchesRate) {
  const auto s = sim::simulate_poissonian(1e5, 10 * kPsPerSecond, 12);
  EXPECT_NEAR(static_cast<double>(s.size()), 1e6, 3000.0);
  EXPECT_TRUE(validate_stream(s).valid());
}

TEST(SimulatePoissonian, ZeroDurationIsEmpty) {
  const auto s = sim::simulate_poissonian(1e5, 0, 12);
  EXPECT_TRUE(s.empty());
}

TEST(SimulatePoissonian, SplitStreamsAreUncorrelated) {
  const auto s = sim::simulate_poissonian(2e6, 2 * kPsPerSecond, 13);
  auto d = ideal_detector();
  const auto h = sim::detect_hbt(sim::EmissionRecord::from_stream(s), d, 14);
  const auto c = corr::cross_correlate(h.arm0, h.arm1, 100'000, 5'000);
  // Expected pairs per bin: n0 * n1 * bin / duration.
  const double expected = static_cast<double>(h.arm0.size()) * static_cast<double>(h.arm1.size()) * 5'000.0 /
                          static_cast<double>(2 * kPsPerSecond);
  for (auto v : c.counts) EXPECT_NEAR(static_cast<double>(v), expected, 5.0 * std::sqrt(expected));
}

TEST(SimulateIntensityTrace, MatchesMaterializedPath) {
  auto em = sim::EmitterModel{};
  em.blinking.kind = sim::BlinkingKind::power_law;
  sim::ExcitationConfig ex;
  ex.excitation_probability_per_pulse = 0.03;
  const Timestamp duration = 730 * kPsPerMs;
  const sim::DetectorModel det;
  const auto ts = sim::simulate_intensity_trace(em, ex, det, duration, kPsPerMs, 31, 32);
  const auto e = sim::generate_emission(em, ex, duration, 31);
  const auto h = sim::detect_hbt(e, det, 32);
  const auto full = corr::intensity_trace(merge_streams(h.arm0, h.arm1), kPsPerMs);
  EXPECT_EQ(ts.trace.counts, full.counts);
  EXPECT_EQ(ts.detected, h.arm0.size() + h.arm1.size());
  EXPECT_EQ(ts.segments.size(), e.segments.size());
}
