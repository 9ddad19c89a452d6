// Library walk-through: a pulsed single emitter seen through an HBT setup,
// then g2, lifetime and blinking analysis of the resulting time tags.

#include <cstdio>

#include "antibunch/antibunch.hpp"

using namespace antibunch;

int main() {
  sim::EmitterModel emitter;
  emitter.lifetime_ns = 4.7;
  emitter.blinking.kind = sim::BlinkingKind::power_law;
  emitter.blinking.alpha_on = 0.369;
  emitter.blinking.alpha_off = 0.369;
  emitter.blinking.max_dwell_ms = 2e3;

  sim::ExcitationConfig laser;  // 10 MHz pulsed
  laser.excitation_probability_per_pulse = 0.0277;

  const Timestamp duration = 20 * kPsPerSecond;
  const auto emission = sim::generate_emission(emitter, laser, duration, 1);
  const auto hbt = sim::detect_hbt(emission, sim::DetectorModel{}, 2);
  std::printf("%llu pulses, %zu + %zu detections\n", static_cast<unsigned long long>(emission.pulse_count()),
              hbt.arm0.size(), hbt.arm1.size());

  // Pulsed g2: peaks every 100 ns, the center one suppressed.
  const auto h = corr::cross_correlate(hbt.arm0, hbt.arm1, 550'000, 500);
  const auto g2fit = fit::fit_g2_pw(h, 100.0, 5);
  const auto g2 = fit::normalize_g2(h, g2fit).g2_at_tau0;
  std::printf("g2(0) = %.3f +/- %.3f -> %s\n", g2.value, g2.sigma,
              fit::to_string(fit::single_photon_verdict(g2)));

  // Lifetime from delays after each sync pulse.
  const auto photons = merge_streams(hbt.arm0, hbt.arm1);
  const auto decay = corr::sync_decay_histogram(photons, hbt.sync, 500);
  for (int n = 3; n >= 1; --n) {
    const auto m = fit::fit_multiexp(decay, n);
    if (m.degenerate && n > 1) {
      std::printf("%d components: degenerate, %s\n", n, m.advice.c_str());
      continue;
    }
    for (const auto& c : m.result.params.components) std::printf("  tau = %.3f ns\n", c.lifetime);
    const auto avg = fit::average_lifetime(m.result);
    std::printf("average lifetime %.3f +/- %.3f ns\n", avg.value, avg.sigma);
    break;
  }

  // Blinking: 1 ms trace, threshold 50 counts/ms.
  const auto trace = corr::intensity_trace(photons);
  const auto b = blink::analyze_blinking(trace);
  std::printf("ON %.0f/ms, OFF %.0f/ms, %zu ON and %zu OFF segments\n", b.mean_on_rate, b.mean_off_rate,
              b.on_durations.size(), b.off_durations.size());
  if (const auto a = b.alpha_on())
    std::printf("alpha_on = %.3f +/- %.3f (%s)\n", a->value, a->sigma, blink::to_string(b.on.comparison->verdict));
  return 0;
}
