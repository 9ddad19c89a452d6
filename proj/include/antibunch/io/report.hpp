#pragma once

// JSON serialization of analysis results. Numbers with a defined uncertainty
// are written as {"value": v, "sigma": s}.

#include <json.hpp>

#include <cmath>
#include <optional>
#include <string>

#include "antibunch/blinking.hpp"
#include "antibunch/core.hpp"
#include "antibunch/fit/g2.hpp"
#include "antibunch/fit/lifetime.hpp"

namespace antibunch::io {

using Json = nlohmann::ordered_json;

inline constexpr const char* kReportSchema = "antibunch.report";
inline constexpr int kReportSchemaVersion = 1;

inline Json to_json(const Estimate& e) { return Json{{"value", e.value}, {"sigma", e.sigma}}; }

inline Json estimate(double value, double sigma) { return to_json(Estimate{value, sigma}); }

template <class P>
Json fit_quality(const fit::FitResult<P>& r) {
  return Json{{"chi2", r.chi2},
              {"chi2_reduced", r.chi2_reduced},
              {"converged", r.converged},
              {"singular", r.singular},
              {"iterations", r.iterations}};
}

inline Json to_json(const fit::FitResult<G2CwParams>& r) {
  using M = fit::G2CwModel;
  Json j;
  j["a"] = estimate(r.params.a, r.sigma.at(M::kA));
  j["b"] = estimate(r.params.b, r.sigma.at(M::kB));
  j["tau0_ns"] = estimate(r.params.tau0, r.sigma.at(M::kTau0));
  j["tau_x_ns"] = estimate(r.params.tau_x, r.sigma.at(M::kTauX));
  j["fit"] = fit_quality(r);
  return j;
}

inline Json to_json(const fit::FitResult<G2PwParams>& r) {
  const int n_side = r.params.side_peaks();
  const fit::G2PwModel model{r.params.period, n_side};
  Json j;
  j["a"] = estimate(r.params.a, r.sigma.at(0));
  Json peaks = Json::array();
  for (int n = -n_side; n <= n_side; ++n)
    peaks.push_back(Json{{"n", n}, {"height", estimate(r.params.height(n), r.sigma.at(model.height_index(n)))}});
  j["peaks"] = peaks;
  j["tau0_ns"] = estimate(r.params.tau0, r.sigma.at(model.tau0_index()));
  j["tau_x_ns"] = estimate(r.params.tau_x, r.sigma.at(model.tau_x_index()));
  j["period_ns"] = r.params.period;
  j["fit"] = fit_quality(r);
  return j;
}

inline Json to_json(const fit::MultiExpFit& m) {
  const auto& r = m.result;
  Json j;
  j["floor"] = estimate(r.params.floor, r.sigma.at(0));
  Json comps = Json::array();
  for (std::size_t i = 0; i < r.params.components.size(); ++i)
    comps.push_back(Json{{"amplitude", estimate(r.params.components[i].amplitude, r.sigma.at(1 + 2 * i))},
                         {"lifetime_ns", estimate(r.params.components[i].lifetime, r.sigma.at(2 + 2 * i))}});
  j["components"] = comps;
  j["tau0_ns"] = r.params.tau0;
  try {
    j["average_lifetime_ns"] = to_json(fit::average_lifetime(r));
  } catch (const fit::FitError&) {
    j["average_lifetime_ns"] = nullptr;
  }
  j["degenerate"] = m.degenerate;
  if (!m.advice.empty()) j["advice"] = m.advice;
  j["fit"] = fit_quality(r);
  return j;
}

inline Json to_json(const CoincidenceHistogram& h) {
  Json j{{"bin_width_ps", h.bin_width}, {"window_ps", h.window}, {"counts", h.counts}};
  if (h.center_offset) j["center_offset_ps"] = *h.center_offset;
  if (h.normalization) j["normalization"] = *h.normalization;
  return j;
}

inline Json to_json(const fit::NormalizedG2& g) {
  return Json{{"normalizer", g.normalizer}, {"tau_ns", g.tau_ns}, {"g2", g.value}, {"sigma", g.sigma}};
}

inline Json to_json(const DecayHistogram& d) {
  return Json{{"bin_width_ps", d.bin_width}, {"period_ps", d.period}, {"discarded", d.discarded}, {"counts", d.counts}};
}

inline Json to_json(const IntensityTrace& t) { return Json{{"bin_width_ps", t.bin_width}, {"counts", t.counts}}; }

inline Json to_json(const blink::StateStatistics& s) {
  Json j;
  if (s.comparison) {
    const auto& c = *s.comparison;
    j["alpha"] = to_json(c.alpha);
    j["exponential_rate_per_ms"] = to_json(c.rate);
    j["model_verdict"] = blink::to_string(c.verdict);
    j["log_likelihood_ratio"] = c.log_likelihood_ratio;
  } else {
    j["alpha"] = nullptr;
    j["model_verdict"] = nullptr;
  }
  if (s.slope) j["log_log_slope"] = to_json(*s.slope);
  if (!s.note.empty()) j["note"] = s.note;
  return j;
}

inline Json to_json(const blink::BlinkingResult& r, bool include_durations = true) {
  Json j;
  j["threshold_per_ms"] = r.threshold;
  j["trace_ms"] = r.trace_ms;
  j["mean_on_rate_per_ms"] = r.mean_on_rate;
  j["mean_off_rate_per_ms"] = r.mean_off_rate;
  j["on_segments"] = r.on_durations.size();
  j["off_segments"] = r.off_durations.size();
  j["on"] = to_json(r.on);
  j["off"] = to_json(r.off);
  if (include_durations) {
    j["on_durations_ms"] = r.on_durations;
    j["off_durations_ms"] = r.off_durations;
  }
  return j;
}

}  // namespace antibunch::io
