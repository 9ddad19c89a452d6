#pragma once

// ON/OFF segmentation of intensity traces and dwell-time statistics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "antibunch/core.hpp"

namespace antibunch::blink {

struct Segment {
  bool on = false;
  std::size_t first_bin = 0;
  std::size_t bins = 0;
  double duration_ms = 0.0;
  bool censored = false;  // touches the start or end of the trace
};

struct StateSegments {
  std::vector<Segment> segments;
  double bin_ms = 1.0;
  double threshold = 0.0;      // counts per bin
  double mean_on_rate = 0.0;   // counts per ms over ON bins
  double mean_off_rate = 0.0;  // counts per ms over OFF bins

  std::vector<double> durations(bool on, bool exclude_censored) const {
    std::vector<double> out;
    for (const auto& s : segments)
      if (s.on == on && !(exclude_censored && s.censored)) out.push_back(s.duration_ms);
    return out;
  }
  double total_ms() const {
    double t = 0.0;
    for (const auto& s : segments) t += s.duration_ms;
    return t;
  }
};

// A bin is ON iff its count reaches the threshold (counts per bin).
inline StateSegments segment_trace(const IntensityTrace& trace, double threshold = 50.0) {
  if (trace.counts.empty()) throw std::invalid_argument("cannot segment an empty trace");
  StateSegments out;
  out.bin_ms = trace.bin_ms();
  out.threshold = threshold;
  double on_sum = 0.0, off_sum = 0.0;
  std::size_t on_bins = 0, off_bins = 0;
  for (std::size_t j = 0; j < trace.counts.size(); ++j) {
    const auto c = static_cast<double>(trace.counts[j]);
    const bool on = c >= threshold;
    if (on) {
      on_sum += c;
      ++on_bins;
    } else {
      off_sum += c;
      ++off_bins;
    }
    if (out.segments.empty() || out.segments.back().on != on)
      out.segments.push_back({on, j, 0, 0.0, false});
    ++out.segments.back().bins;
  }
  for (auto& s : out.segments) s.duration_ms = static_cast<double>(s.bins) * out.bin_ms;
  out.segments.front().censored = true;
  out.segments.back().censored = true;
  if (on_bins) out.mean_on_rate = on_sum / static_cast<double>(on_bins) / out.bin_ms;
  if (off_bins) out.mean_off_rate = off_sum / static_cast<double>(off_bins) / out.bin_ms;
  return out;
}

// Logarithmically binned probability density of dwell times.
struct DwellHistogram {
  std::vector<double> edges;  // size = counts.size() + 1
  std::vector<std::size_t> counts;
  std::vector<double> density;  // counts / bin width / total
  std::size_t total = 0;

  double center(std::size_t k) const { return std::sqrt(edges[k] * edges[k + 1]); }
  std::size_t occupied() const {
    return static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }));
  }
};

inline DwellHistogram dwell_histogram(std::span<const double> durations, int bins_per_decade = 8) {
  if (durations.size() < 10) throw std::invalid_argument("dwell histogram needs at least 10 durations");
  if (bins_per_decade < 1) throw std::invalid_argument("bins per decade must be positive");
  const auto [lo_it, hi_it] = std::minmax_element(durations.begin(), durations.end());
  if (!(*lo_it > 0.0)) throw std::invalid_argument("dwell durations must be positive");
  const double bpd = bins_per_decade;
  auto index = [&](double d) { return static_cast<long>(std::floor(std::log10(d) * bpd + 1e-9)); };
  const long k_lo = index(*lo_it);
  const long k_hi = index(*hi_it) + 1;
  DwellHistogram h;
  for (long k = k_lo; k <= k_hi; ++k) h.edges.push_back(std::pow(10.0, static_cast<double>(k) / bpd));
  h.counts.assign(static_cast<std::size_t>(k_hi - k_lo), 0);
  for (double d : durations) {
    const long k = std::clamp(index(d) - k_lo, 0L, k_hi - k_lo - 1);
    ++h.counts[static_cast<std::size_t>(k)];
  }
  h.total = durations.size();
  h.density.resize(h.counts.size());
  for (std::size_t k = 0; k < h.counts.size(); ++k)
    h.density[k] = static_cast<double>(h.counts[k]) / (h.edges[k + 1] - h.edges[k]) / static_cast<double>(h.total);
  return h;
}

// Least-squares slope of log10(density) against log10(center) over occupied
// bins, weighted by bin counts. For a power law the slope is -(1 + alpha).
inline Estimate log_log_slope(const DwellHistogram& h) {
  double sw = 0.0, sx = 0.0, sy = 0.0;
  std::size_t m = 0;
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    if (h.counts[k] == 0) continue;
    const double w = static_cast<double>(h.counts[k]);
    sw += w;
    sx += w * std::log10(h.center(k));
    sy += w * std::log10(h.density[k]);
    ++m;
  }
  if (m < 3) throw std::invalid_argument("slope fit needs at least 3 occupied bins");
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    if (h.counts[k] == 0) continue;
    const double w = static_cast<double>(h.counts[k]);
    const double dx = std::log10(h.center(k)) - mx;
    sxx += w * dx * dx;
    sxy += w * dx * (std::log10(h.density[k]) - my);
  }
  const double slope = sxy / sxx;
  double ssr = 0.0;
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    if (h.counts[k] == 0) continue;
    const double w = static_cast<double>(h.counts[k]);
    const double r = std::log10(h.density[k]) - (my + slope * (std::log10(h.center(k)) - mx));
    ssr += w * r * r;
  }
  const double s2 = ssr / static_cast<double>(m - 2);
  return {slope, std::sqrt(s2 / sxx)};
}

// Continuous Pareto MLE: alpha = n / sum ln(t_i / t_min), sigma = alpha / sqrt(n).
inline Estimate fit_power_law_mle(std::span<const double> durations, double tau_min) {
  if (!(tau_min > 0.0)) throw std::invalid_argument("tau_min must be positive");
  if (durations.size() < 10) throw std::invalid_argument("power-law fit needs at least 10 durations");
  double sum_log = 0.0;
  for (double d : durations) {
    if (d < tau_min) throw std::invalid_argument("duration below tau_min");
    sum_log += std::log(d / tau_min);
  }
  if (!(sum_log > 0.0)) throw std::invalid_argument("all durations equal tau_min; exponent unbounded");
  const auto n = static_cast<double>(durations.size());
  const double alpha = n / sum_log;
  return {alpha, alpha / std::sqrt(n)};
}

// Exponential MLE: rate = 1 / mean, sigma = rate / sqrt(n). Rate per ms.
inline Estimate fit_exponential_dwell(std::span<const double> durations) {
  if (durations.size() < 10) throw std::invalid_argument("exponential fit needs at least 10 durations");
  double sum = 0.0;
  for (double d : durations) sum += d;
  if (!(sum > 0.0)) throw std::invalid_argument("all durations are zero");
  const auto n = static_cast<double>(durations.size());
  const double rate = n / sum;
  return {rate, rate / std::sqrt(n)};
}

inline double power_law_log_likelihood(std::span<const double> durations, double alpha, double tau_min) {
  double ll = 0.0;
  for (double d : durations) ll += std::log(alpha / tau_min) - (1.0 + alpha) * std::log(d / tau_min);
  return ll;
}

inline double exponential_log_likelihood(std::span<const double> durations, double rate) {
  double ll = 0.0;
  for (double d : durations) ll += std::log(rate) - rate * d;
  return ll;
}

enum class DwellModel { power_law, exponential };

inline const char* to_string(DwellModel m) { return m == DwellModel::power_law ? "power_law" : "exponential"; }

struct DwellModelComparison {
  DwellModel verdict = DwellModel::power_law;
  double log_likelihood_ratio = 0.0;  // power law minus exponential
  double power_law_log_likelihood = 0.0;
  double exponential_log_likelihood = 0.0;
  Estimate alpha;
  Estimate rate;
};

inline DwellModelComparison compare_dwell_models(std::span<const double> durations, double tau_min) {
  DwellModelComparison c;
  c.alpha = fit_power_law_mle(durations, tau_min);
  c.rate = fit_exponential_dwell(durations);
  c.power_law_log_likelihood = power_law_log_likelihood(durations, c.alpha.value, tau_min);
  c.exponential_log_likelihood = exponential_log_likelihood(durations, c.rate.value);
  c.log_likelihood_ratio = c.power_law_log_likelihood - c.exponential_log_likelihood;
  c.verdict = c.log_likelihood_ratio >= 0.0 ? DwellModel::power_law : DwellModel::exponential;
  return c;
}

struct StateStatistics {
  std::optional<DwellModelComparison> comparison;  // empty when too few dwells
  std::optional<Estimate> slope;                    // log-binned least-squares cross-check
  std::string note;
};

struct BlinkingResult {
  double threshold = 50.0;  // counts per ms
  double bin_ms = 1.0;
  double trace_ms = 0.0;
  std::vector<double> on_durations;  // ms, all segments including censored ones
  std::vector<double> off_durations;
  double mean_on_rate = 0.0;
  double mean_off_rate = 0.0;
  StateStatistics on;
  StateStatistics off;

  std::optional<Estimate> alpha_on() const {
    return on.comparison ? std::optional(on.comparison->alpha) : std::nullopt;
  }
  std::optional<Estimate> alpha_off() const {
    return off.comparison ? std::optional(off.comparison->alpha) : std::nullopt;
  }
};

struct BlinkingOptions {
  double threshold_per_ms = 50.0;
  bool exclude_censored = true;
  std::optional<double> tau_min_ms;  // defaults to one trace bin
  int bins_per_decade = 8;
};

inline BlinkingResult analyze_blinking(const IntensityTrace& trace, const BlinkingOptions& options = {}) {
  const double bin_ms = trace.bin_ms();
  const StateSegments seg = segment_trace(trace, options.threshold_per_ms * bin_ms);
  BlinkingResult r;
  r.threshold = options.threshold_per_ms;
  r.bin_ms = bin_ms;
  r.trace_ms = trace.duration_ms();
  r.on_durations = seg.durations(true, false);
  r.off_durations = seg.durations(false, false);
  r.mean_on_rate = seg.mean_on_rate;
  r.mean_off_rate = seg.mean_off_rate;
  const double tau_min = options.tau_min_ms.value_or(bin_ms);

  auto analyze = [&](bool on) {
    StateStatistics s;
    std::vector<double> d = seg.durations(on, options.exclude_censored);
    std::erase_if(d, [&](double v) { return v < tau_min; });
    if (d.size() < 10) {
      s.note = "fewer than 10 dwell times";
      return s;
    }
    s.comparison = compare_dwell_models(d, tau_min);
    try {
      s.slope = log_log_slope(dwell_histogram(d, options.bins_per_decade));
    } catch (const std::invalid_argument& e) {
      s.note = e.what();
    }
    return s;
  };
  r.on = analyze(true);
  r.off = analyze(false);
  return r;
}

struct AlphaHistogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts;
  std::size_t outside = 0;  // estimates not in (0, 1)
};

// Distribution of fitted exponents across emitters, binned over (0, 1).
inline AlphaHistogram alpha_distribution(std::span<const BlinkingResult> results, int bins = 10,
                                         bool on_state = true) {
  if (results.empty()) throw std::invalid_argument("alpha distribution needs at least one result");
  if (bins < 1) throw std::invalid_argument("bin count must be positive");
  AlphaHistogram h;
  for (int k = 0; k <= bins; ++k) h.edges.push_back(static_cast<double>(k) / bins);
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (const auto& r : results) {
    const auto a = on_state ? r.alpha_on() : r.alpha_off();
    if (!a) continue;
    const double v = std::abs(a->value);
    if (!(v > 0.0 && v < 1.0)) {
      ++h.outside;
      continue;
    }
    ++h.counts[std::min(static_cast<std::size_t>(v * bins), static_cast<std::size_t>(bins - 1))];
  }
  return h;
}

}  // namespace antibunch::blink
