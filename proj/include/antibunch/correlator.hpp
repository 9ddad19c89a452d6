#pragma once

// Histogram engines over photon timestamp streams.
//
// Delays are signed 64-bit picoseconds; a delay d lands in bin
// floor((d + window) / bin_width) when -window <= d < window.

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "antibunch/core.hpp"
#include "antibunch/detail/parallel.hpp"

namespace antibunch::corr {

namespace detail {

inline void check_geometry(Picoseconds window, Picoseconds bin_width) {
  if (bin_width <= 0) throw std::invalid_argument("bin width must be positive");
  if (window < bin_width) throw std::invalid_argument("window must be at least one bin wide");
}

inline CoincidenceHistogram empty_histogram(Picoseconds window, Picoseconds bin_width) {
  CoincidenceHistogram h;
  h.window = window;
  h.bin_width = bin_width;
  h.counts.assign(CoincidenceHistogram::bin_count(window, bin_width), 0);
  return h;
}

// Pairs whose a-event index lies in [begin, end).
inline void correlate_range(const std::vector<Timestamp>& a, const std::vector<Timestamp>& b,
                            std::size_t begin, std::size_t end, Picoseconds window,
                            Picoseconds bin_width, std::vector<std::uint64_t>& counts) {
  if (begin >= end || b.empty()) return;
  const auto lowest = [&](Timestamp t) {
    return t > static_cast<Timestamp>(window) ? t - static_cast<Timestamp>(window) : Timestamp{0};
  };
  auto lo = static_cast<std::size_t>(std::lower_bound(b.begin(), b.end(), lowest(a[begin])) - b.begin());
  const std::size_t nb = b.size();
  const std::size_t nbins = counts.size();
  for (std::size_t i = begin; i < end; ++i) {
    const auto ta = static_cast<Picoseconds>(a[i]);
    while (lo < nb && static_cast<Picoseconds>(b[lo]) < ta - window) ++lo;
    for (std::size_t j = lo; j < nb; ++j) {
      const Picoseconds d = static_cast<Picoseconds>(b[j]) - ta;
      if (d >= window) break;
      const auto bin = static_cast<std::size_t>((d + window) / bin_width);
      if (bin < nbins) ++counts[bin];
    }
  }
}

}  // namespace detail

// Full cross-correlation of b relative to a (delay = t_b - t_a). Two-cursor
// sweep, O(n * k) for k events per window. Work is split over a-events.
inline CoincidenceHistogram cross_correlate(const TimestampStream& a, const TimestampStream& b,
                                            Picoseconds window, Picoseconds bin_width,
                                            std::size_t workers = 1) {
  detail::check_geometry(window, bin_width);
  if (!is_sorted(a) || !is_sorted(b)) throw std::invalid_argument("cross_correlate requires sorted streams");
  CoincidenceHistogram h = detail::empty_histogram(window, bin_width);
  const std::size_t n = a.events.size();
  workers = std::max<std::size_t>(1, std::min<std::size_t>(workers, n / 1024 + 1));
  if (workers == 1) {
    detail::correlate_range(a.events, b.events, 0, n, window, bin_width, h.counts);
    return h;
  }
  std::vector<std::vector<std::uint64_t>> partial(workers, std::vector<std::uint64_t>(h.counts.size(), 0));
  antibunch::detail::parallel_for(workers, workers, [&](std::size_t w) {
    detail::correlate_range(a.events, b.events, n * w / workers, n * (w + 1) / workers, window, bin_width,
                            partial[w]);
  });
  for (const auto& p : partial)
    for (std::size_t j = 0; j < p.size(); ++j) h.counts[j] += p[j];
  return h;
}

// Reference implementation: every ordered pair, O(n_a * n_b).
inline CoincidenceHistogram brute_force_correlate(const TimestampStream& a, const TimestampStream& b,
                                                  Picoseconds window, Picoseconds bin_width) {
  detail::check_geometry(window, bin_width);
  CoincidenceHistogram h = detail::empty_histogram(window, bin_width);
  for (Timestamp ta : a.events) {
    for (Timestamp tb : b.events) {
      const Picoseconds d = static_cast<Picoseconds>(tb) - static_cast<Picoseconds>(ta);
      if (d < -window || d >= window) continue;
      const auto bin = static_cast<std::size_t>((d + window) / bin_width);
      if (bin < h.counts.size()) ++h.counts[bin];
    }
  }
  return h;
}

// Delay of each photon after the preceding sync event. A photon exactly on a
// sync gets delay 0. Photons before the first sync, or more than one period
// after the preceding sync (missed sync), are discarded and tallied.
inline DecayHistogram sync_decay_histogram(const TimestampStream& photons, const TimestampStream& sync,
                                           Picoseconds bin_width, Picoseconds period = 0) {
  if (!is_sorted(photons) || !is_sorted(sync)) throw std::invalid_argument("sync_decay_histogram requires sorted streams");
  if (period <= 0) {
    if (sync.events.size() < 2) throw std::invalid_argument("need two sync events or an explicit period");
    std::vector<Timestamp> gaps;
    gaps.reserve(sync.events.size() - 1);
    for (std::size_t i = 1; i < sync.events.size(); ++i) gaps.push_back(sync.events[i] - sync.events[i - 1]);
    std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2), gaps.end());
    period = static_cast<Picoseconds>(gaps[gaps.size() / 2]);
  }
  if (bin_width <= 0) throw std::invalid_argument("bin width must be positive");
  if (bin_width > period) throw std::invalid_argument("bin width exceeds the sync period");

  DecayHistogram h;
  h.bin_width = bin_width;
  h.period = period;
  h.counts.assign(static_cast<std::size_t>((period + bin_width - 1) / bin_width), 0);
  std::size_t s = 0;
  for (Timestamp t : photons.events) {
    while (s < sync.events.size() && sync.events[s] <= t) ++s;
    if (s == 0) {
      ++h.discarded;
      continue;
    }
    const auto delay = static_cast<Picoseconds>(t - sync.events[s - 1]);
    if (delay >= period) {
      ++h.discarded;
      continue;
    }
    ++h.counts[static_cast<std::size_t>(delay / bin_width)];
  }
  return h;
}

// Sync pulses at k * period (+ phase); no sync stream needed.
inline DecayHistogram sync_decay_histogram(const TimestampStream& photons, Picoseconds period,
                                           Picoseconds bin_width, Picoseconds phase = 0) {
  if (period <= 0) throw std::invalid_argument("sync period must be positive");
  if (bin_width <= 0) throw std::invalid_argument("bin width must be positive");
  if (bin_width > period) throw std::invalid_argument("bin width exceeds the sync period");
  DecayHistogram h;
  h.bin_width = bin_width;
  h.period = period;
  h.counts.assign(static_cast<std::size_t>((period + bin_width - 1) / bin_width), 0);
  for (Timestamp t : photons.events) {
    const Picoseconds shifted = static_cast<Picoseconds>(t) - phase;
    if (shifted < 0) {
      ++h.discarded;
      continue;
    }
    ++h.counts[static_cast<std::size_t>((shifted % period) / bin_width)];
  }
  return h;
}

// Counts per bin over [0, duration]; an event exactly at the end of a
// bin-aligned duration goes into the last bin.
inline IntensityTrace intensity_trace(const TimestampStream& photons, Picoseconds bin_width = kPsPerMs) {
  if (bin_width <= 0) throw std::invalid_argument("bin width must be positive");
  if (!is_sorted(photons)) throw std::invalid_argument("intensity_trace requires a sorted stream");
  IntensityTrace trace;
  trace.bin_width = bin_width;
  const auto bw = static_cast<Timestamp>(bin_width);
  const auto n_bins = static_cast<std::size_t>((photons.duration + bw - 1) / bw);
  trace.counts.assign(n_bins, 0);
  if (n_bins == 0) {
    if (!photons.events.empty()) throw std::invalid_argument("stream has events but zero duration");
    return trace;
  }
  for (Timestamp t : photons.events) {
    auto j = static_cast<std::size_t>(t / bw);
    if (j >= n_bins) {
      if (t > photons.duration) throw std::invalid_argument("event past stream duration");
      j = n_bins - 1;
    }
    ++trace.counts[j];
  }
  return trace;
}

}  // namespace antibunch::corr
