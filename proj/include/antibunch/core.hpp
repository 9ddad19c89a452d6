#pragma once

// Domain types shared by every antibunch module.
//
// Units: timestamps and every time quantity that crosses an I/O boundary are
// integer picoseconds. Fitting works in real-valued nanoseconds; use
// ps_to_ns / ns_to_ps at the seam.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace antibunch {

using Picoseconds = std::int64_t;
using Timestamp = std::uint64_t;
using ChannelId = std::uint8_t;

inline constexpr ChannelId kArm0Channel = 0;
inline constexpr ChannelId kArm1Channel = 1;
inline constexpr ChannelId kSyncChannel = 255;

inline constexpr Picoseconds kPsPerNs = 1'000;
inline constexpr Picoseconds kPsPerMs = 1'000'000'000;
inline constexpr Picoseconds kPsPerSecond = 1'000'000'000'000;

inline double ps_to_ns(Timestamp t) { return static_cast<double>(t) / 1000.0; }
inline double ps_to_ns(Picoseconds t) { return static_cast<double>(t) / 1000.0; }

// Rounds to the nearest picosecond. The extended-precision product keeps the
// ps -> ns -> ps round trip exact for every timestamp below 2^52 ps.
inline Picoseconds ns_to_ps(double ns) {
  return static_cast<Picoseconds>(std::llroundl(static_cast<long double>(ns) * 1000.0L));
}

inline double ps_to_ms(Picoseconds t) { return static_cast<double>(t) / 1e9; }

// A value with its 1-sigma uncertainty.
struct Estimate {
  double value = 0.0;
  double sigma = 0.0;
};

// Photon (or sync) arrival times on one channel.
struct TimestampStream {
  ChannelId channel = kArm0Channel;
  std::vector<Timestamp> events;
  Timestamp duration = 0;

  std::size_t size() const { return events.size(); }
  bool empty() const { return events.empty(); }
};

struct ValidationReport {
  std::size_t events = 0;
  std::optional<std::size_t> first_order_violation;
  std::size_t order_violations = 0;
  std::size_t duplicates = 0;
  std::size_t past_duration = 0;

  bool sorted() const { return order_violations == 0; }
  bool valid() const { return order_violations == 0 && past_duration == 0; }
};

// Report-only check; never throws. Duplicated timestamps are legal (two
// detectors can fire within one TDC tick) and are only counted.
inline ValidationReport validate_stream(const TimestampStream& stream) {
  ValidationReport report;
  report.events = stream.events.size();
  for (std::size_t i = 0; i < stream.events.size(); ++i) {
    const Timestamp t = stream.events[i];
    if (t > stream.duration) ++report.past_duration;
    if (i == 0) continue;
    const Timestamp prev = stream.events[i - 1];
    if (t < prev) {
      ++report.order_violations;
      if (!report.first_order_violation) report.first_order_violation = i;
    } else if (t == prev) {
      ++report.duplicates;
    }
  }
  return report;
}

inline bool is_sorted(const TimestampStream& stream) {
  for (std::size_t i = 1; i < stream.events.size(); ++i)
    if (stream.events[i] < stream.events[i - 1]) return false;
  return true;
}

// Merges two sorted streams into one; the result carries `channel`.
inline TimestampStream merge_streams(const TimestampStream& a, const TimestampStream& b,
                                     ChannelId channel = kArm0Channel) {
  TimestampStream out;
  out.channel = channel;
  out.duration = std::max(a.duration, b.duration);
  out.events.resize(a.events.size() + b.events.size());
  std::size_t i = 0, j = 0, k = 0;
  while (i < a.events.size() && j < b.events.size())
    out.events[k++] = (b.events[j] < a.events[i]) ? b.events[j++] : a.events[i++];
  while (i < a.events.size()) out.events[k++] = a.events[i++];
  while (j < b.events.size()) out.events[k++] = b.events[j++];
  return out;
}

// Pair-delay histogram. Bin j covers delays [-window + j*bin_width,
// -window + (j+1)*bin_width).
struct CoincidenceHistogram {
  Picoseconds bin_width = 0;
  Picoseconds window = 0;
  std::vector<std::uint64_t> counts;
  std::optional<Picoseconds> center_offset;  // tau0, filled after a fit
  std::optional<double> normalization;       // divisor mapping the plateau to 1

  static std::size_t bin_count(Picoseconds window, Picoseconds bin_width) {
    return static_cast<std::size_t>((2 * window + bin_width - 1) / bin_width);
  }
  Picoseconds bin_low(std::size_t j) const {
    return -window + static_cast<Picoseconds>(j) * bin_width;
  }
  double bin_center_ns(std::size_t j) const {
    return (static_cast<double>(bin_low(j)) + 0.5 * static_cast<double>(bin_width)) / 1000.0;
  }
  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
};

// Photon delays relative to the preceding sync pulse, binned over [0, period).
struct DecayHistogram {
  Picoseconds bin_width = 0;
  Picoseconds period = 0;
  std::vector<std::uint64_t> counts;
  std::uint64_t discarded = 0;  // photons with no usable preceding sync

  double bin_center_ns(std::size_t j) const {
    return (static_cast<double>(j) + 0.5) * static_cast<double>(bin_width) / 1000.0;
  }
  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
};

struct IntensityTrace {
  Picoseconds bin_width = kPsPerMs;
  std::vector<std::uint64_t> counts;

  double bin_ms() const { return ps_to_ms(bin_width); }
  double duration_ms() const { return bin_ms() * static_cast<double>(counts.size()); }
  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
};

// Continuous-excitation g2 model: a * (1 - b * exp(-|tau - tau0| / tau_x)).
struct G2CwParams {
  double a = 0.0;       // plateau, counts per bin
  double b = 0.0;       // dip depth
  double tau0 = 0.0;    // ns
  double tau_x = 0.0;   // ns
};

// Pulsed g2 model with peaks at n*period, n in [-N, N]; heights[N] is b0.
struct G2PwParams {
  double a = 0.0;
  std::vector<double> heights;
  double tau0 = 0.0;    // ns
  double tau_x = 0.0;   // ns
  double period = 0.0;  // ns, held fixed during fitting

  int side_peaks() const { return static_cast<int>(heights.size() / 2); }
  double center_height() const { return heights.at(heights.size() / 2); }
  double height(int n) const { return heights.at(static_cast<std::size_t>(n + side_peaks())); }
  double mean_side_height() const {
    double s = 0.0;
    const int n_side = side_peaks();
    for (int n = -n_side; n <= n_side; ++n)
      if (n != 0) s += height(n);
    return n_side > 0 ? s / (2.0 * n_side) : 0.0;
  }
};

struct ExpComponent {
  double amplitude = 0.0;  // B_i, counts per bin at tau0
  double lifetime = 0.0;   // tau_i, ns
};

// Decay model A + sum_i B_i exp(-(tau - tau0) / tau_i); components sorted by lifetime.
struct MultiExpParams {
  double floor = 0.0;
  std::vector<ExpComponent> components;
  double tau0 = 0.0;  // ns
};

}  // namespace antibunch
