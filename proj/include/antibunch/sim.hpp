#pragma once

// Monte-Carlo ground truth: a blinking single emitter under CW or pulsed
// excitation, a beamsplitter and two imperfect detectors.
//
// Time is cut into fixed chunks of kChunkPs. Every random draw belongs to one
// chunk and comes from a generator seeded by (seed, purpose, chunk), so the
// output is bit-identical for any worker count, and the streaming trace
// simulation reproduces the in-memory path exactly.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "antibunch/core.hpp"
#include "antibunch/detail/parallel.hpp"
#include "antibunch/detail/random.hpp"

namespace antibunch::sim {

inline constexpr Picoseconds kChunkPs = 100 * kPsPerMs;

// Events later than this behind the newest chunk boundary are still open in
// the streaming detector. Jitter and emission delays are many orders smaller.
inline constexpr Picoseconds kStreamingGuardPs = kPsPerMs;

enum class BlinkingKind { none, two_state_exponential, power_law };

// Dwell-time law for ON/OFF switching. Power-law dwell densities go as
// tau^-(1 + alpha), truncated to [min_dwell_ms, max_dwell_ms].
struct BlinkingLaw {
  BlinkingKind kind = BlinkingKind::none;
  double alpha_on = 0.5;
  double alpha_off = 0.5;
  double min_dwell_ms = 1.0;
  double max_dwell_ms = 1e5;
  double mean_on_ms = 100.0;   // two_state_exponential only
  double mean_off_ms = 100.0;  // two_state_exponential only
  // Background photons per ms, detected-equivalent (not thinned by detector
  // efficiency). Present in both states; it is all an OFF segment emits.
  double off_emission_rate = 20.0;
};

struct EmitterModel {
  double lifetime_ns = 4.7;
  std::optional<double> biexciton_lifetime_ns;
  double biexciton_probability = 0.0;
  double quantum_yield = 1.0;
  // Decay time of laser-synchronous background under pulsed excitation;
  // defaults to lifetime_ns.
  std::optional<double> background_lifetime_ns;
  BlinkingLaw blinking;
};

enum class ExcitationMode { cw, pulsed };

struct ExcitationConfig {
  ExcitationMode mode = ExcitationMode::pulsed;
  double cw_excitation_rate = 1e6;  // excitations per second while ready
  Picoseconds pulse_period = 100'000;
  double excitation_probability_per_pulse = 1.0;
  Picoseconds pulse_width = 50;
};

struct DetectorModel {
  double efficiency = 0.65;
  double dark_rate = 1.0;       // counts per ms, per channel
  double jitter_sigma = 600.0;  // ps
  Picoseconds dead_time = 22'000;
  double splitter_ratio = 0.5;  // probability of routing to arm 0
  bool record_sync = true;
};

enum class PhotonSource : std::uint8_t { exciton, biexciton, background };

struct StateSegment {
  Timestamp begin = 0;
  Timestamp end = 0;
  bool on = true;

  double duration_ms() const { return ps_to_ms(static_cast<Picoseconds>(end - begin)); }
};

struct EmissionRecord {
  std::vector<Timestamp> times;  // sorted
  std::vector<PhotonSource> sources;
  std::vector<StateSegment> segments;
  Timestamp duration = 0;
  Picoseconds pulse_period = 0;  // 0 under CW excitation

  std::uint64_t pulse_count() const {
    if (pulse_period <= 0 || duration == 0) return 0;
    return (duration - 1) / static_cast<Timestamp>(pulse_period) + 1;
  }

  // Wraps an existing photon stream (e.g. coherent light) as ideal emission.
  static EmissionRecord from_stream(const TimestampStream& stream,
                                    PhotonSource source = PhotonSource::exciton) {
    EmissionRecord r;
    r.times = stream.events;
    r.sources.assign(stream.events.size(), source);
    r.duration = stream.duration;
    r.segments.push_back({0, stream.duration, true});
    return r;
  }
};

struct HbtStreams {
  TimestampStream arm0;
  TimestampStream arm1;
  TimestampStream sync;
};

inline void validate(const EmitterModel& m) {
  if (!(m.lifetime_ns > 0.0)) throw std::invalid_argument("emitter lifetime must be positive");
  if (m.quantum_yield < 0.0 || m.quantum_yield > 1.0)
    throw std::invalid_argument("quantum yield must lie in [0, 1]");
  if (m.biexciton_probability < 0.0 || m.biexciton_probability > 1.0)
    throw std::invalid_argument("biexciton probability must lie in [0, 1]");
  if (m.biexciton_probability > 0.0 && !(m.biexciton_lifetime_ns.value_or(0.0) > 0.0))
    throw std::invalid_argument("biexciton emission needs a positive biexciton lifetime");
  if (m.background_lifetime_ns && !(*m.background_lifetime_ns > 0.0))
    throw std::invalid_argument("background lifetime must be positive");
  const BlinkingLaw& b = m.blinking;
  if (b.off_emission_rate < 0.0) throw std::invalid_argument("background rate must be non-negative");
  switch (b.kind) {
    case BlinkingKind::none:
      break;
    case BlinkingKind::power_law:
      if (!(b.alpha_on > 0.0 && b.alpha_on < 1.0) || !(b.alpha_off > 0.0 && b.alpha_off < 1.0))
        throw std::invalid_argument("power-law blinking exponents must lie in (0, 1)");
      if (!(b.min_dwell_ms > 0.0) || !(b.min_dwell_ms < b.max_dwell_ms))
        throw std::invalid_argument("power-law dwell bounds need 0 < min_dwell < max_dwell");
      break;
    case BlinkingKind::two_state_exponential:
      if (!(b.mean_on_ms > 0.0) || !(b.mean_off_ms > 0.0))
        throw std::invalid_argument("exponential blinking needs positive mean dwell times");
      break;
  }
}

inline void validate(const ExcitationConfig& e) {
  if (e.mode == ExcitationMode::pulsed) {
    if (e.pulse_period <= 0) throw std::invalid_argument("pulse period must be positive");
    if (e.excitation_probability_per_pulse < 0.0 || e.excitation_probability_per_pulse > 1.0)
      throw std::invalid_argument("excitation probability must lie in [0, 1]");
    if (e.pulse_width < 0 || e.pulse_width > e.pulse_period)
      throw std::invalid_argument("pulse width must lie in [0, period]");
  } else if (e.cw_excitation_rate < 0.0) {
    throw std::invalid_argument("cw excitation rate must be non-negative");
  }
}

inline void validate(const DetectorModel& d) {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(d.efficiency) || !unit(d.splitter_ratio))
    throw std::invalid_argument("detector efficiency and splitter ratio must lie in [0, 1]");
  if (d.dark_rate < 0.0 || d.jitter_sigma < 0.0 || d.dead_time < 0)
    throw std::invalid_argument("detector rates, jitter and dead time must be non-negative");
}

// Inverse CDF of the Pareto law p(t) ~ t^-(1+alpha) truncated to [lo, hi].
inline double truncated_pareto(double u, double alpha, double lo, double hi) {
  const double tail = std::pow(hi / lo, -alpha);
  return lo * std::pow(1.0 - u * (1.0 - tail), -1.0 / alpha);
}

// Alternating ON/OFF segments covering [0, duration), starting ON.
inline std::vector<StateSegment> generate_segments(const BlinkingLaw& law, Timestamp duration,
                                                   std::uint64_t seed) {
  std::vector<StateSegment> segments;
  if (law.kind == BlinkingKind::none || duration == 0) {
    segments.push_back({0, duration, true});
    return segments;
  }
  auto rng = antibunch::detail::make_rng(seed, antibunch::detail::kBlinkingPurpose, 0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Timestamp t = 0;
  bool on = true;
  while (t < duration) {
    double dwell_ms = 0.0;
    if (law.kind == BlinkingKind::power_law) {
      dwell_ms = truncated_pareto(uniform(rng), on ? law.alpha_on : law.alpha_off, law.min_dwell_ms,
                                  law.max_dwell_ms);
    } else {
      std::exponential_distribution<double> exp(1.0 / (on ? law.mean_on_ms : law.mean_off_ms));
      dwell_ms = exp(rng);
    }
    const auto dwell = std::max<Timestamp>(1, static_cast<Timestamp>(std::llround(dwell_ms * 1e9)));
    const Timestamp end = (duration - t > dwell) ? t + dwell : duration;
    segments.push_back({t, end, on});
    t = end;
    on = !on;
  }
  return segments;
}

namespace detail {

struct Photon {
  Timestamp t;
  PhotonSource source;
};

inline std::size_t chunk_count(Timestamp duration) {
  return static_cast<std::size_t>(duration / kChunkPs) + 1;
}

// Monotone lookup of the segment containing t.
class SegmentCursor {
 public:
  explicit SegmentCursor(const std::vector<StateSegment>& segments) : segments_(segments) {}

  const StateSegment* at(Timestamp t) {
    if (segments_.empty()) return nullptr;
    if (index_ >= segments_.size() || segments_[index_].begin > t) {
      auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                                 [](Timestamp v, const StateSegment& s) { return v < s.begin; });
      index_ = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - segments_.begin()) - 1));
    }
    while (index_ + 1 < segments_.size() && segments_[index_].end <= t) ++index_;
    return &segments_[index_];
  }

 private:
  const std::vector<StateSegment>& segments_;
  std::size_t index_ = 0;
};

class EmissionChunker {
 public:
  EmissionChunker(const EmitterModel& emitter, const ExcitationConfig& excitation, Timestamp duration,
                  std::uint64_t seed)
      : emitter_(emitter), excitation_(excitation), duration_(duration), seed_(seed) {
    validate(emitter_);
    validate(excitation_);
    segments_ = generate_segments(emitter_.blinking, duration_, seed_);
  }

  const std::vector<StateSegment>& segments() const { return segments_; }
  std::size_t chunks() const { return chunk_count(duration_); }
  Timestamp duration() const { return duration_; }
  Picoseconds pulse_period() const {
    return excitation_.mode == ExcitationMode::pulsed ? excitation_.pulse_period : 0;
  }

  // Photons whose excitation falls in chunk c, in generation order. Emission
  // times may spill past the chunk end.
  std::vector<Photon> generate(std::size_t c) const {
    std::vector<Photon> out;
    const Timestamp begin = static_cast<Timestamp>(c) * kChunkPs;
    const Timestamp end = std::min<Timestamp>(begin + kChunkPs, duration_);
    if (begin >= end) return out;
    if (excitation_.mode == ExcitationMode::pulsed)
      generate_pulsed(c, begin, end, out);
    else
      generate_cw(c, begin, end, out);
    generate_background(c, begin, end, out);
    return out;
  }

 private:
  // One excitation cycle starting at t_exc; returns the time the emitter is
  // ready again.
  template <class Rng>
  Timestamp cycle(Timestamp t_exc, Rng& rng, std::vector<Photon>& out) const {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    double t = static_cast<double>(t_exc);
    if (emitter_.biexciton_probability > 0.0 && uniform(rng) < emitter_.biexciton_probability) {
      std::exponential_distribution<double> xx(1.0 / (*emitter_.biexciton_lifetime_ns * 1000.0));
      t += xx(rng);
      out.push_back({static_cast<Timestamp>(std::llround(t)), PhotonSource::biexciton});
    }
    std::exponential_distribution<double> x(1.0 / (emitter_.lifetime_ns * 1000.0));
    t += x(rng);
    const auto t_emit = static_cast<Timestamp>(std::llround(t));
    if (uniform(rng) < emitter_.quantum_yield) out.push_back({t_emit, PhotonSource::exciton});
    return t_emit;
  }

  void generate_cw(std::size_t c, Timestamp begin, Timestamp end, std::vector<Photon>& out) const {
    if (!(excitation_.cw_excitation_rate > 0.0)) return;
    auto rng = antibunch::detail::make_rng(seed_, antibunch::detail::kEmissionPurpose, c);
    std::exponential_distribution<double> wait(excitation_.cw_excitation_rate / 1e12);
    SegmentCursor cursor(segments_);
    Timestamp ready = begin;
    while (true) {
      const Timestamp t = ready + static_cast<Timestamp>(std::llround(wait(rng)));
      if (t >= end) break;
      const StateSegment* seg = cursor.at(t);
      if (seg && !seg->on) {
        ready = seg->end;  // memoryless: restart the wait when the emitter returns
        continue;
      }
      ready = cycle(t, rng, out);
    }
  }

  void generate_pulsed(std::size_t c, Timestamp begin, Timestamp end, std::vector<Photon>& out) const {
    const double p = excitation_.excitation_probability_per_pulse;
    if (!(p > 0.0)) return;
    const auto period = static_cast<Timestamp>(excitation_.pulse_period);
    const Timestamp k_begin = (begin + period - 1) / period;
    const Timestamp k_end = (end + period - 1) / period;
    auto rng = antibunch::detail::make_rng(seed_, antibunch::detail::kEmissionPurpose, c);
    std::geometric_distribution<std::uint64_t> skip(p < 1.0 ? p : 0.5);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    SegmentCursor cursor(segments_);
    Timestamp ready = 0;
    Timestamp k = k_begin;
    while (true) {
      if (p < 1.0) k += skip(rng);
      if (k >= k_end) break;
      const Timestamp pulse = k * period;
      const StateSegment* seg = cursor.at(pulse);
      if (seg && !seg->on) {
        k = (seg->end + period - 1) / period;
        continue;
      }
      if (pulse >= ready) {
        const auto t_exc = pulse + static_cast<Timestamp>(uniform(rng) * static_cast<double>(excitation_.pulse_width));
        ready = cycle(t_exc, rng, out);
      }
      ++k;
    }
  }

  void generate_background(std::size_t c, Timestamp begin, Timestamp end, std::vector<Photon>& out) const {
    const double rate_per_ps = emitter_.blinking.off_emission_rate / 1e9;
    if (!(rate_per_ps > 0.0)) return;
    auto rng = antibunch::detail::make_rng(seed_, antibunch::detail::kBackgroundPurpose, c);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const std::size_t first = out.size();
    if (excitation_.mode == ExcitationMode::cw) {
      std::poisson_distribution<std::uint64_t> count(rate_per_ps * static_cast<double>(end - begin));
      const std::uint64_t n = count(rng);
      for (std::uint64_t i = 0; i < n; ++i) {
        const auto t = begin + static_cast<Timestamp>(uniform(rng) * static_cast<double>(end - begin));
        out.push_back({t, PhotonSource::background});
      }
    } else {
      // Laser-synchronous background; per-pulse Poisson counts, drawn as one
      // chunk total scattered uniformly over the chunk's pulses.
      const auto period = static_cast<Timestamp>(excitation_.pulse_period);
      const Timestamp k_begin = (begin + period - 1) / period;
      const Timestamp k_end = (end + period - 1) / period;
      if (k_end <= k_begin) return;
      const double per_pulse = rate_per_ps * static_cast<double>(period);
      std::poisson_distribution<std::uint64_t> count(per_pulse * static_cast<double>(k_end - k_begin));
      std::uniform_int_distribution<Timestamp> pick(k_begin, k_end - 1);
      std::exponential_distribution<double> decay(
          1.0 / (emitter_.background_lifetime_ns.value_or(emitter_.lifetime_ns) * 1000.0));
      const std::uint64_t n = count(rng);
      for (std::uint64_t i = 0; i < n; ++i) {
        double t = static_cast<double>(pick(rng) * period);
        t += uniform(rng) * static_cast<double>(excitation_.pulse_width);
        t += decay(rng);
        out.push_back({static_cast<Timestamp>(std::llround(t)), PhotonSource::background});
      }
    }
    std::sort(out.begin() + static_cast<std::ptrdiff_t>(first), out.end(),
              [](const Photon& a, const Photon& b) { return a.t < b.t; });
  }

  EmitterModel emitter_;
  ExcitationConfig excitation_;
  Timestamp duration_;
  std::uint64_t seed_;
  std::vector<StateSegment> segments_;
};

inline void stable_sort_by_time(std::vector<Photon>& photons) {
  std::stable_sort(photons.begin(), photons.end(),
                   [](const Photon& a, const Photon& b) { return a.t < b.t; });
}

// Per-photon routing, loss and jitter for the photons of time chunk c, plus
// that chunk's dark counts. Output per arm, unsorted.
inline std::array<std::vector<Timestamp>, 2> detect_chunk(std::size_t c, std::span<const Timestamp> times,
                                                          std::span<const PhotonSource> sources,
                                                          const DetectorModel& det, Timestamp duration,
                                                          std::uint64_t seed) {
  std::array<std::vector<Timestamp>, 2> arms;
  auto rng = antibunch::detail::make_rng(seed, antibunch::detail::kDetectionPurpose, c);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, det.jitter_sigma > 0.0 ? det.jitter_sigma : 1.0);
  for (std::size_t i = 0; i < times.size(); ++i) {
    const int arm = uniform(rng) < det.splitter_ratio ? 0 : 1;
    const bool kept = sources[i] == PhotonSource::background || uniform(rng) < det.efficiency;
    const Picoseconds dt = det.jitter_sigma > 0.0 ? std::llround(jitter(rng)) : 0;
    if (!kept) continue;
    const Picoseconds t = static_cast<Picoseconds>(times[i]) + dt;
    if (t < 0 || t > static_cast<Picoseconds>(duration)) continue;
    arms[arm].push_back(static_cast<Timestamp>(t));
  }
  const Timestamp begin = static_cast<Timestamp>(c) * kChunkPs;
  const Timestamp end = std::min<Timestamp>(begin + kChunkPs, duration);
  if (det.dark_rate > 0.0 && end > begin) {
    for (int arm = 0; arm < 2; ++arm) {
      auto dark_rng = antibunch::detail::make_rng(seed, antibunch::detail::kDarkPurpose + arm, c);
      std::poisson_distribution<std::uint64_t> count(det.dark_rate / 1e9 * static_cast<double>(end - begin));
      const std::uint64_t n = count(dark_rng);
      for (std::uint64_t i = 0; i < n; ++i)
        arms[arm].push_back(begin + static_cast<Timestamp>(uniform(dark_rng) * static_cast<double>(end - begin)));
    }
  }
  return arms;
}

// Drops events closer than dead_time to the previously accepted one.
class DeadTimeFilter {
 public:
  explicit DeadTimeFilter(Picoseconds dead_time) : dead_time_(dead_time) {}
  bool accept(Timestamp t) {
    if (has_last_ && static_cast<Picoseconds>(t - last_) < dead_time_) return false;
    has_last_ = true;
    last_ = t;
    return true;
  }

 private:
  Picoseconds dead_time_;
  bool has_last_ = false;
  Timestamp last_ = 0;
};

inline std::vector<Timestamp> apply_dead_time(std::vector<Timestamp> events, Picoseconds dead_time) {
  DeadTimeFilter filter(dead_time);
  std::size_t k = 0;
  for (Timestamp t : events)
    if (filter.accept(t)) events[k++] = t;
  events.resize(k);
  return events;
}

}  // namespace detail

// Ideal emission (no detector). Deterministic in (models, duration, seed);
// `workers` only changes wall time.
inline EmissionRecord generate_emission(const EmitterModel& emitter, const ExcitationConfig& excitation,
                                        Timestamp duration, std::uint64_t seed, std::size_t workers = 1) {
  if (duration == 0) throw std::invalid_argument("simulation duration must be positive");
  detail::EmissionChunker chunker(emitter, excitation, duration, seed);
  std::vector<std::vector<detail::Photon>> chunks(chunker.chunks());
  antibunch::detail::parallel_for(chunks.size(), workers, [&](std::size_t c) { chunks[c] = chunker.generate(c); });

  std::vector<detail::Photon> all;
  std::size_t total = 0;
  for (const auto& ch : chunks) total += ch.size();
  all.reserve(total);
  for (auto& ch : chunks) {
    all.insert(all.end(), ch.begin(), ch.end());
    std::vector<detail::Photon>().swap(ch);
  }
  detail::stable_sort_by_time(all);

  EmissionRecord record;
  record.duration = duration;
  record.pulse_period = chunker.pulse_period();
  record.segments = chunker.segments();
  record.times.reserve(all.size());
  record.sources.reserve(all.size());
  for (const auto& p : all) {
    if (p.t > duration) break;
    record.times.push_back(p.t);
    record.sources.push_back(p.source);
  }
  return record;
}

// Routes photons through the beamsplitter onto two detectors and records the
// laser sync. Streams come out sorted with dead time applied.
inline HbtStreams detect_hbt(const EmissionRecord& emission, const DetectorModel& detector, std::uint64_t seed,
                             std::size_t workers = 1) {
  validate(detector);
  if (emission.times.size() != emission.sources.size())
    throw std::invalid_argument("emission record times and sources differ in length");
  const std::size_t n_chunks = detail::chunk_count(emission.duration);

  // Photon index range of every time chunk.
  std::vector<std::size_t> bounds(n_chunks + 1, emission.times.size());
  bounds[0] = 0;
  for (std::size_t c = 1; c < n_chunks; ++c) {
    const Timestamp t0 = static_cast<Timestamp>(c) * kChunkPs;
    bounds[c] = static_cast<std::size_t>(
        std::lower_bound(emission.times.begin(), emission.times.end(), t0) - emission.times.begin());
  }

  std::vector<std::array<std::vector<Timestamp>, 2>> parts(n_chunks);
  antibunch::detail::parallel_for(n_chunks, workers, [&](std::size_t c) {
    const std::size_t lo = bounds[c], hi = bounds[c + 1];
    parts[c] = detail::detect_chunk(c, std::span(emission.times).subspan(lo, hi - lo),
                                    std::span(emission.sources).subspan(lo, hi - lo), detector,
                                    emission.duration, seed);
  });

  HbtStreams out;
  std::array<TimestampStream*, 2> arms{&out.arm0, &out.arm1};
  for (int arm = 0; arm < 2; ++arm) {
    std::vector<Timestamp> events;
    for (auto& p : parts) events.insert(events.end(), p[arm].begin(), p[arm].end());
    std::sort(events.begin(), events.end());
    arms[arm]->channel = arm == 0 ? kArm0Channel : kArm1Channel;
    arms[arm]->duration = emission.duration;
    arms[arm]->events = detail::apply_dead_time(std::move(events), detector.dead_time);
  }
  out.sync.channel = kSyncChannel;
  out.sync.duration = emission.duration;
  if (detector.record_sync && emission.pulse_period > 0) {
    const std::uint64_t n = emission.pulse_count();
    out.sync.events.resize(n);
    for (std::uint64_t k = 0; k < n; ++k) out.sync.events[k] = k * static_cast<Timestamp>(emission.pulse_period);
  }
  return out;
}

// Homogeneous Poisson arrivals (coherent light).
inline TimestampStream simulate_poissonian(double rate_per_s, Timestamp duration, std::uint64_t seed,
                                           ChannelId channel = kArm0Channel) {
  if (!(rate_per_s > 0.0)) throw std::invalid_argument("poisson rate must be positive");
  TimestampStream out;
  out.channel = channel;
  out.duration = duration;
  if (duration == 0) return out;
  const std::size_t n_chunks = detail::chunk_count(duration);
  for (std::size_t c = 0; c < n_chunks; ++c) {
    const Timestamp begin = static_cast<Timestamp>(c) * kChunkPs;
    const Timestamp end = std::min<Timestamp>(begin + kChunkPs, duration);
    if (begin >= end) break;
    auto rng = antibunch::detail::make_rng(seed, antibunch::detail::kPoissonPurpose, c);
    std::poisson_distribution<std::uint64_t> count(rate_per_s / 1e12 * static_cast<double>(end - begin));
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const std::uint64_t n = count(rng);
    const std::size_t first = out.events.size();
    for (std::uint64_t i = 0; i < n; ++i)
      out.events.push_back(begin + static_cast<Timestamp>(uniform(rng) * static_cast<double>(end - begin)));
    std::sort(out.events.begin() + static_cast<std::ptrdiff_t>(first), out.events.end());
  }
  return out;
}

struct TraceSimulation {
  IntensityTrace trace;                // both arms summed
  std::vector<StateSegment> segments;  // ground truth
  std::uint64_t detected = 0;
};

// Streams generate_emission -> detect_hbt -> summed-arm intensity binning in
// chunks, so long blinking traces never hold the photon record in memory.
// Counts equal intensity_trace(merge(arm0, arm1)) of the in-memory path.
inline TraceSimulation simulate_intensity_trace(const EmitterModel& emitter, const ExcitationConfig& excitation,
                                                const DetectorModel& detector, Timestamp duration,
                                                Picoseconds bin_width, std::uint64_t emission_seed,
                                                std::uint64_t detection_seed) {
  if (duration == 0) throw std::invalid_argument("simulation duration must be positive");
  if (bin_width <= 0) throw std::invalid_argument("trace bin width must be positive");
  validate(detector);
  detail::EmissionChunker chunker(emitter, excitation, duration, emission_seed);

  TraceSimulation out;
  out.segments = chunker.segments();
  out.trace.bin_width = bin_width;
  const auto n_bins = static_cast<std::size_t>((duration + static_cast<Timestamp>(bin_width) - 1) /
                                                static_cast<Timestamp>(bin_width));
  out.trace.counts.assign(n_bins, 0);
  auto add = [&](Timestamp t) {
    auto j = static_cast<std::size_t>(t / static_cast<Timestamp>(bin_width));
    if (j >= n_bins) j = n_bins - 1;
    ++out.trace.counts[j];
    ++out.detected;
  };

  std::vector<detail::Photon> spill;
  std::array<std::vector<Timestamp>, 2> pending;
  std::array<detail::DeadTimeFilter, 2> filters{detail::DeadTimeFilter(detector.dead_time),
                                                detail::DeadTimeFilter(detector.dead_time)};
  Timestamp finalized_below = 0;
  auto finalize = [&](Timestamp watermark) {
    for (int arm = 0; arm < 2; ++arm) {
      auto& p = pending[arm];
      std::sort(p.begin(), p.end());
      auto cut = std::lower_bound(p.begin(), p.end(), watermark);
      for (auto it = p.begin(); it != cut; ++it)
        if (filters[arm].accept(*it)) add(*it);
      p.erase(p.begin(), cut);
    }
    finalized_below = watermark;
  };

  const std::size_t n_chunks = chunker.chunks();
  std::vector<Timestamp> times;
  std::vector<PhotonSource> sources;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    auto fresh = chunker.generate(c);
    spill.insert(spill.end(), fresh.begin(), fresh.end());
    detail::stable_sort_by_time(spill);
    const Timestamp chunk_end = static_cast<Timestamp>(c + 1) * kChunkPs;
    const bool last = c + 1 == n_chunks;
    times.clear();
    sources.clear();
    std::size_t taken = 0;
    for (; taken < spill.size(); ++taken) {
      const auto& p = spill[taken];
      if (!last && p.t >= chunk_end) break;
      if (p.t > duration) continue;
      times.push_back(p.t);
      sources.push_back(p.source);
    }
    spill.erase(spill.begin(), spill.begin() + static_cast<std::ptrdiff_t>(taken));

    auto arms = detail::detect_chunk(c, times, sources, detector, duration, detection_seed);
    for (int arm = 0; arm < 2; ++arm) {
      for (Timestamp t : arms[arm])
        if (t < finalized_below)
          throw std::logic_error("streaming detector received an event behind its watermark");
      pending[arm].insert(pending[arm].end(), arms[arm].begin(), arms[arm].end());
    }
    if (!last && chunk_end > static_cast<Timestamp>(kStreamingGuardPs))
      finalize(chunk_end - static_cast<Timestamp>(kStreamingGuardPs));
  }
  finalize(std::numeric_limits<Timestamp>::max());
  return out;
}

}  // namespace antibunch::sim
