#pragma once

// PTST binary timestamp files.
//
// Header, 19 bytes little-endian: "PTST", version u16, channel count u8,
// resolution (ps per tick) u32, record count u64. Each record is 16 bytes:
// timestamp u64, channel u8, 7 zero bytes. Records are sorted by time. A
// trailing record on channel 0xFE stores the acquisition duration when it
// exceeds the last event; it counts toward the record count but not toward
// the channel count.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "antibunch/core.hpp"

namespace antibunch::io {

inline constexpr std::array<char, 4> kMagic{'P', 'T', 'S', 'T'};
inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderBytes = 19;
inline constexpr std::size_t kRecordBytes = 16;
inline constexpr ChannelId kDurationChannel = 0xFE;

enum class IoErrc {
  open_failed,
  read_failed,
  write_failed,
  bad_magic,
  bad_version,
  truncated,
  length_mismatch,
  unsorted,
  nonzero_reserved,
  bad_channel_count,
  invalid_stream,
};

inline const char* to_string(IoErrc c) {
  switch (c) {
    case IoErrc::open_failed: return "open_failed";
    case IoErrc::read_failed: return "read_failed";
    case IoErrc::write_failed: return "write_failed";
    case IoErrc::bad_magic: return "bad_magic";
    case IoErrc::bad_version: return "bad_version";
    case IoErrc::truncated: return "truncated";
    case IoErrc::length_mismatch: return "length_mismatch";
    case IoErrc::unsorted: return "unsorted";
    case IoErrc::nonzero_reserved: return "nonzero_reserved";
    case IoErrc::bad_channel_count: return "bad_channel_count";
    case IoErrc::invalid_stream: return "invalid_stream";
  }
  return "unknown";
}

class IoError : public std::runtime_error {
 public:
  IoError(IoErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  IoErrc code() const { return code_; }

 private:
  IoErrc code_;
};

using StreamMap = std::map<ChannelId, TimestampStream>;

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
void put_le(std::uint8_t* out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out[i] = static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i));
}

template <class T>
T get_le(const std::uint8_t* in) {
  if constexpr (std::endian::native == std::endian::little) {
    T v;
    std::memcpy(&v, in, sizeof(T));
    return v;
  } else {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(in[i]) << (8 * i);
    return static_cast<T>(v);
  }
}

}  // namespace detail

// Serializes streams into the PTST byte layout. Events from all channels are
// interleaved by time; ties keep ascending channel order.
inline std::vector<std::uint8_t> encode_timestamps(const StreamMap& streams) {
  Timestamp duration = 0;
  Timestamp last = 0;
  std::size_t total = 0;
  std::vector<const TimestampStream*> order;
  for (const auto& [ch, s] : streams) {
    if (ch == kDurationChannel) throw IoError(IoErrc::invalid_stream, "channel 0xFE is reserved");
    if (s.channel != ch) throw IoError(IoErrc::invalid_stream, "stream channel does not match its key");
    const auto report = validate_stream(s);
    if (!report.valid()) throw IoError(IoErrc::invalid_stream, "stream on channel " + std::to_string(ch) + " is invalid");
    duration = std::max(duration, s.duration);
    if (!s.events.empty()) last = std::max(last, s.events.back());
    total += s.events.size();
    order.push_back(&s);
  }
  const bool marker = duration > last || (total == 0 && duration > 0);
  const std::uint64_t records = total + (marker ? 1 : 0);

  std::vector<std::uint8_t> out(kHeaderBytes + records * kRecordBytes, 0);
  std::memcpy(out.data(), kMagic.data(), 4);
  detail::put_le<std::uint16_t>(out.data() + 4, kFormatVersion);
  detail::put_le<std::uint8_t>(out.data() + 6, static_cast<std::uint8_t>(streams.size()));
  detail::put_le<std::uint32_t>(out.data() + 7, 1u);
  detail::put_le<std::uint64_t>(out.data() + 11, records);

  std::vector<std::size_t> cursor(order.size(), 0);
  std::uint8_t* rec = out.data() + kHeaderBytes;
  for (std::size_t k = 0; k < total; ++k) {
    std::size_t pick = order.size();
    for (std::size_t s = 0; s < order.size(); ++s) {
      if (cursor[s] >= order[s]->events.size()) continue;
      if (pick == order.size() || order[s]->events[cursor[s]] < order[pick]->events[cursor[pick]]) pick = s;
    }
    detail::put_le<std::uint64_t>(rec, order[pick]->events[cursor[pick]]);
    rec[8] = order[pick]->channel;
    ++cursor[pick];
    rec += kRecordBytes;
  }
  if (marker) {
    detail::put_le<std::uint64_t>(rec, duration);
    rec[8] = kDurationChannel;
  }
  return out;
}

// Parses PTST bytes; every structural defect maps to its own error code.
inline StreamMap decode_timestamps(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) throw IoError(IoErrc::truncated, "file shorter than the header");
  if (std::memcmp(bytes.data(), kMagic.data(), 4) != 0) throw IoError(IoErrc::bad_magic, "not a PTST file");
  const auto version = detail::get_le<std::uint16_t>(bytes.data() + 4);
  if (version != kFormatVersion) throw IoError(IoErrc::bad_version, "unsupported version " + std::to_string(version));
  const auto channels = bytes[6];
  const auto resolution = detail::get_le<std::uint32_t>(bytes.data() + 7);
  const auto records = detail::get_le<std::uint64_t>(bytes.data() + 11);
  if (resolution == 0) throw IoError(IoErrc::bad_version, "zero resolution");
  const std::size_t body = bytes.size() - kHeaderBytes;
  if (body / kRecordBytes < records) throw IoError(IoErrc::truncated, "body shorter than the declared record count");
  if (body != records * kRecordBytes) throw IoError(IoErrc::length_mismatch, "body longer than the declared record count");

  // Two passes: count per channel, then fill.
  std::array<std::size_t, 256> per_channel{};
  const std::uint8_t* rec = bytes.data() + kHeaderBytes;
  std::uint64_t prev = 0;
  static constexpr std::uint8_t kZero[7]{};
  for (std::uint64_t i = 0; i < records; ++i, rec += kRecordBytes) {
    const auto t = detail::get_le<std::uint64_t>(rec);
    if (t < prev) throw IoError(IoErrc::unsorted, "record " + std::to_string(i) + " is out of order");
    prev = t;
    if (std::memcmp(rec + 9, kZero, 7) != 0) throw IoError(IoErrc::nonzero_reserved, "reserved bytes are not zero");
    ++per_channel[rec[8]];
  }
  if (per_channel[kDurationChannel] > 1) throw IoError(IoErrc::length_mismatch, "more than one duration record");
  std::size_t seen = 0;
  for (std::size_t c = 0; c < 256; ++c)
    if (c != kDurationChannel && per_channel[c] > 0) ++seen;
  if (seen > channels) throw IoError(IoErrc::bad_channel_count, "more channels than declared");

  StreamMap out;
  std::array<TimestampStream*, 256> slot{};
  for (std::size_t c = 0; c < 256; ++c) {
    if (c == kDurationChannel || per_channel[c] == 0) continue;
    auto& s = out[static_cast<ChannelId>(c)];
    s.channel = static_cast<ChannelId>(c);
    s.events.reserve(per_channel[c]);
    slot[c] = &s;
  }
  Timestamp duration = 0;
  rec = bytes.data() + kHeaderBytes;
  for (std::uint64_t i = 0; i < records; ++i, rec += kRecordBytes) {
    const Timestamp t = detail::get_le<std::uint64_t>(rec) * resolution;
    duration = std::max(duration, t);
    if (rec[8] != kDurationChannel) slot[rec[8]]->events.push_back(t);
  }
  for (auto& [ch, s] : out) {
    s.duration = duration;
    if (!validate_stream(s).valid()) throw IoError(IoErrc::unsorted, "decoded stream failed validation");
  }
  return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError(IoErrc::open_failed, "cannot open " + path);
  const std::streamsize size = in.tellg();
  if (size < 0) throw IoError(IoErrc::read_failed, "cannot size " + path);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  in.seekg(0);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), size))
    throw IoError(IoErrc::read_failed, "read failed on " + path);
  return bytes;
}

inline void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoErrc::open_failed, "cannot create " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError(IoErrc::write_failed, "write failed on " + path);
}

inline StreamMap read_timestamps(const std::string& path) { return decode_timestamps(read_file_bytes(path)); }

inline void write_timestamps(const StreamMap& streams, const std::string& path) {
  write_file_bytes(path, encode_timestamps(streams));
}

// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string digest(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) s[static_cast<std::size_t>(i)] = kHex[h & 0xF];
  return s;
}

inline std::string file_digest(const std::string& path) { return digest(read_file_bytes(path)); }

}  // namespace antibunch::io
