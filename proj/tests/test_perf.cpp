#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "antibunch/io/timestamp_file.hpp"

using namespace antibunch;

TEST(Perf, ParseTenMillionRecords) {
  constexpr std::size_t kEvents = 10'000'000;
  std::mt19937_64 rng(1);
  std::exponential_distribution<double> gap(1.0 / 5'000.0);
  io::StreamMap m;
  m[kArm0Channel].channel = kArm0Channel;
  m[kArm1Channel].channel = kArm1Channel;
  double t = 0.0;
  for (std::size_t i = 0; i < kEvents; ++i) {
    t += gap(rng);
    m[static_cast<ChannelId>(i & 1)].events.push_back(static_cast<Timestamp>(t));
  }
  for (auto& [ch, s] : m) s.duration = static_cast<Timestamp>(t) + 1;
  const auto bytes = io::encode_timestamps(m);

  const auto start = std::chrono::steady_clock::now();
  const auto back = io::decode_timestamps(bytes);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double mb_per_s = static_cast<double>(bytes.size()) / 1e6 / secs;
  RecordProperty("mb_per_s", std::to_string(mb_per_s));
  std::printf("parsed %zu bytes in %.3f s (%.0f MB/s)\n", bytes.size(), secs, mb_per_s);
  EXPECT_EQ(back.at(kArm0Channel).size() + back.at(kArm1Channel).size(), kEvents);
  EXPECT_GT(mb_per_s, 100.0);
}
