#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "antibunch/io/csv.hpp"
#include "antibunch/io/report.hpp"
#include "antibunch/io/timestamp_file.hpp"
#include "antibunch/sim.hpp"
#include "support/synthetic.hpp"

using namespace antibunch;
using namespace antibunch::io;

namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("antibunch_io_" + std::to_string(std::random_device{}()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

StreamMap sample_streams() {
  StreamMap m;
  m[kArm0Channel] = TimestampStream{kArm0Channel, {10, 20, 20, 35}, 1'000};
  m[kArm1Channel] = TimestampStream{kArm1Channel, {5, 20, 900}, 1'000};
  m[kSyncChannel] = TimestampStream{kSyncChannel, {0, 100, 200}, 1'000};
  return m;
}

void expect_code(IoErrc code, const std::vector<std::uint8_t>& bytes) {
  try {
    decode_timestamps(bytes);
    ADD_FAILURE() << "expected " << to_string(code);
  } catch (const IoError& e) {
    EXPECT_EQ(e.code(), code) << to_string(e.code());
  }
}

}  // namespace

TEST(Ptst, LayoutSizes) {
  const auto bytes = encode_timestamps(sample_streams());
  // 10 events plus the end-of-acquisition record.
  EXPECT_EQ(bytes.size(), kHeaderBytes + 11 * kRecordBytes);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "PTST");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[6], 3);
  EXPECT_EQ(bytes[11], 11);
}

TEST(Ptst, RecordsInterleavedByTime) {
  const auto bytes = encode_timestamps(sample_streams());
  std::vector<std::pair<std::uint64_t, int>> recs;
  for (std::size_t off = kHeaderBytes; off < bytes.size(); off += kRecordBytes) {
    std::uint64_t t = 0;
    for (int b = 7; b >= 0; --b) t = (t << 8) | bytes[off + static_cast<std::size_t>(b)];
    recs.emplace_back(t, bytes[off + 8]);
  }
  const std::vector<std::pair<std::uint64_t, int>> expected{{0, 255},  {5, 1},   {10, 0},  {20, 0},
                                                            {20, 0},   {20, 1},  {35, 0},  {100, 255},
                                                            {200, 255}, {900, 1}, {1000, 0xFE}};
  EXPECT_EQ(recs, expected);
}

TEST(Ptst, RoundTripInMemory) {
  const auto in = sample_streams();
  const auto out = decode_timestamps(encode_timestamps(in));
  ASSERT_EQ(out.size(), in.size());
  for (const auto& [ch, s] : in) {
    EXPECT_EQ(out.at(ch).events, s.events);
    EXPECT_EQ(out.at(ch).duration, s.duration);
    EXPECT_EQ(out.at(ch).channel, ch);
  }
}

TEST(Ptst, RoundTripSimulatedFile) {
  TempDir dir;
  sim::EmitterModel em;
  sim::ExcitationConfig ex;
  const auto emission = sim::generate_emission(em, ex, 10 * kPsPerMs, 1);
  const auto hbt = sim::detect_hbt(emission, sim::DetectorModel{}, 2);
  StreamMap in{{kArm0Channel, hbt.arm0}, {kArm1Channel, hbt.arm1}, {kSyncChannel, hbt.sync}};
  write_timestamps(in, dir.file("a.ptst"));
  const auto out = read_timestamps(dir.file("a.ptst"));
  for (const auto& [ch, s] : in) {
    EXPECT_EQ(out.at(ch).events, s.events);
    EXPECT_EQ(out.at(ch).duration, s.duration);
  }
  write_timestamps(out, dir.file("b.ptst"));
  EXPECT_EQ(file_digest(dir.file("a.ptst")), file_digest(dir.file("b.ptst")));
}

TEST(Ptst, EmptyFileIsHeaderOnly) {
  const auto bytes = encode_timestamps(StreamMap{});
  EXPECT_EQ(bytes.size(), kHeaderBytes);
  EXPECT_TRUE(decode_timestamps(bytes).empty());
}

TEST(Ptst, ResolutionScalesTimestamps) {
  auto bytes = encode_timestamps(StreamMap{{kArm0Channel, TimestampStream{kArm0Channel, {3, 7}, 7}}});
  bytes[7] = 4;
  const auto out = decode_timestamps(bytes);
  EXPECT_EQ(out.at(kArm0Channel).events, (std::vector<Timestamp>{12, 28}));
}

TEST(Ptst, BadMagic) {
  auto bytes = encode_timestamps(sample_streams());
  bytes[0] = 'X';
  expect_code(IoErrc::bad_magic, bytes);
}

TEST(Ptst, BadVersion) {
  auto bytes = encode_timestamps(sample_streams());
  bytes[4] = 2;
  expect_code(IoErrc::bad_version, bytes);
}

TEST(Ptst, TruncatedBody) {
  auto bytes = encode_timestamps(sample_streams());
  bytes.resize(bytes.size() - 3);
  expect_code(IoErrc::truncated, bytes);
  expect_code(IoErrc::truncated, std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 10));
}

TEST(Ptst, TrailingBytes) {
  auto bytes = encode_timestamps(sample_streams());
  bytes.resize(bytes.size() + kRecordBytes, 0);
  expect_code(IoErrc::length_mismatch, bytes);
}

TEST(Ptst, UnsortedRecords) {
  auto bytes = encode_timestamps(sample_streams());
  // Swap the first two records.
  std::swap_ranges(bytes.begin() + kHeaderBytes, bytes.begin() + kHeaderBytes + kRecordBytes,
                   bytes.begin() + kHeaderBytes + kRecordBytes);
  expect_code(IoErrc::unsorted, bytes);
}

TEST(Ptst, NonzeroReserved) {
  auto bytes = encode_timestamps(sample_streams());
  bytes[kHeaderBytes + 12] = 1;
  expect_code(IoErrc::nonzero_reserved, bytes);
}

TEST(Ptst, ChannelCountExceeded) {
  auto bytes = encode_timestamps(sample_streams());
  bytes[6] = 2;
  expect_code(IoErrc::bad_channel_count, bytes);
}

TEST(Ptst, EncoderRejectsInvalidStreams) {
  StreamMap m{{kArm0Channel, TimestampStream{kArm0Channel, {5, 1}, 10}}};
  EXPECT_THROW(encode_timestamps(m), IoError);
  StreamMap wrong{{kArm0Channel, TimestampStream{kArm1Channel, {1}, 10}}};
  EXPECT_THROW(encode_timestamps(wrong), IoError);
}

TEST(Ptst, MissingFile) {
  try {
    read_timestamps("/nonexistent/dir/file.ptst");
    ADD_FAILURE();
  } catch (const IoError& e) {
    EXPECT_EQ(e.code(), IoErrc::open_failed);
  }
}

TEST(Digest, KnownFnvValues) {
  EXPECT_EQ(digest({}), "cbf29ce484222325");
  const std::vector<std::uint8_t> a{'a'};
  EXPECT_EQ(digest(a), "af63dc4c8601ec8c");
  const std::string foobar = "foobar";
  EXPECT_EQ(digest(std::vector<std::uint8_t>(foobar.begin(), foobar.end())), "85944171f73967e8");
}

TEST(Digest, SameStreamsSameDigest) {
  EXPECT_EQ(digest(encode_timestamps(sample_streams())), digest(encode_timestamps(sample_streams())));
  auto other = sample_streams();
  other[kArm0Channel].events.back() = 36;
  EXPECT_NE(digest(encode_timestamps(sample_streams())), digest(encode_timestamps(other)));
}

TEST(Csv, ThreeBinHistogramHasFourLines) {
  CoincidenceHistogram h;
  h.bin_width = 1'000;
  h.window = 1'500;
  h.counts = {4, 0, 7};
  EXPECT_EQ(histogram_csv(h), "tau_ns,count\n-1.000,4\n0.000,0\n1.000,7\n");
}

TEST(Csv, NormalizedAddsSigma) {
  CoincidenceHistogram h;
  h.bin_width = 1'000;
  h.window = 1'000;
  h.counts = {4, 16};
  const auto g = fit::detail::normalized_bins(h, 8.0, 0.0);
  EXPECT_EQ(histogram_csv(g), "tau_ns,g2,sigma\n-0.500,0.5,0.25\n0.500,2,0.5\n");
}

TEST(Csv, DecayAndTrace) {
  DecayHistogram d;
  d.bin_width = 500;
  d.period = 1'000;
  d.counts = {9, 3};
  EXPECT_EQ(histogram_csv(d), "delay_ns,count\n0.250,9\n0.750,3\n");
  IntensityTrace t;
  t.counts = {1, 2};
  EXPECT_EQ(histogram_csv(t), "time_ms,count\n0.500,1\n1.500,2\n");
}

TEST(Csv, EmptyHistogramRejected) {
  EXPECT_THROW(histogram_csv(CoincidenceHistogram{}), std::invalid_argument);
  EXPECT_THROW(histogram_csv(IntensityTrace{}), std::invalid_argument);
}

TEST(Csv, CoincidenceReimport) {
  TempDir dir;
  const auto h = antibunch::testing::synthetic_cw_histogram(3);
  export_histogram_csv(h, dir.file("h.csv"));
  const auto back = coincidence_from_csv(read_csv(dir.file("h.csv")));
  EXPECT_EQ(back.counts, h.counts);
  EXPECT_EQ(back.bin_width, h.bin_width);
  EXPECT_EQ(back.window, h.window);
}

TEST(Csv, DecayAndTraceReimport) {
  DecayHistogram d;
  d.bin_width = 500;
  d.period = 100'000;
  d.counts.assign(200, 3);
  d.counts[7] = 1'000;
  const auto dd = decay_from_csv(parse_csv(histogram_csv(d)));
  EXPECT_EQ(dd.counts, d.counts);
  EXPECT_EQ(dd.period, d.period);
  IntensityTrace t;
  t.bin_width = 10 * kPsPerMs;
  t.counts = {5, 0, 9, 2};
  const auto tt = trace_from_csv(parse_csv(histogram_csv(t)));
  EXPECT_EQ(tt.counts, t.counts);
  EXPECT_EQ(tt.bin_width, t.bin_width);
}

TEST(Csv, MalformedRejected) {
  EXPECT_THROW(parse_csv(""), std::invalid_argument);
  EXPECT_THROW(parse_csv("a,b\n1,x\n"), std::invalid_argument);
  EXPECT_THROW(parse_csv("a,b\n1\n"), std::invalid_argument);
  EXPECT_THROW(coincidence_from_csv(parse_csv("tau_ns,count\n0.5,1.5\n1.5,2\n")), std::invalid_argument);
}

TEST(Report, CwFitFields) {
  const auto h = antibunch::testing::synthetic_cw_histogram(4);
  const auto fit = fit::fit_g2_cw(h);
  const auto j = to_json(fit);
  for (const char* k : {"a", "b", "tau0_ns", "tau_x_ns", "fit"}) EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_DOUBLE_EQ(j["tau_x_ns"]["value"].get<double>(), fit.params.tau_x);
  EXPECT_TRUE(j["fit"]["converged"].get<bool>());
}

TEST(Report, PwFitListsEveryPeak) {
  const auto fit = fit::fit_g2_pw(antibunch::testing::synthetic_pw_histogram(5), 100.0, 5);
  const auto j = to_json(fit);
  ASSERT_EQ(j["peaks"].size(), 11u);
  EXPECT_EQ(j["peaks"][0]["n"].get<int>(), -5);
  EXPECT_EQ(j["peaks"][10]["n"].get<int>(), 5);
  EXPECT_DOUBLE_EQ(j["period_ns"].get<double>(), 100.0);
}

TEST(Report, MultiExpFields) {
  const auto truth = antibunch::testing::make_multiexp(2.0, {{1000.0, 4.7}});
  const auto m = fit::fit_multiexp(antibunch::testing::synthetic_decay(6, truth), 1);
  const auto j = to_json(m);
  EXPECT_EQ(j["components"].size(), 1u);
  EXPECT_FALSE(j["degenerate"].get<bool>());
  EXPECT_FALSE(j.contains("advice"));
  EXPECT_TRUE(j["average_lifetime_ns"].is_object());
}

TEST(Report, BlinkingDurationsOptional) {
  blink::BlinkingResult r;
  r.on_durations = {1.0, 2.0};
  EXPECT_TRUE(to_json(r).contains("on_durations_ms"));
  EXPECT_FALSE(to_json(r, false).contains("on_durations_ms"));
  EXPECT_TRUE(to_json(r)["on"]["alpha"].is_null());
}
