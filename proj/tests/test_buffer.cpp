#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cacto/buffer.hpp"

using namespace cacto;

namespace {

// Sample tagged with a sequence number in V_bar.
TOSample tagged(int seq, int n = 2, int m = 1) {
  TOSample s;
  s.state.x = VectorXd::Constant(n, 0.5 * seq);
  s.state.t = seq % 7;
  s.u = VectorXd::Constant(m, -seq);
  s.V_bar = seq;
  s.V_bar_x = VectorXd::LinSpaced(n, seq, seq + 1);
  s.state_plus_K.x = VectorXd::Constant(n, seq + 0.25);
  s.state_plus_K.t = s.state.t + 3;
  return s;
}

std::vector<TOSample> tagged_range(int from, int to) {
  std::vector<TOSample> out;
  for (int i = from; i < to; ++i) out.push_back(tagged(i));
  return out;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST(ReplayBuffer, PushBelowCapacity) {
  ReplayBuffer b(10);
  EXPECT_EQ(b.push_many(tagged_range(0, 5)), 5u);
  EXPECT_EQ(b.size(), 5u);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(b.at(i).V_bar, i);
}

TEST(ReplayBuffer, OverflowEvictsOldestFirst) {
  ReplayBuffer b(10);
  b.push_many(tagged_range(0, 15));
  ASSERT_EQ(b.size(), 10u);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(b.at(i).V_bar, i + 5);
  b.push_many(tagged_range(15, 18));
  ASSERT_EQ(b.size(), 10u);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(b.at(i).V_bar, i + 8);
}

TEST(ReplayBuffer, SizeNeverExceedsCapacity) {
  ReplayBuffer b(7);
  int seq = 0;
  for (int round = 0; round < 20; ++round) {
    b.push_many(tagged_range(seq, seq + round));
    seq += round;
    ASSERT_LE(b.size(), 7u);
    for (std::size_t i = 0; i < b.size(); ++i) {
      EXPECT_EQ(b.at(i).V_bar, seq - static_cast<int>(b.size()) + static_cast<int>(i));
    }
  }
}

TEST(ReplayBuffer, EmptyPushIsNoop) {
  ReplayBuffer b(4);
  EXPECT_EQ(b.push_many({}), 0u);
  EXPECT_TRUE(b.empty());
}

TEST(ReplayBuffer, Errors) {
  EXPECT_THROW(ReplayBuffer(0), std::invalid_argument);
  ReplayBuffer b(4);
  std::mt19937_64 rng(1);
  EXPECT_THROW(b.sample_minibatch(3, rng), std::invalid_argument);
  EXPECT_THROW(b.at(0), std::out_of_range);
  TOSample bad = tagged(1);
  bad.V_bar = std::nan("");
  EXPECT_THROW(b.push_many({&bad, 1}), std::invalid_argument);
}

TEST(ReplayBuffer, SingleSampleBatchIsCopies) {
  ReplayBuffer b(4);
  b.push_many(tagged_range(3, 4));
  std::mt19937_64 rng(2);
  const auto batch = b.sample_minibatch(4, rng);
  ASSERT_EQ(batch.size(), 4u);
  for (const TOSample& s : batch) {
    EXPECT_EQ(s.V_bar, 3);
    EXPECT_EQ(s.state.x, tagged(3).state.x);
  }
}

TEST(ReplayBuffer, SamplingDeterministicPerRngState) {
  ReplayBuffer b(100);
  b.push_many(tagged_range(0, 50));
  std::mt19937_64 r1(42), r2(42);
  const auto a = b.sample_minibatch(64, r1);
  const auto c = b.sample_minibatch(64, r2);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].V_bar, c[i].V_bar);
}

TEST(ReplayBuffer, SamplingIsUniform) {
  ReplayBuffer b(10);
  b.push_many(tagged_range(0, 10));
  std::mt19937_64 rng(7);
  const int draws = 100000;
  std::vector<int> counts(10, 0);
  for (const TOSample& s : b.sample_minibatch(draws, rng)) ++counts[static_cast<int>(s.V_bar)];
  // binomial 3-sigma band per index
  const double sigma = std::sqrt(draws * 0.1 * 0.9);
  double chi2 = 0.0;
  for (int c : counts) {
    EXPECT_LT(std::abs(c - 0.1 * draws), 3 * sigma);
    chi2 += (c - 0.1 * draws) * (c - 0.1 * draws) / (0.1 * draws);
  }
  // 9 dof, 0.999 quantile
  EXPECT_LT(chi2, 27.88);
}

TEST(ReplayBuffer, SamplingAfterWrapCoversCurrentContents) {
  ReplayBuffer b(5);
  b.push_many(tagged_range(0, 12));
  std::mt19937_64 rng(3);
  for (const TOSample& s : b.sample_minibatch(500, rng)) {
    EXPECT_GE(s.V_bar, 7);
    EXPECT_LE(s.V_bar, 11);
  }
}

TEST(BufferFile, RoundTripIsBitExact) {
  ReplayBuffer b(6);
  b.push_many(tagged_range(0, 9));  // wrapped
  std::vector<TOSample> extra{tagged(100)};
  extra[0].V_bar = 1.0 / 3.0;
  extra[0].state.x[0] = -0.0;
  b.push_many(extra);
  const std::string path = temp_path("cacto_buffer_roundtrip.bin");
  dump_buffer(b, path, "point_mass", 2, 1, 5);
  BufferHeader h;
  const ReplayBuffer r = restore_buffer(path, &h);
  EXPECT_EQ(h.model, "point_mass");
  EXPECT_EQ(h.n, 2u);
  EXPECT_EQ(h.m, 1u);
  EXPECT_EQ(h.K, 5u);
  EXPECT_EQ(h.count, 6u);
  ASSERT_EQ(r.size(), b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    const TOSample &x = b.at(i), &y = r.at(i);
    EXPECT_EQ(y.state.x, x.state.x);
    EXPECT_EQ(std::signbit(y.state.x[0]), std::signbit(x.state.x[0]));
    EXPECT_EQ(y.state.t, x.state.t);
    EXPECT_EQ(y.u, x.u);
    EXPECT_EQ(y.V_bar, x.V_bar);
    EXPECT_EQ(y.V_bar_x, x.V_bar_x);
    EXPECT_EQ(y.state_plus_K.x, x.state_plus_K.x);
    EXPECT_EQ(y.state_plus_K.t, x.state_plus_K.t);
  }
  std::remove(path.c_str());
}

TEST(BufferFile, LayoutIsLittleEndianFixedWidth) {
  ReplayBuffer b(4);
  b.push_many(tagged_range(1, 3));
  const std::string path = temp_path("cacto_buffer_layout.bin");
  dump_buffer(b, path, "toy1d", 2, 1, 60);
  const auto size = std::filesystem::file_size(path);
  // header 8 + 16 + 3*4 + 8; record (3n + m + 1) doubles + 2 u32
  EXPECT_EQ(size, 44u + 2u * ((3 * 2 + 1 + 1) * 8u + 8u));
  std::ifstream in(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "CACTOBUF");
  EXPECT_EQ(bytes[24], 2);  // n, low byte first
  EXPECT_EQ(bytes[25], 0);
  EXPECT_EQ(bytes[32], 60);  // K
  EXPECT_EQ(bytes[36], 2);   // count
  std::remove(path.c_str());
}

TEST(BufferFile, RejectsBadFiles) {
  const std::string path = temp_path("cacto_buffer_bad.bin");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTABUFFERFILE";
  }
  EXPECT_THROW(restore_buffer(path, nullptr), std::runtime_error);
  ReplayBuffer b(4);
  b.push_many(tagged_range(0, 3));
  dump_buffer(b, path, "toy1d", 2, 1, 5);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
  EXPECT_THROW(restore_buffer(path, nullptr), std::runtime_error);
  EXPECT_THROW(restore_buffer(temp_path("cacto_no_such_file.bin"), nullptr), std::runtime_error);
  EXPECT_THROW(dump_buffer(b, path, "toy1d", 3, 1, 5), std::invalid_argument);
  std::remove(path.c_str());
}

TEST(BufferFile, RestoreRespectsCapacity) {
  ReplayBuffer b(20);
  b.push_many(tagged_range(0, 20));
  const std::string path = temp_path("cacto_buffer_cap.bin");
  dump_buffer(b, path, "toy1d", 2, 1, 5);
  const ReplayBuffer r = restore_buffer(path, nullptr, 8);
  ASSERT_EQ(r.size(), 8u);
  EXPECT_EQ(r.at(0).V_bar, 12);
  std::remove(path.c_str());
}
