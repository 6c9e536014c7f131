#include "mfg_lqg/rng.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "mfg_lqg/parallel.hpp"

namespace mfg_lqg {
namespace {

// Known-answer vectors of the reference Random123 implementation.
TEST(Philox, KnownAnswerZero) {
  const auto out = Philox4x32::generate({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out[0], 0x6627e8d5u);
  EXPECT_EQ(out[1], 0xe169c58du);
  EXPECT_EQ(out[2], 0xbc57ac4cu);
  EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerAllOnes) {
  const std::uint32_t f = 0xffffffffu;
  const auto out = Philox4x32::generate({f, f, f, f}, {f, f});
  EXPECT_EQ(out[0], 0x408f276du);
  EXPECT_EQ(out[1], 0x41c83b0eu);
  EXPECT_EQ(out[2], 0xa20bc7c6u);
  EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(NoiseStream, AddressedNotSequential) {
  const NoiseStream a(42), b(42);
  double x[5], y[5], z[3];
  a.normals(7, 3, 11, x, 5);
  b.normals(1, 1, 1, z, 3);  // unrelated draw in between
  b.normals(7, 3, 11, y, 5);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(x[i], y[i]);

  // A shorter request is a prefix of a longer one.
  a.normals(7, 3, 11, z, 3);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(z[i], x[i]);
}

TEST(NoiseStream, SeedsAndAddressesDiffer) {
  double x, y;
  NoiseStream(1).normals(0, 0, 0, &x, 1);
  NoiseStream(2).normals(0, 0, 0, &y, 1);
  EXPECT_NE(x, y);
  NoiseStream(1ull << 40).normals(0, 0, 0, &y, 1);
  EXPECT_NE(x, y);
  NoiseStream(1).normals(0, 1, 0, &y, 1);
  EXPECT_NE(x, y);
}

TEST(NoiseStream, MomentsAreStandardNormal) {
  const NoiseStream s(2024);
  const int count = 200000;
  std::vector<double> v(count);
  for (int path = 0; path < count / 100; ++path) {
    s.normals(0, 0, path, v.data() + 100 * path, 100);
  }
  double mean = 0, var = 0, kurt = 0;
  for (double x : v) mean += x;
  mean /= count;
  for (double x : v) {
    var += (x - mean) * (x - mean);
    kurt += std::pow(x - mean, 4);
  }
  var /= count;
  kurt /= count * var * var;
  EXPECT_NEAR(mean, 0.0, 4.0 / std::sqrt(count));
  EXPECT_NEAR(var, 1.0, 0.02);
  EXPECT_NEAR(kurt, 3.0, 0.1);
}

TEST(Parallel, EveryIndexOnceAndThreadIndependent) {
  for (int threads : {1, 2, 5}) {
    std::vector<int> hits(37, 0);
    parallel_for(37, threads, [&](int i) { hits[i] += i; });
    for (int i = 0; i < 37; ++i) EXPECT_EQ(hits[i], i);
  }
}

TEST(Parallel, RethrowsLowestFailingIndex) {
  for (int threads : {1, 3}) {
    try {
      parallel_for(20, threads, [](int i) {
        if (i == 7 || i == 13) throw std::runtime_error(std::to_string(i));
      });
      FAIL() << "expected an exception";
    } catch (const std::runtime_error& e) {
      EXPECT_STREQ(e.what(), "7");
    }
  }
}

TEST(Parallel, ResolveThreads) {
  EXPECT_EQ(resolve_threads(3), 3);
  EXPECT_GE(resolve_threads(0), 1);
}

}  // namespace
}  // namespace mfg_lqg
