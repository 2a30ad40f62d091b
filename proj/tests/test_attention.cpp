#include <gtest/gtest.h>

#include <filesystem>

#include "golden_io.hpp"
#include "omt/attention.hpp"
#include "omt/rope.hpp"

using namespace omt;
using namespace omt::attention;

TEST(NaiveAttention, SingleTokenReturnsValue) {
  Rng rng(1);
  const auto in = random_input(1, 8, 2, false, rng);
  const auto out = naive_attention(in);
  for (std::size_t h = 0; h < 2; ++h) EXPECT_EQ(out[h], in.v[h]);
}

TEST(NaiveAttention, IdenticalKeysAverageValues) {
  Rng rng(2);
  auto in = random_input(10, 4, 1, false, rng);
  for (std::size_t j = 1; j < 10; ++j) {
    for (std::size_t c = 0; c < 4; ++c) in.k[0](j, c) = in.k[0](0, c);
  }
  const auto out = naive_attention(in);
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = 0.0;
    for (std::size_t j = 0; j < 10; ++j) mean += in.v[0](j, c);
    mean /= 10.0;
    for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(out[0](i, c), mean, 1e-15);
  }
}

TEST(NaiveAttention, MatchesGoldenFile) {
  const auto path = std::filesystem::path(OMT_GOLDEN_DIR) / "naive_seq64_dim8_seed42.f64";
  const auto golden = omt::io::read_golden(path);
  ASSERT_EQ(golden.meta.at("seed").get<int>(), 42);
  Rng rng = substream(42, "ring-check");
  const auto out = naive_attention(random_input(64, 8, 1, false, rng));
  ASSERT_EQ(golden.matrix.rows, 64u);
  ASSERT_EQ(golden.matrix.cols, 8u);
  EXPECT_LE(max_abs_diff(out[0], golden.matrix), 1e-14);
}

TEST(NaiveAttention, RejectsBadInput) {
  Rng rng(3);
  auto in = random_input(4, 4, 1, false, rng);
  in.q[0](1, 1) = std::nan("");
  EXPECT_THROW(naive_attention(in), InputError);
  auto ragged = random_input(4, 4, 1, false, rng);
  ragged.k[0] = Matrix(3, 4);
  EXPECT_THROW(naive_attention(ragged), InputError);
}

TEST(RingAttention, SingleWorkerEqualsNaive) {
  Rng rng(4);
  const auto in = random_input(37, 8, 2, false, rng);
  const auto r = ring_attention(in, {1, 37});
  EXPECT_LE(max_abs_error(r.output, naive_attention(in)), 1e-12);
  EXPECT_TRUE(r.messages.empty());
}

TEST(RingAttention, FourWorkersSeed42) {
  Rng rng(42);
  const auto in = random_input(64, 8, 1, false, rng);
  const auto r = ring_attention(in, {4, 16});
  EXPECT_LE(max_abs_error(r.output, naive_attention(in)), 1e-9);
  EXPECT_EQ(r.messages.size(), 12u);
}

TEST(RingAttention, CausalFirstRowIsFirstValue) {
  Rng rng(9);
  const auto in = random_input(32, 8, 1, true, rng);
  const auto r = ring_attention(in, {4, 8});
  EXPECT_LE(max_abs_error(r.output, naive_attention(in)), 1e-9);
  for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(r.output[0](0, c), in.v[0](0, c));
}

TEST(RingAttention, ShortLastBlockAndIdleWorkers) {
  Rng rng(10);
  const auto in = random_input(50, 4, 1, true, rng);
  // 8 workers x 7 = 56 slots: the last block holds 1 row, worker 7 holds none.
  const auto r = ring_attention(in, {8, 7});
  EXPECT_LE(max_abs_error(r.output, naive_attention(in)), 1e-9);
  EXPECT_EQ(r.messages.size(), 56u);
}

TEST(RingAttention, ConfigAndInputErrors) {
  Rng rng(11);
  auto in = random_input(64, 8, 1, false, rng);
  EXPECT_THROW(ring_attention(in, {3, 16}), ConfigError);
  EXPECT_THROW(ring_attention(in, {0, 16}), ConfigError);
  in.v[0](5, 5) = std::nan("");
  EXPECT_THROW(ring_attention(in, {4, 16}), InputError);
}

TEST(RingAttention, MessageLogFollowsRing) {
  Rng rng(12);
  const auto r = ring_attention(random_input(20, 4, 1, false, rng), {5, 4});
  ASSERT_EQ(r.messages.size(), 20u);
  for (const auto& m : r.messages) {
    EXPECT_EQ(m.receiver, (m.sender + 1) % 5);
    EXPECT_LT(m.round, 4u);
    // Worker w holds block (w - round) mod n at the start of each round.
    EXPECT_EQ(m.block, (m.sender + 5 - m.round % 5) % 5);
  }
}

TEST(RingAttention, StartOffsetDoesNotMatter) {
  Rng rng(13);
  const auto in = random_input(61, 8, 2, true, rng);
  const auto base = ring_attention(in, {6, 11});
  for (std::size_t off = 1; off < 6; ++off) {
    RingConfig cfg{6, 11, off};
    EXPECT_LE(max_abs_error(ring_attention(in, cfg).output, base.output), 1e-12) << "offset " << off;
  }
}

TEST(RingAttention, ParallelModeIsBitwiseIdentical) {
  Rng rng(14);
  const auto in = random_input(90, 16, 2, false, rng);
  RingConfig seq{5, 18};
  RingConfig par = seq;
  par.parallel = true;
  const auto a = ring_attention(in, seq), b = ring_attention(in, par);
  EXPECT_EQ(a.output, b.output);
  EXPECT_EQ(a.messages, b.messages);
}

TEST(RingAttention, RecoveredWeightsSumToOne) {
  Rng rng(15);
  for (bool causal : {false, true}) {
    auto in = random_input(24, 4, 1, causal, rng);
    in.v[0] = Matrix::identity(24);
    const auto w = ring_attention(in, {4, 6}).output[0];
    for (std::size_t i = 0; i < 24; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 24; ++j) {
        s += w(i, j);
        if (causal && j > i) {
          EXPECT_EQ(w(i, j), 0.0);
        }
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(RingAttention, RandomizedEquivalence) {
  Rng rng(16);
  for (int trial = 0; trial < 60; ++trial) {
    const auto seq = static_cast<std::size_t>(rng.uniform_int(1, 200));
    const auto workers = static_cast<std::size_t>(rng.uniform_int(1, 8));
    const std::size_t dims[] = {4, 8, 16};
    const std::size_t dim = dims[rng.uniform_int(0, 2)];
    const bool causal = rng.uniform() < 0.5;
    const auto in = random_input(seq, dim, 1, causal, rng);
    const std::size_t block = (seq + workers - 1) / workers;
    ASSERT_LE(max_abs_error(ring_attention(in, {workers, block}).output, naive_attention(in)), 1e-9);
  }
}

// ----------------------------------------------------------------------- RoPE

TEST(Rope, PositionZeroIsIdentity) {
  Rng rng(20);
  const Matrix x = Matrix::random(5, 16, rng);
  const std::vector<std::int64_t> pos(5, 0);
  EXPECT_EQ(apply_rope(x, pos, {5.0e7, 16}), x);
}

TEST(Rope, PreservesRowNorms) {
  Rng rng(21);
  const Matrix x = Matrix::random(50, 32, rng);
  std::vector<std::int64_t> pos;
  for (int i = 0; i < 50; ++i) pos.push_back(rng.uniform_int(0, 524288));
  const Matrix y = apply_rope(x, pos, {5.0e7, 32});
  for (std::size_t r = 0; r < 50; ++r) {
    EXPECT_NEAR(std::sqrt(dot(y.row(r), y.row(r))), std::sqrt(dot(x.row(r), x.row(r))), 1e-12);
  }
}

TEST(Rope, DotProductDependsOnlyOnOffset) {
  Rng rng(22);
  const RopeConfig cfg{5.0e7, 16};
  for (int t = 0; t < 200; ++t) {
    const Matrix q = Matrix::random(1, 16, rng), k = Matrix::random(1, 16, rng);
    const std::int64_t m = rng.uniform_int(0, 100000), n = rng.uniform_int(0, 100000), s = rng.uniform_int(0, 100000);
    const std::vector<std::int64_t> pm{m}, pn{n}, pms{m + s}, pns{n + s};
    const double a = dot(apply_rope(q, pm, cfg).row(0), apply_rope(k, pn, cfg).row(0));
    const double b = dot(apply_rope(q, pms, cfg).row(0), apply_rope(k, pns, cfg).row(0));
    ASSERT_NEAR(a, b, 1e-9);
  }
}

TEST(Rope, KnownRotation) {
  // theta^(-2i/d) with d = 4: frequencies 1 and theta^-0.5.
  Matrix x(1, 4);
  x(0, 0) = 1.0;
  x(0, 2) = 1.0;
  const std::vector<std::int64_t> pos{3};
  const Matrix y = apply_rope(x, pos, {100.0, 4});
  EXPECT_NEAR(y(0, 0), std::cos(3.0), 1e-15);
  EXPECT_NEAR(y(0, 1), std::sin(3.0), 1e-15);
  EXPECT_NEAR(y(0, 2), std::cos(0.3), 1e-15);
  EXPECT_NEAR(y(0, 3), std::sin(0.3), 1e-15);
}

TEST(Rope, Errors) {
  const Matrix x(2, 5);
  const std::vector<std::int64_t> pos{0, 1};
  EXPECT_THROW(apply_rope(x, pos, {5.0e7, 5}), ConfigError);
  const Matrix y(2, 4);
  const std::vector<std::int64_t> neg{0, -1};
  EXPECT_THROW(apply_rope(y, neg, {5.0e7, 4}), InputError);
}
