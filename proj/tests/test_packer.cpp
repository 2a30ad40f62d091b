#include <gtest/gtest.h>

#include "omt/packer.hpp"
#include "omt/rng.hpp"
#include "oracles.hpp"

using namespace omt;
using namespace omt::packing;

namespace {

Sample make_sample(std::string id, std::size_t len, TokenId fill = 100) {
  return {std::move(id), std::vector<TokenId>(len, fill)};
}

std::vector<Sample> from_lengths(const std::vector<std::size_t>& lengths) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    Sample s{"s" + std::to_string(i), {}};
    for (std::size_t k = 0; k < lengths[i]; ++k) s.token_ids.push_back(static_cast<TokenId>(16 + (i + k) % 1000));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST(Pack, GreedyExample) {
  const auto r = pack(from_lengths({1500, 2000, 900}), 4096, OversizePolicy::reject);
  ASSERT_EQ(r.packs.size(), 2u);
  ASSERT_EQ(r.packs[0].members.size(), 2u);
  EXPECT_EQ(r.packs[0].members[0].length, 1500u);
  EXPECT_EQ(r.packs[0].members[1].length, 2000u);
  EXPECT_EQ(r.packs[0].used(), 3502u);
  EXPECT_EQ(r.packs[0].boundaries(), (std::vector<std::size_t>{0, 1501}));
  ASSERT_EQ(r.packs[1].members.size(), 1u);
  EXPECT_EQ(r.packs[1].members[0].length, 900u);
  EXPECT_TRUE(r.rejections.empty());
}

TEST(Pack, ExactFit) {
  const auto r = pack({make_sample("a", 4095)}, 4096, OversizePolicy::reject);
  ASSERT_EQ(r.packs.size(), 1u);
  EXPECT_DOUBLE_EQ(r.packs[0].fill_ratio(), 1.0);
}

TEST(Pack, EmptyStream) {
  EXPECT_TRUE(pack({}, 4096, OversizePolicy::reject).packs.empty());
}

TEST(Pack, OversizePolicies) {
  const std::vector<Sample> in{make_sample("small", 10), make_sample("huge", 5000), make_sample("tail", 20)};
  const auto rejected = pack(in, 4096, OversizePolicy::reject);
  ASSERT_EQ(rejected.rejections.size(), 1u);
  EXPECT_EQ(rejected.rejections[0].id, "huge");
  EXPECT_EQ(rejected.rejections[0].length, 5000u);
  ASSERT_EQ(rejected.packs.size(), 1u);
  EXPECT_EQ(rejected.packs[0].members.size(), 2u);

  const auto truncated = pack(in, 4096, OversizePolicy::truncate);
  EXPECT_TRUE(truncated.rejections.empty());
  ASSERT_EQ(truncated.packs.size(), 3u);
  EXPECT_EQ(truncated.packs[1].members[0].length, 4095u);
  EXPECT_EQ(truncated.packs[1].used(), 4096u);
  EXPECT_EQ(truncated.packs[1].tokens.back(), special::kSeparator);
}

TEST(Pack, EmptySampleAndTinyTarget) {
  EXPECT_THROW(pack({make_sample("e", 0)}, 16, OversizePolicy::reject), InputError);
  EXPECT_THROW(Packer(1, OversizePolicy::reject), ConfigError);
  EXPECT_THROW(parse_policy("drop"), InputError);
}

TEST(Pack, TokensLayout) {
  const auto r = pack({make_sample("a", 2, 20), make_sample("b", 3, 30)}, 16, OversizePolicy::reject);
  ASSERT_EQ(r.packs.size(), 1u);
  EXPECT_EQ(r.packs[0].tokens, (std::vector<TokenId>{20, 20, 3, 30, 30, 30, 3}));
}

TEST(ScheduleStage, DefaultLadder) {
  EXPECT_EQ(schedule_stage(0), 4096u);
  EXPECT_EQ(schedule_stage(1), 32768u);
  EXPECT_EQ(schedule_stage(2), 131072u);
  EXPECT_EQ(schedule_stage(3), 524288u);
  EXPECT_THROW(schedule_stage(4), InputError);
  EXPECT_THROW(schedule_stage(0, ContextSchedule{{4096, 4096}}), ConfigError);
}

TEST(PackProperties, MatchesGreedyOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t target = static_cast<std::size_t>(rng.uniform_int(2, 300));
    std::vector<std::size_t> lengths;
    const auto n = rng.uniform_int(0, 60);
    for (std::int64_t i = 0; i < n; ++i) lengths.push_back(static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(target) + 20)));
    const auto r = pack(from_lengths(lengths), target, OversizePolicy::reject);
    const auto shape = oracle::greedy_pack_lengths(lengths, target);
    ASSERT_EQ(r.packs.size(), shape.packs.size());

    std::vector<std::string> packed_ids;
    for (std::size_t p = 0; p < r.packs.size(); ++p) {
      const auto& pk = r.packs[p];
      ASSERT_LE(pk.used(), target);
      ASSERT_GT(pk.fill_ratio(), 0.0);
      ASSERT_LE(pk.fill_ratio(), 1.0);
      ASSERT_EQ(pk.members.size(), shape.packs[p].size());
      std::size_t expected_offset = 0;
      for (std::size_t m = 0; m < pk.members.size(); ++m) {
        ASSERT_EQ(pk.members[m].length, shape.packs[p][m]);
        ASSERT_EQ(pk.members[m].offset, expected_offset);
        expected_offset += pk.members[m].length + 1;
        packed_ids.push_back(pk.members[m].id);
      }
    }
    // Arrival order preserved and rejected ids are exactly the oversize ones.
    std::vector<std::string> expected_ids, expected_rejected, rejected;
    for (std::size_t i = 0; i < lengths.size(); ++i) {
      (lengths[i] + 1 > target ? expected_rejected : expected_ids).push_back("s" + std::to_string(i));
    }
    for (const auto& rej : r.rejections) rejected.push_back(rej.id);
    ASSERT_EQ(packed_ids, expected_ids);
    ASSERT_EQ(rejected, expected_rejected);
  }
}

TEST(PackProperties, AverageFillAtLeastHalf) {
  Rng rng(77);
  const std::size_t target = 4096;
  Packer packer(target, OversizePolicy::reject);
  double fill_sum = 0.0;
  std::size_t packs = 0;
  auto account = [&](const std::optional<PackedSequence>& p) {
    if (!p) return;
    fill_sum += p->fill_ratio();
    ++packs;
  };
  for (int i = 0; i < 10000; ++i) {
    account(packer.push(make_sample("s" + std::to_string(i), static_cast<std::size_t>(rng.uniform_int(1, target / 2)))));
  }
  account(packer.flush());
  EXPECT_GE(fill_sum / static_cast<double>(packs), 0.5);
}
