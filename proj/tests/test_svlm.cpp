#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "omt/rng.hpp"
#include "omt/svlm.hpp"

using namespace omt;
using namespace omt::svlm;

namespace {

std::vector<TokenLossRecord> batch_from_excess(const std::vector<double>& excess, const std::vector<double>& pretrain = {}) {
  std::vector<TokenLossRecord> b;
  for (std::size_t i = 0; i < excess.size(); ++i) {
    const double p = pretrain.empty() ? 3.0 : pretrain[i];
    b.push_back(make_record("s", static_cast<std::int64_t>(i), p, p - excess[i]));
  }
  return b;
}

std::set<std::int64_t> kept_indices(const std::vector<TokenLossRecord>& b) {
  std::set<std::int64_t> k;
  for (const auto& r : b) {
    if (r.kept) k.insert(r.token_index);
  }
  return k;
}

// Sort-by-excess oracle: full sort with the documented tie-break, take k.
std::set<std::pair<std::string, std::int64_t>> oracle_kept(std::vector<TokenLossRecord> b, std::size_t k) {
  std::sort(b.begin(), b.end(), [](const auto& x, const auto& y) {
    if (x.excess_loss != y.excess_loss) return x.excess_loss > y.excess_loss;
    return std::tie(x.sample_id, x.token_index) < std::tie(y.sample_id, y.token_index);
  });
  std::set<std::pair<std::string, std::int64_t>> out;
  for (std::size_t i = 0; i < k; ++i) out.emplace(b[i].sample_id, b[i].token_index);
  return out;
}

std::set<std::pair<std::string, std::int64_t>> kept_keys(const std::vector<TokenLossRecord>& b) {
  std::set<std::pair<std::string, std::int64_t>> out;
  for (const auto& r : b) {
    if (r.kept) out.emplace(r.sample_id, r.token_index);
  }
  return out;
}

}  // namespace

TEST(ExcessLoss, Examples) {
  const auto e = excess_loss({2.0, 1.0}, {1.5, 1.2});
  EXPECT_DOUBLE_EQ(e[0], 0.5);
  EXPECT_DOUBLE_EQ(e[1], 1.0 - 1.2);
  EXPECT_EQ(excess_loss({1.0, 2.5}, {1.0, 2.5}), (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(excess_loss({1.25, 2.5}, {1.0, 2.25}), (std::vector<double>{0.25, 0.25}));
}

TEST(ExcessLoss, Errors) {
  EXPECT_THROW(excess_loss({1.0}, {1.0, 2.0}), InputError);
  EXPECT_THROW(excess_loss({std::nan("")}, {1.0}), InputError);
  EXPECT_THROW(make_record("s", 0, std::nan(""), 1.0), InputError);
}

TEST(SelectTokens, Examples) {
  auto b = batch_from_excess({0.5, -0.2, 1.0, 0.1});
  select_tokens(b, {0.5});
  EXPECT_EQ(kept_indices(b), (std::set<std::int64_t>{2, 0}));

  auto all = batch_from_excess({0.5, -0.2, 1.0, 0.1});
  select_tokens(all, {1.0});
  EXPECT_EQ(kept_indices(all).size(), 4u);

  auto ties = batch_from_excess({0.3, 0.3, 0.3, 0.3});
  select_tokens(ties, {0.5});
  EXPECT_EQ(kept_indices(ties), (std::set<std::int64_t>{0, 1}));
}

TEST(SelectTokens, Errors) {
  std::vector<TokenLossRecord> empty;
  EXPECT_THROW(select_tokens(empty, {0.5}), InputError);
  auto b = batch_from_excess({1.0});
  EXPECT_THROW(select_tokens(b, {0.0}), ConfigError);
  EXPECT_THROW(select_tokens(b, {1.5}), ConfigError);
}

TEST(KeepCount, CeilWithoutFloatNoise) {
  EXPECT_EQ(keep_count(0.6, 5), 3u);
  EXPECT_EQ(keep_count(0.5, 3), 2u);
  EXPECT_EQ(keep_count(0.01, 3), 1u);
  EXPECT_EQ(keep_count(0.7, 10), 7u);
  EXPECT_EQ(keep_count(1.0, 9), 9u);
}

TEST(MaskedMeanLoss, Examples) {
  auto b = batch_from_excess({0.5, -0.2, 1.0, 0.1}, {2.0, 1.0, 4.0, 0.5});
  select_tokens(b, {0.5});
  // Oracle kept set {2, 0}: pretrain 4.0 and 2.0.
  EXPECT_DOUBLE_EQ(masked_mean_loss(b), (4.0 + 2.0) / 2.0);

  auto one = batch_from_excess({0.1}, {2.0});
  one[0].kept = true;
  EXPECT_DOUBLE_EQ(masked_mean_loss(one), 2.0);

  auto none = batch_from_excess({0.1, 0.2});
  EXPECT_THROW(masked_mean_loss(none), InputError);
}

TEST(ReferenceLossStore, LookupAndCoverage) {
  ReferenceLossStore store;
  store.add("a", {1.0, 2.0});
  const auto recs = store.records("a", {1.5, 1.0});
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_DOUBLE_EQ(recs[0].excess_loss, 0.5);
  EXPECT_DOUBLE_EQ(recs[1].excess_loss, -1.0);
  EXPECT_THROW(store.records("a", {1.0, 1.0, 1.0}), InputError);
  EXPECT_THROW(store.at("missing", 0), InputError);
  EXPECT_THROW(store.add("neg", {-0.1}), InputError);
}

TEST(Histogram, CountsEveryToken) {
  const auto b = batch_from_excess({-1.0, 0.0, 0.1, 0.9, 1.0});
  const auto h = excess_histogram(b, 4);
  EXPECT_DOUBLE_EQ(h.lo, -1.0);
  EXPECT_DOUBLE_EQ(h.hi, 1.0);
  EXPECT_EQ(h.counts, (std::vector<std::size_t>{1, 0, 2, 2}));
}

TEST(BigramLossModel, FrequentTransitionsAreCheap) {
  BigramLossModel m;
  m.fit({{1, 2, 1, 2, 1, 2}, {1, 2, 3}});
  const auto l = m.losses({1, 2, 7});
  ASSERT_EQ(l.size(), 3u);
  EXPECT_LT(l[1], l[2]);  // 1->2 seen five times, 2->7 never
  for (double v : l) EXPECT_GT(v, 0.0);
}

// --------------------------------------------------------------- properties

namespace {

// Losses on a 1/64 grid keep every subtraction exact, so ties are real ties.
std::vector<TokenLossRecord> random_batch(Rng& rng, double shift = 0.0) {
  const auto n = rng.uniform_int(1, 60);
  const int samples = static_cast<int>(rng.uniform_int(1, 4));
  std::vector<TokenLossRecord> b;
  for (std::int64_t i = 0; i < n; ++i) {
    const double p = static_cast<double>(rng.uniform_int(0, 256)) / 64.0;
    const double r = static_cast<double>(rng.uniform_int(0, 256)) / 64.0;
    b.push_back(make_record("s" + std::to_string(rng.uniform_int(0, samples - 1)), i, p, r + shift));
  }
  return b;
}

}  // namespace

TEST(SelectProperties, CardinalityDominanceAndOracle) {
  Rng rng(31);
  for (int t = 0; t < 2000; ++t) {
    auto b = random_batch(rng);
    const double ratio = static_cast<double>(rng.uniform_int(1, 100)) / 100.0;
    select_tokens(b, {ratio});
    const std::size_t k = static_cast<std::size_t>(std::count_if(b.begin(), b.end(), [](auto& r) { return r.kept; }));
    ASSERT_EQ(k, keep_count(ratio, b.size()));
    double min_kept = 1e300, max_dropped = -1e300;
    for (const auto& r : b) {
      if (r.kept) {
        min_kept = std::min(min_kept, r.excess_loss);
      } else {
        max_dropped = std::max(max_dropped, r.excess_loss);
      }
    }
    ASSERT_GE(min_kept, max_dropped);
    ASSERT_EQ(kept_keys(b), oracle_kept(b, k));
  }
}

TEST(SelectProperties, ShiftAndPermutationInvariance) {
  Rng rng(32);
  for (int t = 0; t < 1000; ++t) {
    const std::uint64_t seed = rng.next();
    Rng a(seed), b(seed);
    auto base = random_batch(a);
    auto shifted = random_batch(b, 1.5);
    select_tokens(base, {0.4});
    select_tokens(shifted, {0.4});
    ASSERT_EQ(kept_keys(base), kept_keys(shifted));

    auto perm = base;
    rng.shuffle(perm);
    select_tokens(perm, {0.4});
    ASSERT_EQ(kept_keys(perm), kept_keys(base));
  }
}

TEST(SelectProperties, FullRetentionReducesToPlainMean) {
  Rng rng(33);
  for (int t = 0; t < 500; ++t) {
    auto b = random_batch(rng);
    select_tokens(b, {1.0});
    double sum = 0.0;
    for (const auto& r : b) sum += r.pretrain_loss;
    ASSERT_EQ(masked_mean_loss(b), sum / static_cast<double>(b.size()));
  }
}
