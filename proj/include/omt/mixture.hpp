#pragma once

// Instruction-tuning data mixtures measured in answer tokens: per-dataset
// quotas from designed fractions, repeated sampling for small datasets, and
// a ladder of data portions that each keep the designed fractions.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "omt/error.hpp"
#include "omt/numeric.hpp"
#include "omt/rng.hpp"

namespace omt::mixture {

struct DatasetSpec {
  std::string name;
  double designed_fraction = 0.0;
  std::vector<std::int64_t> sample_tokens;  // answer tokens per sample

  std::int64_t available_answer_tokens() const {
    std::int64_t s = 0;
    for (auto t : sample_tokens) s += t;
    return s;
  }
  std::int64_t max_sample_tokens() const {
    std::int64_t m = 0;
    for (auto t : sample_tokens) m = std::max(m, t);
    return m;
  }

  // count samples of tokens_per_sample each; the last one takes the remainder.
  static DatasetSpec uniform(std::string name, double fraction, std::int64_t available, std::int64_t tokens_per_sample) {
    detail::require_config(tokens_per_sample > 0, "tokens_per_sample must be positive");
    DatasetSpec d{std::move(name), fraction, {}};
    for (std::int64_t left = available; left > 0; left -= tokens_per_sample) {
      d.sample_tokens.push_back(std::min(left, tokens_per_sample));
    }
    return d;
  }
};

// Order in which a dataset's samples are drawn: a seeded shuffle, reshuffled
// on every pass through the dataset. Prefixes are stable, so any quota reads
// a prefix of the same stream.
class DrawStream {
 public:
  DrawStream(const DatasetSpec& spec, std::uint64_t seed) : spec_(&spec), seed_(substream_seed(seed, "mixture/" + spec.name)) {}

  // Shortest prefix whose tokens reach target (sample indices in draw order).
  std::vector<std::size_t> prefix(std::int64_t target) const {
    std::vector<std::size_t> draws;
    std::int64_t taken = 0;
    const std::size_t n = spec_->sample_tokens.size();
    std::vector<std::size_t> perm(n);
    for (std::uint64_t pass = 0; taken < target; ++pass) {
      for (std::size_t i = 0; i < n; ++i) perm[i] = i;
      Rng rng(seed_ + pass * 0x9E3779B97F4A7C15ULL);
      rng.shuffle(perm);
      for (std::size_t idx : perm) {
        if (taken >= target) break;
        draws.push_back(idx);
        taken += spec_->sample_tokens[idx];
      }
    }
    return draws;
  }

 private:
  const DatasetSpec* spec_;
  std::uint64_t seed_;
};

struct DatasetQuota {
  std::string name;
  double fraction = 0.0;
  std::int64_t available = 0;
  std::int64_t quota = 0;
  double repeat_factor = 0.0;       // quota / available; > 1 means repeated passes
  std::vector<std::size_t> draws;   // sample indices, draw order
  std::int64_t emitted_tokens = 0;  // tokens of the drawn samples, >= quota
};

struct MixturePlan {
  std::int64_t total_answer_tokens = 0;
  std::uint64_t seed = 0;
  std::vector<DatasetSpec> specs;
  std::vector<DatasetQuota> datasets;
};

inline void validate_specs(const std::vector<DatasetSpec>& specs) {
  detail::require_config(!specs.empty(), "mixture needs at least one dataset");
  double sum = 0.0;
  for (const auto& s : specs) {
    detail::require_config(s.designed_fraction >= 0.0 && s.designed_fraction <= 1.0,
                           "fraction of '" + s.name + "' outside [0, 1]");
    for (auto t : s.sample_tokens) detail::require_config(t > 0, "dataset '" + s.name + "' has an empty sample");
    detail::require_config(!(s.designed_fraction > 0.0 && s.available_answer_tokens() == 0),
                           "dataset '" + s.name + "' has a positive fraction but no tokens");
    sum += s.designed_fraction;
  }
  detail::require_config(std::abs(sum - 1.0) <= 1e-9, "designed fractions must sum to 1");
}

inline std::int64_t tokens_of(const DatasetSpec& spec, const std::vector<std::size_t>& draws, std::size_t begin,
                              std::size_t end) {
  std::int64_t s = 0;
  for (std::size_t i = begin; i < end; ++i) s += spec.sample_tokens[draws[i]];
  return s;
}

inline std::vector<double> fractions_of(const std::vector<DatasetSpec>& specs) {
  std::vector<double> f;
  for (const auto& s : specs) f.push_back(s.designed_fraction);
  return f;
}

inline MixturePlan build_mixture(const std::vector<DatasetSpec>& specs, std::int64_t total, std::uint64_t seed) {
  validate_specs(specs);
  detail::require_config(total > 0, "total answer tokens must be positive");
  MixturePlan plan{total, seed, specs, {}};
  const auto quotas = largest_remainder(fractions_of(specs), total);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    DatasetQuota q;
    q.name = specs[i].name;
    q.fraction = specs[i].designed_fraction;
    q.available = specs[i].available_answer_tokens();
    q.quota = quotas[i];
    q.repeat_factor = q.available > 0 ? static_cast<double>(q.quota) / static_cast<double>(q.available) : 0.0;
    q.draws = DrawStream(plan.specs[i], seed).prefix(q.quota);
    q.emitted_tokens = tokens_of(specs[i], q.draws, 0, q.draws.size());
    plan.datasets.push_back(std::move(q));
  }
  return plan;
}

// cumulative: sizes are checkpoints along one growing combination (10M, 20M, ...);
// disjoint: sizes are consecutive non-overlapping slices.
enum class PortionMode { cumulative, disjoint };

struct PortionShare {
  std::string name;
  std::int64_t quota = 0;             // this portion's tokens for the dataset
  std::int64_t cumulative_quota = 0;  // through the end of this portion
  std::int64_t emitted_tokens = 0;
  std::int64_t cumulative_emitted = 0;
  std::size_t draw_begin = 0;         // [begin, end) in the dataset's draw stream
  std::size_t draw_end = 0;
};

struct Portion {
  std::int64_t size = 0;        // tokens added by this portion
  std::int64_t checkpoint = 0;  // cumulative tokens through this portion
  std::vector<PortionShare> shares;
};

struct PortionPlan {
  PortionMode mode = PortionMode::cumulative;
  std::vector<Portion> portions;
  // Shared draw streams, long enough for every portion.
  std::vector<std::vector<std::size_t>> draws;
};

inline PortionPlan split_portions(const MixturePlan& plan, const std::vector<std::int64_t>& sizes,
                                  PortionMode mode = PortionMode::cumulative) {
  detail::require_config(!sizes.empty(), "portion list is empty");
  std::vector<std::int64_t> checkpoints;
  std::int64_t acc = 0;
  for (auto s : sizes) {
    detail::require_config(s > 0, "portion sizes must be positive");
    if (mode == PortionMode::cumulative) {
      detail::require_config(checkpoints.empty() || s > checkpoints.back(), "cumulative portion sizes must increase");
      checkpoints.push_back(s);
    } else {
      acc += s;
      checkpoints.push_back(acc);
    }
  }
  detail::require_config(checkpoints.back() <= plan.total_answer_tokens, "portions exceed the mixture total");

  const auto fractions = fractions_of(plan.specs);
  std::vector<std::vector<std::int64_t>> cum_quota;
  std::vector<std::int64_t> need(plan.specs.size(), 0);
  for (auto cp : checkpoints) {
    cum_quota.push_back(largest_remainder(fractions, cp));
    for (std::size_t d = 0; d < need.size(); ++d) need[d] = std::max(need[d], cum_quota.back()[d]);
  }

  PortionPlan out;
  out.mode = mode;
  for (std::size_t d = 0; d < plan.specs.size(); ++d) {
    out.draws.push_back(DrawStream(plan.specs[d], plan.seed).prefix(need[d]));
  }

  std::vector<std::size_t> cursor(plan.specs.size(), 0);
  std::vector<std::int64_t> emitted(plan.specs.size(), 0);
  std::vector<std::int64_t> prev_quota(plan.specs.size(), 0);
  std::int64_t prev_cp = 0;
  for (std::size_t k = 0; k < checkpoints.size(); ++k) {
    Portion p{checkpoints[k] - prev_cp, checkpoints[k], {}};
    for (std::size_t d = 0; d < plan.specs.size(); ++d) {
      const auto& spec = plan.specs[d];
      const auto& stream = out.draws[d];
      PortionShare share;
      share.name = spec.name;
      share.cumulative_quota = cum_quota[k][d];
      share.quota = share.cumulative_quota - prev_quota[d];
      share.draw_begin = cursor[d];
      std::size_t end = cursor[d];
      std::int64_t taken = emitted[d];
      while (taken < share.cumulative_quota) taken += spec.sample_tokens[stream[end++]];
      share.draw_end = end;
      share.emitted_tokens = taken - emitted[d];
      share.cumulative_emitted = taken;
      cursor[d] = end;
      emitted[d] = taken;
      prev_quota[d] = share.cumulative_quota;
      p.shares.push_back(std::move(share));
    }
    prev_cp = checkpoints[k];
    out.portions.push_back(std::move(p));
  }
  return out;
}

// FNV-1a over every dataset's draw stream; two plans with equal digests drew the same samples.
inline std::uint64_t assignment_digest(const std::vector<std::vector<std::size_t>>& draws) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto mix = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xFF;
      h *= 0x100000001B3ULL;
    }
  };
  for (const auto& d : draws) {
    mix(d.size());
    for (auto i : d) mix(i);
  }
  return h;
}

}  // namespace omt::mixture
