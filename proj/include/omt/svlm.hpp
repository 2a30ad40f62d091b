#pragma once

// Selective token loss: rank the tokens of a batch by excess loss
// (training-model NLL minus reference-model NLL) and keep only the top
// fraction for the loss reduction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "omt/error.hpp"
#include "omt/numeric.hpp"
#include "omt/tokenizer.hpp"

namespace omt::svlm {

struct TokenLossRecord {
  std::string sample_id;
  std::int64_t token_index = 0;
  double pretrain_loss = 0.0;
  double reference_loss = 0.0;
  double excess_loss = 0.0;
  bool kept = false;
};

inline TokenLossRecord make_record(std::string sample_id, std::int64_t token_index, double pretrain,
                                   double reference) {
  detail::require_input(std::isfinite(pretrain) && std::isfinite(reference), "losses must be finite");
  return {std::move(sample_id), token_index, pretrain, reference, pretrain - reference, false};
}

inline std::vector<double> excess_loss(const std::vector<double>& pretrain, const std::vector<double>& reference) {
  detail::require_input(pretrain.size() == reference.size(), "pretrain/reference length mismatch");
  std::vector<double> out(pretrain.size());
  for (std::size_t i = 0; i < pretrain.size(); ++i) {
    detail::require_input(!std::isnan(pretrain[i]) && !std::isnan(reference[i]), "NaN loss");
    out[i] = pretrain[i] - reference[i];
  }
  return out;
}

// Offline reference losses keyed by sample id; read-only once built.
class ReferenceLossStore {
 public:
  void add(const std::string& sample_id, std::vector<double> losses) {
    for (double l : losses) detail::require_input(std::isfinite(l) && l >= 0.0, "reference loss must be finite and >= 0");
    losses_[sample_id] = std::move(losses);
  }

  double at(const std::string& sample_id, std::int64_t token_index) const {
    const auto it = losses_.find(sample_id);
    detail::require_input(it != losses_.end(), "no reference losses for sample '" + sample_id + "'");
    detail::require_input(token_index >= 0 && static_cast<std::size_t>(token_index) < it->second.size(),
                          "reference store has no token " + std::to_string(token_index) + " for '" + sample_id + "'");
    return it->second[static_cast<std::size_t>(token_index)];
  }

  bool contains(const std::string& sample_id) const { return losses_.contains(sample_id); }

  // Builds batch records for one sample's pretrain losses.
  std::vector<TokenLossRecord> records(const std::string& sample_id, const std::vector<double>& pretrain) const {
    std::vector<TokenLossRecord> out;
    out.reserve(pretrain.size());
    for (std::size_t i = 0; i < pretrain.size(); ++i) {
      out.push_back(make_record(sample_id, static_cast<std::int64_t>(i), pretrain[i], at(sample_id, static_cast<std::int64_t>(i))));
    }
    return out;
  }

 private:
  std::unordered_map<std::string, std::vector<double>> losses_;
};

struct SelectionConfig {
  double keep_ratio = 0.6;

  void validate() const {
    detail::require_config(keep_ratio > 0.0 && keep_ratio <= 1.0, "keep_ratio must be in (0, 1]");
  }
};

inline std::size_t keep_count(double keep_ratio, std::size_t n) {
  const auto k = ceil_fraction(keep_ratio, static_cast<std::int64_t>(n));
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max<std::int64_t>(k, 1)), 1, n);
}

// Marks the ceil(keep_ratio * n) records with the largest excess loss as kept.
// Ties go to the smaller (sample_id, token_index).
inline std::vector<bool> select_tokens(std::vector<TokenLossRecord>& batch, const SelectionConfig& cfg) {
  cfg.validate();
  detail::require_input(!batch.empty(), "selection batch is empty");
  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t k = keep_count(cfg.keep_ratio, batch.size());
  auto ranks_before = [&](std::size_t a, std::size_t b) {
    const auto& x = batch[a];
    const auto& y = batch[b];
    if (x.excess_loss != y.excess_loss) return x.excess_loss > y.excess_loss;
    return std::tie(x.sample_id, x.token_index) < std::tie(y.sample_id, y.token_index);
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(), ranks_before);
  std::vector<bool> mask(batch.size(), false);
  for (auto& r : batch) r.kept = false;
  // nth_element leaves the k best in [0, k).
  for (std::size_t i = 0; i < k; ++i) {
    mask[order[i]] = true;
    batch[order[i]].kept = true;
  }
  return mask;
}

inline double masked_mean_loss(const std::vector<TokenLossRecord>& batch) {
  double sum = 0.0;
  std::size_t kept = 0;
  for (const auto& r : batch) {
    if (!r.kept) continue;
    sum += r.pretrain_loss;
    ++kept;
  }
  detail::require_input(kept > 0, "no kept tokens");
  return sum / static_cast<double>(kept);
}

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;
};

// Excess-loss histogram over [min, max] of the batch, for inspecting how
// tokens split into high, near-zero, and negative excess.
inline Histogram excess_histogram(const std::vector<TokenLossRecord>& batch, std::size_t bins) {
  detail::require_input(!batch.empty() && bins > 0, "histogram needs tokens and bins");
  const auto [mn, mx] = std::minmax_element(batch.begin(), batch.end(), [](const auto& a, const auto& b) {
    return a.excess_loss < b.excess_loss;
  });
  Histogram h{mn->excess_loss, mx->excess_loss, std::vector<std::size_t>(bins, 0)};
  const double width = h.hi - h.lo;
  for (const auto& r : batch) {
    std::size_t b = width > 0 ? static_cast<std::size_t>((r.excess_loss - h.lo) / width * static_cast<double>(bins)) : 0;
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

// Demo reference model: add-one smoothed bigram over token ids. Token 0 of a
// sample is scored against the unigram distribution.
class BigramLossModel {
 public:
  void fit(const std::vector<std::vector<TokenId>>& corpus) {
    for (const auto& seq : corpus) {
      for (std::size_t i = 0; i < seq.size(); ++i) {
        ++unigram_[seq[i]];
        ++total_;
        if (i > 0) {
          ++bigram_[{seq[i - 1], seq[i]}];
          ++context_[seq[i - 1]];
        }
      }
    }
  }

  // Per-token negative log-likelihood, natural log.
  std::vector<double> losses(const std::vector<TokenId>& seq) const {
    const double v = static_cast<double>(unigram_.size() + 1);  // +1 for unseen ids
    std::vector<double> out;
    out.reserve(seq.size());
    for (std::size_t i = 0; i < seq.size(); ++i) {
      double p;
      if (i == 0) {
        p = (count(unigram_, seq[i]) + 1.0) / (static_cast<double>(total_) + v);
      } else {
        const auto it = bigram_.find({seq[i - 1], seq[i]});
        const double num = (it == bigram_.end() ? 0.0 : static_cast<double>(it->second)) + 1.0;
        p = num / (count(context_, seq[i - 1]) + v);
      }
      out.push_back(-std::log(p));
    }
    return out;
  }

 private:
  static double count(const std::map<TokenId, std::size_t>& m, TokenId id) {
    const auto it = m.find(id);
    return it == m.end() ? 0.0 : static_cast<double>(it->second);
  }

  std::map<TokenId, std::size_t> unigram_, context_;
  std::map<std::pair<TokenId, TokenId>, std::size_t> bigram_;
  std::size_t total_ = 0;
};

}  // namespace omt::svlm
