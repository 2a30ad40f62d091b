#pragma once

// Concatenates pre-tokenized samples into fixed-length training sequences.
// Each member is followed by one separator token; samples are never split.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "omt/error.hpp"
#include "omt/tokenizer.hpp"

namespace omt::packing {

struct Sample {
  std::string id;
  std::vector<TokenId> token_ids;

  std::size_t length() const { return token_ids.size(); }
};

struct Member {
  std::string id;
  std::size_t offset = 0;
  std::size_t length = 0;  // sample tokens, separator excluded

  bool operator==(const Member&) const = default;
};

struct PackedSequence {
  std::size_t target_len = 0;
  std::vector<Member> members;
  std::vector<TokenId> tokens;  // members and separators, unpadded

  std::size_t used() const { return tokens.size(); }
  double fill_ratio() const { return static_cast<double>(used()) / static_cast<double>(target_len); }
  std::vector<std::size_t> boundaries() const {
    std::vector<std::size_t> b;
    b.reserve(members.size());
    for (const Member& m : members) b.push_back(m.offset);
    return b;
  }
};

enum class OversizePolicy { reject, truncate };

inline OversizePolicy parse_policy(std::string_view s) {
  if (s == "reject") return OversizePolicy::reject;
  if (s == "truncate") return OversizePolicy::truncate;
  throw InputError("unknown oversize policy: " + std::string(s));
}

struct Rejection {
  std::string id;
  std::size_t length = 0;
};

// Stream transformer: push samples in arrival order, collect packs as they close.
// Single consumer; independent instances may run concurrently.
class Packer {
 public:
  Packer(std::size_t target_len, OversizePolicy policy, TokenId separator = special::kSeparator)
      : target_len_(target_len), policy_(policy), separator_(separator) {
    detail::require_config(target_len >= 2, "target_len must leave room for a sample and separator");
  }

  // Returns the pack closed by this sample, if any.
  std::optional<PackedSequence> push(const Sample& s) {
    detail::require_input(s.length() > 0, "sample '" + s.id + "' is empty");
    std::size_t len = s.length();
    if (len + 1 > target_len_) {
      if (policy_ == OversizePolicy::reject) {
        rejections_.push_back({s.id, len});
        return std::nullopt;
      }
      len = target_len_ - 1;
    }
    std::optional<PackedSequence> closed;
    if (open_.used() + len + 1 > target_len_) closed = take_open();
    open_.members.push_back({s.id, open_.tokens.size(), len});
    open_.tokens.insert(open_.tokens.end(), s.token_ids.begin(), s.token_ids.begin() + static_cast<std::ptrdiff_t>(len));
    open_.tokens.push_back(separator_);
    return closed;
  }

  // Emits the open pack if it holds anything.
  std::optional<PackedSequence> flush() {
    if (open_.members.empty()) return std::nullopt;
    return take_open();
  }

  const std::vector<Rejection>& rejections() const { return rejections_; }
  std::size_t target_len() const { return target_len_; }

 private:
  PackedSequence take_open() {
    PackedSequence out = std::move(open_);
    out.target_len = target_len_;
    open_ = PackedSequence{};
    return out;
  }

  std::size_t target_len_;
  OversizePolicy policy_;
  TokenId separator_;
  PackedSequence open_;
  std::vector<Rejection> rejections_;
};

struct PackResult {
  std::vector<PackedSequence> packs;
  std::vector<Rejection> rejections;
};

inline PackResult pack(const std::vector<Sample>& samples, std::size_t target_len, OversizePolicy policy) {
  Packer packer(target_len, policy);
  PackResult result;
  for (const Sample& s : samples) {
    if (auto p = packer.push(s)) result.packs.push_back(std::move(*p));
  }
  if (auto p = packer.flush()) result.packs.push_back(std::move(*p));
  result.rejections = packer.rejections();
  return result;
}

struct ContextSchedule {
  std::vector<std::size_t> stages{4096, 32768, 131072, 524288};

  void validate() const {
    detail::require_config(!stages.empty(), "context schedule is empty");
    for (std::size_t i = 1; i < stages.size(); ++i) {
      detail::require_config(stages[i] > stages[i - 1], "context schedule must be strictly increasing");
    }
  }
};

inline std::size_t schedule_stage(std::size_t stage_index, const ContextSchedule& sched = {}) {
  sched.validate();
  detail::require_input(stage_index < sched.stages.size(),
                        "stage index " + std::to_string(stage_index) + " out of range");
  return sched.stages[stage_index];
}

}  // namespace omt::packing
