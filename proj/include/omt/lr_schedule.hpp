#pragma once

// Continuous-training learning-rate schedule: linear warmup into a constant
// trunk that runs through every data portion, plus one short linear-decay
// branch per portion boundary, started from that boundary's checkpoint.
//
//   warmup        lr(s) = base * (s / warmup)                    s < warmup
//   constant      lr(s) = base
//   branch-decay  lr(b + t) = base * ((L - t) / L)               0 <= t <= L
//                 L = ceil(branch_fraction * b), b = branch start step

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "omt/error.hpp"
#include "omt/numeric.hpp"

namespace omt::schedule {

// What the branch fraction multiplies: all trunk steps so far, or only the
// steps of the portion that just finished.
enum class BranchBase { cumulative, per_portion };

enum class Phase { warmup, constant, branch_decay };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::warmup: return "warmup";
    case Phase::constant: return "constant";
    case Phase::branch_decay: return "branch-decay";
  }
  return "?";
}

struct LrSchedule {
  double base_lr = 2e-5;
  std::int64_t warmup_steps = 0;
  double branch_fraction = 0.10;
  BranchBase branch_base = BranchBase::cumulative;

  void validate() const {
    detail::require_config(base_lr > 0.0, "base_lr must be positive");
    detail::require_config(warmup_steps >= 0, "warmup_steps must be >= 0");
    detail::require_config(branch_fraction > 0.0 && branch_fraction <= 1.0, "branch_fraction must be in (0, 1]");
  }
};

inline std::int64_t default_warmup(std::int64_t first_portion_steps) { return ceil_fraction(0.03, first_portion_steps); }

inline std::int64_t branch_length(std::int64_t branch_start, const LrSchedule& sched) {
  return std::max<std::int64_t>(1, ceil_fraction(sched.branch_fraction, branch_start));
}

inline double lr_at(std::int64_t step, const LrSchedule& sched, std::optional<std::int64_t> branch_point = std::nullopt,
                    std::optional<std::int64_t> branch_len = std::nullopt) {
  sched.validate();
  detail::require_input(step >= 0, "step must be non-negative");
  if (branch_point && step >= *branch_point) {
    detail::require_input(*branch_point >= sched.warmup_steps, "branch point falls inside warmup");
    const std::int64_t len = branch_len ? *branch_len : branch_length(*branch_point, sched);
    const std::int64_t t = step - *branch_point;
    if (t >= len) return 0.0;
    return sched.base_lr * (static_cast<double>(len - t) / static_cast<double>(len));
  }
  if (step < sched.warmup_steps) {
    return sched.base_lr * (static_cast<double>(step) / static_cast<double>(sched.warmup_steps));
  }
  return sched.base_lr;
}

struct Branch {
  std::size_t portion = 0;         // data portion this branch evaluates
  std::int64_t start = 0;          // trunk checkpoint step it resumes from
  std::int64_t length = 0;
  std::int64_t data_begin_step = 0;  // trunk steps whose data it retrains on
  std::int64_t data_end_step = 0;
};

// Trunk checkpoint k depends on checkpoint k-1; branch k depends only on checkpoint k.
struct Dependency {
  std::string_view kind;  // "trunk" or "branch"
  std::size_t index = 0;
  std::optional<std::size_t> depends_on_checkpoint;
};

inline std::vector<Branch> emit_branch_plan(const std::vector<std::int64_t>& portion_steps,
                                            const LrSchedule& sched = {}) {
  detail::require_input(!portion_steps.empty(), "portion step list is empty");
  std::vector<Branch> out;
  std::int64_t cum = 0;
  for (std::size_t k = 0; k < portion_steps.size(); ++k) {
    detail::require_input(portion_steps[k] > 0, "portion step counts must be positive");
    const std::int64_t begin = cum;
    cum += portion_steps[k];
    const std::int64_t base = sched.branch_base == BranchBase::cumulative ? cum : portion_steps[k];
    out.push_back({k, cum, std::max<std::int64_t>(1, ceil_fraction(sched.branch_fraction, base)), begin, cum});
  }
  return out;
}

inline std::vector<Dependency> dependency_chain(const std::vector<Branch>& branches) {
  std::vector<Dependency> deps;
  for (std::size_t k = 0; k < branches.size(); ++k) {
    deps.push_back({"trunk", k, k == 0 ? std::nullopt : std::optional<std::size_t>(k - 1)});
    deps.push_back({"branch", k, k});
  }
  return deps;
}

struct LrEvent {
  std::int64_t step = 0;
  double lr = 0.0;
  Phase phase = Phase::constant;
  std::optional<std::size_t> branch;
};

// Trunk steps [0, total) followed by each branch's steps start..start+length.
inline std::vector<LrEvent> schedule_events(const std::vector<std::int64_t>& portion_steps, const LrSchedule& sched) {
  sched.validate();
  const auto branches = emit_branch_plan(portion_steps, sched);
  std::vector<LrEvent> events;
  const std::int64_t total = branches.back().start;
  for (std::int64_t s = 0; s < total; ++s) {
    events.push_back({s, lr_at(s, sched), s < sched.warmup_steps ? Phase::warmup : Phase::constant, std::nullopt});
  }
  for (const Branch& b : branches) {
    for (std::int64_t t = 0; t <= b.length; ++t) {
      events.push_back({b.start + t, lr_at(b.start + t, sched, b.start, b.length), Phase::branch_decay, b.portion});
    }
  }
  return events;
}

}  // namespace omt::schedule
