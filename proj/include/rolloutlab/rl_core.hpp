#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rolloutlab/lookahead_tree.hpp"
#include "rolloutlab/sampling.hpp"
#include "rolloutlab/token_policy.hpp"

namespace rolloutlab {

/// k completions for one prompt with their rewards and advantages.
struct Group {
  std::vector<TokenId> prompt;
  std::size_t task_index = 0;
  std::vector<Sequence> sequences;
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::vector<SequenceOrigin> origins;
};

/// (R - mean) / std with the population std; all zeros when std == 0.
std::vector<double> compute_advantages(std::span<const double> rewards);

/// Fills g.advantages from g.rewards.
void normalize_group(Group& g);

struct GrpoConfig {
  double clip_eps = 0.2;
  double kl_beta = 0.01;
  double learning_rate = 0.05;

  void validate() const;
};

struct DapoConfig {
  double clip_low = 0.2;
  double clip_high = 0.28;
  double oversample_factor = 1.5;
  double learning_rate = 0.05;

  void validate() const;
};

struct ObjectiveResult {
  double objective = 0.0;
  /// d objective / d logits of the current policy.
  LogitGradient gradient;
  std::size_t tokens = 0;
  /// Tokens whose clipped branch was active (zero gradient).
  std::size_t clipped_tokens = 0;
  /// Per-token mean KL to the reference (GRPO only).
  double mean_kl = 0.0;
};

/// Sequence-mean of per-token means of the clipped surrogate, minus
/// beta * per-token mean exact KL(current || reference).
ObjectiveResult grpo_step(std::span<const Group> groups, const SoftmaxPolicy& policy,
                          const SoftmaxPolicy& old_policy, const SoftmaxPolicy& ref_policy,
                          const GrpoConfig& cfg);

/// Token-level sum of the clipped surrogate with bounds [1 - clip_low,
/// 1 + clip_high], divided by the total token count. No KL term.
ObjectiveResult dapo_step(std::span<const Group> groups, const SoftmaxPolicy& policy,
                          const SoftmaxPolicy& old_policy, const DapoConfig& cfg);

/// True when every reward in the group is equal.
bool is_degenerate(const Group& g);

class FilterExhausted : public std::runtime_error {
 public:
  FilterExhausted(std::size_t needed, std::size_t kept);
  std::size_t needed() const { return needed_; }
  std::size_t kept() const { return kept_; }
  std::size_t shortfall() const { return needed_ - kept_; }

 private:
  std::size_t needed_;
  std::size_t kept_;
};

/// Drops degenerate groups, keeping arrival order, and calls `regenerate` for
/// fresh groups until `needed` remain. Throws FilterExhausted after
/// `max_regenerations` calls.
std::vector<Group> dapo_filter(std::vector<Group> groups, std::size_t needed,
                               const std::function<Group()>& regenerate,
                               std::size_t max_regenerations);

struct HybridSchedule {
  double eta0 = 1.0;
  double gamma = 0.985;

  void validate() const;
  double eta(std::size_t step) const;
};

struct HybridAllocation {
  std::size_t k_latr = 0;
  std::size_t k_std = 0;
  double eta = 0.0;
};

/// k_latr = round-half-to-even(eta * k), k_std = k - k_latr.
HybridAllocation hybrid_allocate(std::size_t k, std::size_t step, const HybridSchedule& schedule);

}  // namespace rolloutlab
