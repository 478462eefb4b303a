#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rolloutlab/rng.hpp"
#include "rolloutlab/sampling.hpp"
#include "rolloutlab/similarity.hpp"
#include "rolloutlab/token_policy.hpp"

namespace rolloutlab {

struct LatrConfig {
  /// A candidate must exceed this probability.
  double tau_abs = 0.25;
  /// ...and trail the top token by less than this.
  double tau_rel = 0.15;
  /// Branches whose lookahead divergence falls below this are pruned.
  double tau_ed = 0.4;
  /// Lookahead lengths; a branch is checked at birth + w for every w.
  std::vector<std::size_t> windows{20, 30, 50};
  std::size_t k = 8;
  std::size_t n = 24;
  SimilarityMetric prune_metric = SimilarityMetric::edit_distance;

  void validate() const;
};

enum class BranchStatus { active, complete, pruned };

std::string_view to_string(BranchStatus status);

/// One lookahead check on a branch.
struct WindowCheck {
  std::size_t due_step = 0;
  std::size_t window = 0;
  /// Divergence from the parent segment; empty when the check was skipped
  /// because the parent produced no tokens in the span.
  std::optional<double> distance;
  bool passed = true;
};

struct Branch {
  std::size_t id = 0;
  /// Completion tokens only; a child starts as its parent's prefix ⊕ branch token.
  std::vector<TokenId> tokens;
  std::optional<std::size_t> parent;
  /// Step at which the branch token was appended; 0 for the root.
  std::size_t birth = 0;
  BranchStatus status = BranchStatus::active;
  /// Steps at which prune checks are still due, strictly increasing.
  std::vector<std::size_t> pending_checks;
  std::vector<WindowCheck> checks;
  /// Probability of the branch token under the parent's distribution.
  double branch_probability = 0.0;
  double total_logprob = 0.0;
  /// Set when removed because an ancestor failed a check.
  std::optional<std::size_t> pruned_via_ancestor;
  std::optional<std::size_t> pruned_at;

  bool alive() const { return status != BranchStatus::pruned; }
};

struct TreeEvent {
  enum class Kind { branch, prune, saturate, eos };
  std::size_t step = 0;
  Kind kind = Kind::branch;
  std::optional<std::size_t> branch_id;
  std::optional<std::size_t> parent_id;
  std::optional<double> probability;
  std::optional<double> distance;
  /// For prune events triggered by an ancestor.
  std::optional<std::size_t> ancestor_id;

  nlohmann::ordered_json to_json() const;
};

std::string_view to_string(TreeEvent::Kind kind);

struct TreeStats {
  std::size_t branch_events = 0;
  /// Tokens appended to tree branches (tree phase and stochastic tail).
  std::size_t tokens_generated = 0;
  std::optional<std::size_t> saturation_step;
  std::size_t pruned_count = 0;
  /// Policy queries made by the tree itself; bounded by n * k.
  std::size_t forward_passes = 0;
  /// Policy queries spent on padding rollouts.
  std::size_t padding_forward_passes = 0;
  std::size_t padded = 0;

  std::size_t total_forward_passes() const { return forward_passes + padding_forward_passes; }
};

struct Candidate {
  TokenId token = 0;
  double probability = 0.0;
  bool operator==(const Candidate&) const = default;
};

/// Tokens c != argmax with p[c] > tau_abs and p[argmax] - p[c] < tau_rel,
/// descending by probability, ties by id.
std::vector<Candidate> candidate_set(std::span<const double> dist, const LatrConfig& cfg);

/// A child waiting to be instantiated during a branch step.
struct PendingChild {
  std::size_t parent = 0;
  /// Parent's token count before this step's extension.
  std::size_t prefix_len = 0;
  TokenId token = 0;
  double probability = 0.0;
  double prefix_logprob = 0.0;
};

/// Global instantiation order: descending probability, then parent id, then token.
void rank_children(std::vector<PendingChild>& pool);

/// The child's tokens and its parent's tokens at positions (birth, birth + w],
/// 1-based, truncated to what exists.
struct WindowSegments {
  std::span<const TokenId> child;
  std::span<const TokenId> parent;
};
WindowSegments window_segments(const Branch& child, const Branch& parent, std::size_t window);

/// Divergence of one window; nullopt when the parent segment is empty.
std::optional<double> window_divergence(const Branch& child, const Branch& parent,
                                        std::size_t window, SimilarityMetric metric);

/// Overrides the edit-distance decision at a due check (random-prune ablation).
/// Returns true to prune.
using PruneDecider = std::function<bool(const Branch& branch, std::size_t window)>;

/// Runs every check due at `step` on live branches. A failing branch is pruned
/// together with all its descendants in the same step. Returns the number of
/// branches pruned.
std::size_t prune_due_branches(std::vector<Branch>& branches, std::size_t step,
                               const LatrConfig& cfg, std::vector<TreeEvent>& events,
                               const PruneDecider* decider = nullptr);

struct LatrVariant {
  enum class Kind { none, random_branch, random_prune, no_prune };
  Kind kind = Kind::none;
  double rate = 0.0;

  void validate() const;
};

std::string_view to_string(LatrVariant::Kind kind);
LatrVariant::Kind parse_variant_kind(std::string_view name);

enum class SequenceOrigin { latr, stochastic, padding };

std::string_view to_string(SequenceOrigin origin);

struct LatrResult {
  std::vector<Sequence> sequences;
  std::vector<SequenceOrigin> origins;
  /// Tree branch id per sequence; empty for padding.
  std::vector<std::optional<std::size_t>> branch_ids;
  TreeStats stats;
  std::vector<TreeEvent> events;
  std::vector<Branch> branches;
  /// Width after each completed step of the tree phase (index 0 = initial).
  std::vector<std::size_t> width_by_step;
};

/// Width-bounded rollout tree for one prompt.
///
/// Each step extends every active branch with its argmax token and spawns
/// children for qualifying alternatives until the width reaches k; children
/// whose lookahead windows fail to diverge from their parent are pruned with
/// their descendants. When the width reaches k the tree saturates: pending
/// checks are cancelled and every unfinished branch continues by stochastic
/// sampling. Short groups are padded with fresh stochastic rollouts.
class LookaheadTree {
 public:
  LookaheadTree(const SoftmaxPolicy& policy, std::span<const TokenId> prompt, TokenId eos,
                LatrConfig cfg, SamplingConfig sampling, std::uint64_t prompt_id,
                LatrVariant variant = {});

  /// Advances the step counter and extends / branches. Requires !saturated().
  void branch_step();
  /// Runs checks due at the current step. No-op once saturated.
  void prune_step();

  /// Full procedure: tree phase, stochastic tail, padding.
  LatrResult run();

  std::size_t step() const { return step_; }
  bool saturated() const { return saturated_; }
  std::size_t width() const;
  std::size_t active_count() const;
  const std::vector<Branch>& branches() const { return branches_; }
  const std::vector<TreeEvent>& events() const { return events_; }
  const TreeStats& stats() const { return stats_; }

 private:
  void saturate();
  bool has_pending_checks() const;

  const SoftmaxPolicy& policy_;
  std::vector<TokenId> prompt_;
  TokenId eos_;
  LatrConfig cfg_;
  SamplingConfig sampling_;
  std::uint64_t prompt_id_;
  LatrVariant variant_;
  Rng variant_rng_;

  std::vector<Branch> branches_;
  std::vector<TreeEvent> events_;
  TreeStats stats_;
  std::vector<std::size_t> width_by_step_;
  std::size_t step_ = 0;
  bool saturated_ = false;
};

LatrResult latr_rollout(const SoftmaxPolicy& policy, std::span<const TokenId> prompt, TokenId eos,
                        const LatrConfig& cfg, const SamplingConfig& sampling,
                        std::uint64_t prompt_id);

LatrResult latr_variant_rollout(const SoftmaxPolicy& policy, std::span<const TokenId> prompt,
                                TokenId eos, const LatrConfig& cfg,
                                const SamplingConfig& sampling, LatrVariant variant,
                                std::uint64_t prompt_id);

/// JSON-lines event log, one object per line.
std::string events_to_jsonl(std::span<const TreeEvent> events);

}  // namespace rolloutlab
