#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rolloutlab/rng.hpp"
#include "rolloutlab/similarity.hpp"
#include "rolloutlab/token_policy.hpp"

namespace rolloutlab {

/// Sentinel for "no top-k mask" (the -1 convention of common RL trainers).
inline constexpr int kTopKUnlimited = -1;

struct SamplingConfig {
  double temperature = 1.0;
  int top_k = kTopKUnlimited;
  double top_p = 1.0;
  std::uint64_t seed = 0;

  bool is_identity() const { return temperature == 1.0 && top_k == kTopKUnlimited && top_p == 1.0; }
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// A completion (prompt excluded).
struct Sequence {
  std::vector<TokenId> tokens;
  /// EOS reached or the length cap hit.
  bool terminated = false;
  /// Sum of log pi(token | context) under the unshaped policy.
  double total_logprob = 0.0;

  bool ends_with(TokenId token) const { return !tokens.empty() && tokens.back() == token; }
  bool operator==(const Sequence&) const = default;
};

/// Temperature on log-probabilities, then top-k, then nucleus (top-p), then
/// renormalize. The identity configuration returns `dist` unchanged.
ProbVector shape_distribution(const ProbVector& dist, const SamplingConfig& cfg);

/// Inverse-CDF draw; zero-probability entries are never returned.
TokenId sample_token(std::span<const double> dist, Rng& rng);

/// Extends `seq` token by token until EOS or `max_len` tokens. Each step costs
/// one policy query, counted in `forward_passes`.
void continue_stochastic(const SoftmaxPolicy& policy, std::span<const TokenId> prompt,
                         TokenId eos, std::size_t max_len, const SamplingConfig& cfg, Rng& rng,
                         Sequence& seq, std::size_t& forward_passes);

struct RolloutBatch {
  std::vector<Sequence> sequences;
  std::size_t forward_passes = 0;
};

/// k independent rollouts. Rollout i draws from the stream
/// (cfg.seed, stream, prompt_id, i).
RolloutBatch stochastic_rollout(const SoftmaxPolicy& policy, std::span<const TokenId> prompt,
                                TokenId eos, std::size_t k, std::size_t n,
                                const SamplingConfig& cfg, std::uint64_t prompt_id,
                                Stream stream = Stream::stochastic);

struct SrConfig {
  std::size_t oversample_count = 16;
  std::size_t keep_count = 8;
  SimilarityMetric similarity = SimilarityMetric::bleu_rouge_avg;

  void validate() const;
};

/// Pairwise similarity used by selection; symmetric by construction.
double pair_similarity(SimilarityMetric metric, std::span<const TokenId> a,
                       std::span<const TokenId> b);

/// Greedy max-min selection. Seeds with the least similar pair, then adds the
/// candidate whose minimum distance (1 - similarity) to the selected set is
/// largest. Ties go to the lowest pool index. Returns pool indices in
/// selection order.
std::vector<std::size_t> select_diverse(std::span<const Sequence> pool, std::size_t keep,
                                        SimilarityMetric metric);

struct SrResult {
  std::vector<Sequence> sequences;
  std::vector<std::size_t> pool_indices;
  std::vector<Sequence> pool;
  std::size_t forward_passes = 0;
};

/// Selection-based rollout: oversample, then keep the most diverse subset.
SrResult sr_rollout(const SoftmaxPolicy& policy, std::span<const TokenId> prompt, TokenId eos,
                    const SrConfig& cfg, const SamplingConfig& sampling, std::size_t n,
                    std::uint64_t prompt_id);

}  // namespace rolloutlab
