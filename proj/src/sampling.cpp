#include "rolloutlab/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace rolloutlab {

void SamplingConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw std::invalid_argument("temperature must be > 0 (got " + std::to_string(temperature) + ")");
  if (top_k != kTopKUnlimited && top_k < 1)
    throw std::invalid_argument("top_k must be >= 1 or -1 for unlimited (got " +
                                std::to_string(top_k) + ")");
  if (!(top_p > 0.0 && top_p <= 1.0))
    throw std::invalid_argument("top_p must lie in (0, 1] (got " + std::to_string(top_p) + ")");
}

void SrConfig::validate() const {
  if (keep_count < 2) throw std::invalid_argument("sr keep_count must be >= 2");
  if (oversample_count < keep_count)
    throw std::invalid_argument("sr oversample_count must be >= keep_count");
}

ProbVector shape_distribution(const ProbVector& dist, const SamplingConfig& cfg) {
  if (cfg.is_identity()) return dist;

  const std::size_t v = dist.size();
  ProbVector out(v, 0.0);
  if (cfg.temperature == 1.0) {
    out = dist;
  } else {
    // p^(1/T) normalized == softmax(log p / T)
    double hi = -INFINITY;
    for (double p : dist)
      if (p > 0.0) hi = std::max(hi, std::log(p) / cfg.temperature);
    for (std::size_t i = 0; i < v; ++i)
      out[i] = dist[i] > 0.0 ? std::exp(std::log(dist[i]) / cfg.temperature - hi) : 0.0;
  }

  // Descending by probability, ties by id, so masks are deterministic.
  std::vector<std::size_t> order(v);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return out[a] > out[b]; });

  std::size_t keep = v;
  if (cfg.top_k != kTopKUnlimited) keep = std::min(keep, static_cast<std::size_t>(cfg.top_k));
  double mass = 0.0;
  for (std::size_t r = 0; r < keep; ++r) mass += out[order[r]];

  if (cfg.top_p < 1.0) {
    double running = 0.0;
    for (std::size_t r = 0; r < keep; ++r) {
      running += out[order[r]] / mass;
      if (running >= cfg.top_p) {
        keep = r + 1;
        break;
      }
    }
  }
  keep = std::max<std::size_t>(keep, 1);
  for (std::size_t r = keep; r < v; ++r) out[order[r]] = 0.0;

  double total = 0.0;
  for (double p : out) total += p;
  if (!(total > 0.0)) {
    std::fill(out.begin(), out.end(), 0.0);
    out[order[0]] = 1.0;
    return out;
  }
  for (double& p : out) p /= total;
  return out;
}

TokenId sample_token(std::span<const double> dist, Rng& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] <= 0.0) continue;
    last_positive = i;
    cumulative += dist[i];
    if (u < cumulative) return static_cast<TokenId>(i);
  }
  // u landed in the rounding gap above the cumulative sum
  return static_cast<TokenId>(last_positive);
}

void continue_stochastic(const SoftmaxPolicy& policy, std::span<const TokenId> prompt,
                         TokenId eos, std::size_t max_len, const SamplingConfig& cfg, Rng& rng,
                         Sequence& seq, std::size_t& forward_passes) {
  while (seq.tokens.size() < max_len && !seq.ends_with(eos)) {
    const ProbVector dist = policy.next_distribution(policy.context_for(prompt, seq.tokens));
    ++forward_passes;
    const TokenId token = sample_token(shape_distribution(dist, cfg), rng);
    seq.total_logprob += std::log(dist[static_cast<std::size_t>(token)]);
    seq.tokens.push_back(token);
  }
  seq.terminated = true;
}

RolloutBatch stochastic_rollout(const SoftmaxPolicy& policy, std::span<const TokenId> prompt,
                                TokenId eos, std::size_t k, std::size_t n,
                                const SamplingConfig& cfg, std::uint64_t prompt_id, Stream stream) {
  if (k < 1 || n < 1) throw std::invalid_argument("stochastic_rollout needs k >= 1 and n >= 1");
  RolloutBatch batch;
  batch.sequences.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    Rng rng(stream_seed(cfg.seed, stream, prompt_id, i));
    continue_stochastic(policy, prompt, eos, n, cfg, rng, batch.sequences[i], batch.forward_passes);
  }
  return batch;
}

double pair_similarity(SimilarityMetric metric, std::span<const TokenId> a,
                       std::span<const TokenId> b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  switch (metric) {
    case SimilarityMetric::edit_distance: return 1.0 - norm_edit_distance(a, b);
    case SimilarityMetric::rouge_l: return rouge_l_sim(a, b);
    case SimilarityMetric::suffix_match:
      return 0.5 * (suffix_match_sim(a, b) + suffix_match_sim(b, a));
    case SimilarityMetric::bleu_rouge_avg:
      return 0.5 * (bleu_rouge_sim(a, b) + bleu_rouge_sim(b, a));
  }
  return 0.0;
}

std::vector<std::size_t> select_diverse(std::span<const Sequence> pool, std::size_t keep,
                                        SimilarityMetric metric) {
  const std::size_t m = pool.size();
  if (keep > m) throw std::invalid_argument("select_diverse: keep exceeds pool size");
  if (keep == 0) return {};
  if (keep == 1 || m == 1) return {0};

  std::vector<double> sim(m * m, 1.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j)
      sim[i * m + j] = sim[j * m + i] = pair_similarity(metric, pool[i].tokens, pool[j].tokens);

  std::size_t seed_a = 0, seed_b = 1;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j)
      if (sim[i * m + j] < sim[seed_a * m + seed_b]) seed_a = i, seed_b = j;

  std::vector<std::size_t> chosen{seed_a, seed_b};
  std::vector<bool> taken(m, false);
  taken[seed_a] = taken[seed_b] = true;
  // running minimum distance from each candidate to the chosen set
  std::vector<double> min_dist(m);
  for (std::size_t c = 0; c < m; ++c)
    min_dist[c] = std::min(1.0 - sim[c * m + seed_a], 1.0 - sim[c * m + seed_b]);

  while (chosen.size() < keep) {
    std::size_t best = m;
    for (std::size_t c = 0; c < m; ++c)
      if (!taken[c] && (best == m || min_dist[c] > min_dist[best])) best = c;
    chosen.push_back(best);
    taken[best] = true;
    for (std::size_t c = 0; c < m; ++c)
      min_dist[c] = std::min(min_dist[c], 1.0 - sim[c * m + best]);
  }
  return chosen;
}

SrResult sr_rollout(const SoftmaxPolicy& policy, std::span<const TokenId> prompt, TokenId eos,
                    const SrConfig& cfg, const SamplingConfig& sampling, std::size_t n,
                    std::uint64_t prompt_id) {
  if (cfg.oversample_count < cfg.keep_count)
    throw std::invalid_argument("sr_rollout: oversample_count < keep_count");
  cfg.validate();
  RolloutBatch pool = stochastic_rollout(policy, prompt, eos, cfg.oversample_count, n, sampling,
                                         prompt_id, Stream::selection_pool);
  SrResult result;
  result.forward_passes = pool.forward_passes;
  result.pool_indices = select_diverse(pool.sequences, cfg.keep_count, cfg.similarity);
  for (std::size_t idx : result.pool_indices) result.sequences.push_back(pool.sequences[idx]);
  result.pool = std::move(pool.sequences);
  return result;
}

}  // namespace rolloutlab
