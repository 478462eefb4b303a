#include "rolloutlab/rl_core.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>

namespace rolloutlab {

std::vector<double> compute_advantages(std::span<const double> rewards) {
  const std::size_t k = rewards.size();
  std::vector<double> adv(k, 0.0);
  if (k == 0 || std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; })) return adv;
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(k);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / static_cast<double>(k));
  if (!(sd > 0.0)) return adv;
  for (std::size_t i = 0; i < k; ++i) adv[i] = (rewards[i] - mean) / sd;
  return adv;
}

void normalize_group(Group& g) { g.advantages = compute_advantages(g.rewards); }

void GrpoConfig::validate() const {
  if (!(clip_eps > 0.0)) throw std::invalid_argument("clip_eps must be > 0");
  if (!(kl_beta >= 0.0)) throw std::invalid_argument("kl_beta must be >= 0");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("learning_rate must be finite and >= 0");
}

void DapoConfig::validate() const {
  if (!(clip_low > 0.0)) throw std::invalid_argument("clip_low must be > 0");
  if (!(clip_high >= clip_low)) throw std::invalid_argument("clip_high must be >= clip_low");
  if (!(oversample_factor >= 1.0)) throw std::invalid_argument("oversample_factor must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("learning_rate must be finite and >= 0");
}

namespace {

void add_scaled(LogitGradient& grad, const ContextKey& ctx, std::span<const double> v, double scale) {
  auto [it, inserted] = grad.try_emplace(ctx, std::vector<double>(v.size(), 0.0));
  for (std::size_t i = 0; i < v.size(); ++i) it->second[i] += scale * v[i];
}

struct ClipBounds {
  double lo;
  double hi;
};

/// Adds weight * min(r A, clip(r) A) to the objective and its gradient.
/// Returns true when the clipped branch was active.
bool surrogate_token(const SoftmaxPolicy& policy, const SoftmaxPolicy& old_policy,
                     const ContextKey& ctx, TokenId token, double advantage, ClipBounds clip,
                     double weight, ObjectiveResult& out) {
  const ProbVector p = policy.next_distribution(ctx);
  const auto t = static_cast<std::size_t>(token);
  const double ratio = std::exp(std::log(p[t]) - old_policy.token_logprob(ctx, token));
  const double clipped = std::clamp(ratio, clip.lo, clip.hi);
  const double unclipped_term = ratio * advantage;
  const double clipped_term = clipped * advantage;
  out.objective += weight * std::min(unclipped_term, clipped_term);

  const bool inside = ratio >= clip.lo && ratio <= clip.hi;
  if (!inside && !(unclipped_term < clipped_term)) return true;
  // d r / d z = r (onehot - p)
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) g[i] = -p[i];
  g[t] += 1.0;
  add_scaled(out.gradient, ctx, g, weight * advantage * ratio);
  return false;
}

void require_groups(std::span<const Group> groups, const char* who) {
  if (groups.empty()) throw std::invalid_argument(std::string(who) + ": empty group list");
  for (const Group& g : groups) {
    if (g.sequences.size() != g.advantages.size())
      throw std::invalid_argument(std::string(who) + ": advantages missing for a group");
  }
}

}  // namespace

ObjectiveResult grpo_step(std::span<const Group> groups, const SoftmaxPolicy& policy,
                          const SoftmaxPolicy& old_policy, const SoftmaxPolicy& ref_policy,
                          const GrpoConfig& cfg) {
  require_groups(groups, "grpo_step");
  cfg.validate();
  std::size_t seq_count = 0;
  for (const Group& g : groups)
    for (const Sequence& s : g.sequences)
      if (!s.tokens.empty()) ++seq_count;
  if (seq_count == 0) throw std::invalid_argument("grpo_step: no tokens");

  ObjectiveResult out;
  double kl_sum = 0.0;
  const ClipBounds clip{1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps};
  for (const Group& g : groups) {
    for (std::size_t i = 0; i < g.sequences.size(); ++i) {
      const auto& tokens = g.sequences[i].tokens;
      if (tokens.empty()) continue;
      const double w = 1.0 / (static_cast<double>(seq_count) * static_cast<double>(tokens.size()));
      for (std::size_t l = 0; l < tokens.size(); ++l) {
        const ContextKey ctx = policy.context_for(g.prompt, std::span(tokens).first(l));
        if (surrogate_token(policy, old_policy, ctx, tokens[l], g.advantages[i], clip, w, out))
          ++out.clipped_tokens;
        ++out.tokens;
        if (cfg.kl_beta > 0.0) {
          const ProbVector p = policy.next_distribution(ctx);
          const ProbVector q = ref_policy.next_distribution(ctx);
          double kl = 0.0;
          for (std::size_t j = 0; j < p.size(); ++j)
            if (p[j] > 0.0) kl += p[j] * (std::log(p[j]) - std::log(q[j]));
          kl_sum += kl;
          out.objective -= cfg.kl_beta * w * kl;
          // d KL / d z_j = p_j (log p_j - log q_j - KL)
          std::vector<double> dkl(p.size());
          for (std::size_t j = 0; j < p.size(); ++j)
            dkl[j] = p[j] > 0.0 ? p[j] * (std::log(p[j]) - std::log(q[j]) - kl) : 0.0;
          add_scaled(out.gradient, ctx, dkl, -cfg.kl_beta * w);
        } else {
          kl_sum += policy.kl_to(ref_policy, ctx);
        }
      }
    }
  }
  out.mean_kl = out.tokens ? kl_sum / static_cast<double>(out.tokens) : 0.0;
  return out;
}

ObjectiveResult dapo_step(std::span<const Group> groups, const SoftmaxPolicy& policy,
                          const SoftmaxPolicy& old_policy, const DapoConfig& cfg) {
  require_groups(groups, "dapo_step");
  cfg.validate();
  std::size_t total_tokens = 0;
  for (const Group& g : groups)
    for (const Sequence& s : g.sequences) total_tokens += s.tokens.size();
  if (total_tokens == 0) throw std::invalid_argument("dapo_step: no tokens");

  ObjectiveResult out;
  const double w = 1.0 / static_cast<double>(total_tokens);
  const ClipBounds clip{1.0 - cfg.clip_low, 1.0 + cfg.clip_high};
  for (const Group& g : groups) {
    for (std::size_t i = 0; i < g.sequences.size(); ++i) {
      const auto& tokens = g.sequences[i].tokens;
      for (std::size_t l = 0; l < tokens.size(); ++l) {
        const ContextKey ctx = policy.context_for(g.prompt, std::span(tokens).first(l));
        if (surrogate_token(policy, old_policy, ctx, tokens[l], g.advantages[i], clip, w, out))
          ++out.clipped_tokens;
        ++out.tokens;
      }
    }
  }
  return out;
}

bool is_degenerate(const Group& g) {
  return std::all_of(g.rewards.begin(), g.rewards.end(),
                     [&](double r) { return r == g.rewards.front(); });
}

FilterExhausted::FilterExhausted(std::size_t needed, std::size_t kept)
    : std::runtime_error("dapo filter exhausted: kept " + std::to_string(kept) + " of " +
                         std::to_string(needed) + " groups (shortfall " +
                         std::to_string(needed - kept) + ")"),
      needed_(needed),
      kept_(kept) {}

std::vector<Group> dapo_filter(std::vector<Group> groups, std::size_t needed,
                               const std::function<Group()>& regenerate,
                               std::size_t max_regenerations) {
  std::vector<Group> kept;
  for (Group& g : groups) {
    if (kept.size() == needed) break;
    if (!is_degenerate(g)) kept.push_back(std::move(g));
  }
  std::size_t calls = 0;
  while (kept.size() < needed) {
    if (calls == max_regenerations || !regenerate) throw FilterExhausted(needed, kept.size());
    ++calls;
    Group g = regenerate();
    if (!is_degenerate(g)) kept.push_back(std::move(g));
  }
  return kept;
}

void HybridSchedule::validate() const {
  if (!(eta0 >= 0.0 && eta0 <= 1.0)) throw std::invalid_argument("hybrid eta0 must lie in [0, 1]");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("hybrid gamma must lie in (0, 1]");
}

double HybridSchedule::eta(std::size_t step) const {
  return eta0 * std::pow(gamma, static_cast<double>(step));
}

HybridAllocation hybrid_allocate(std::size_t k, std::size_t step, const HybridSchedule& schedule) {
  if (k < 1) throw std::invalid_argument("hybrid_allocate: k must be >= 1");
  schedule.validate();
  HybridAllocation a;
  a.eta = schedule.eta(step);
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double rounded = std::nearbyint(a.eta * static_cast<double>(k));
  std::fesetround(saved);
  a.k_latr = std::min(k, static_cast<std::size_t>(std::max(0.0, rounded)));
  a.k_std = k - a.k_latr;
  return a;
}

}  // namespace rolloutlab
