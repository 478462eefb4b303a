#include "rolloutlab/lookahead_tree.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rolloutlab {

void LatrConfig::validate() const {
  if (!(tau_abs > 0.0 && tau_abs < 1.0)) throw std::invalid_argument("tau_abs must lie in (0, 1)");
  if (!(tau_rel > 0.0 && tau_rel < 1.0)) throw std::invalid_argument("tau_rel must lie in (0, 1)");
  if (!(tau_ed >= 0.0 && tau_ed <= 1.0)) throw std::invalid_argument("tau_ed must lie in [0, 1]");
  if (windows.empty()) throw std::invalid_argument("windows must be non-empty");
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (windows[i] < 1) throw std::invalid_argument("windows must be positive");
    if (i > 0 && windows[i] <= windows[i - 1])
      throw std::invalid_argument("windows must be strictly ascending");
  }
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (n < 1) throw std::invalid_argument("n must be >= 1");
}

void LatrVariant::validate() const {
  if (!(rate >= 0.0 && rate <= 1.0))
    throw std::invalid_argument("variant rate must lie in [0, 1]");
}

std::string_view to_string(BranchStatus status) {
  switch (status) {
    case BranchStatus::active: return "active";
    case BranchStatus::complete: return "complete";
    case BranchStatus::pruned: return "pruned";
  }
  return "active";
}

std::string_view to_string(TreeEvent::Kind kind) {
  switch (kind) {
    case TreeEvent::Kind::branch: return "branch";
    case TreeEvent::Kind::prune: return "prune";
    case TreeEvent::Kind::saturate: return "saturate";
    case TreeEvent::Kind::eos: return "eos";
  }
  return "branch";
}

std::string_view to_string(LatrVariant::Kind kind) {
  switch (kind) {
    case LatrVariant::Kind::none: return "none";
    case LatrVariant::Kind::random_branch: return "random_branch";
    case LatrVariant::Kind::random_prune: return "random_prune";
    case LatrVariant::Kind::no_prune: return "no_prune";
  }
  return "none";
}

LatrVariant::Kind parse_variant_kind(std::string_view name) {
  if (name == "none") return LatrVariant::Kind::none;
  if (name == "random_branch") return LatrVariant::Kind::random_branch;
  if (name == "random_prune") return LatrVariant::Kind::random_prune;
  if (name == "no_prune") return LatrVariant::Kind::no_prune;
  throw std::invalid_argument("unknown variant '" + std::string(name) +
                              "' (expected none, random_branch, random_prune or no_prune)");
}

std::string_view to_string(SequenceOrigin origin) {
  switch (origin) {
    case SequenceOrigin::latr: return "latr";
    case SequenceOrigin::stochastic: return "stochastic";
    case SequenceOrigin::padding: return "padding";
  }
  return "latr";
}

nlohmann::ordered_json TreeEvent::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["event"] = std::string(rolloutlab::to_string(kind));
  j["branch_id"] = branch_id ? nlohmann::ordered_json(*branch_id) : nlohmann::ordered_json(nullptr);
  j["parent_id"] = parent_id ? nlohmann::ordered_json(*parent_id) : nlohmann::ordered_json(nullptr);
  if (kind == Kind::branch) j["probability"] = probability.value_or(0.0);
  if (kind == Kind::prune) {
    j["distance"] = distance ? nlohmann::ordered_json(*distance) : nlohmann::ordered_json(nullptr);
    if (ancestor_id) j["ancestor_id"] = *ancestor_id;
  }
  return j;
}

std::string events_to_jsonl(std::span<const TreeEvent> events) {
  std::string out;
  for (const TreeEvent& e : events) {
    out += e.to_json().dump();
    out += '\n';
  }
  return out;
}

std::vector<Candidate> candidate_set(std::span<const double> dist, const LatrConfig& cfg) {
  std::vector<Candidate> out;
  if (dist.empty()) return out;
  const TokenId top = argmax(dist);
  const double p_top = dist[static_cast<std::size_t>(top)];
  for (std::size_t c = 0; c < dist.size(); ++c) {
    if (static_cast<TokenId>(c) == top) continue;
    if (dist[c] > cfg.tau_abs && p_top - dist[c] < cfg.tau_rel)
      out.push_back({static_cast<TokenId>(c), dist[c]});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Candidate& a, const Candidate& b) { return a.probability > b.probability; });
  return out;
}

void rank_children(std::vector<PendingChild>& pool) {
  std::stable_sort(pool.begin(), pool.end(), [](const PendingChild& a, const PendingChild& b) {
    if (a.probability != b.probability) return a.probability > b.probability;
    if (a.parent != b.parent) return a.parent < b.parent;
    return a.token < b.token;
  });
}

WindowSegments window_segments(const Branch& child, const Branch& parent, std::size_t window) {
  // positions (birth, birth + w] are indices [birth, birth + w)
  auto slice = [&](const std::vector<TokenId>& tokens) {
    const std::size_t lo = std::min(child.birth, tokens.size());
    const std::size_t hi = std::min(child.birth + window, tokens.size());
    return std::span<const TokenId>(tokens).subspan(lo, hi - lo);
  };
  return {slice(child.tokens), slice(parent.tokens)};
}

std::optional<double> window_divergence(const Branch& child, const Branch& parent,
                                        std::size_t window, SimilarityMetric metric) {
  const WindowSegments seg = window_segments(child, parent, window);
  if (seg.parent.empty()) return std::nullopt;
  if (seg.child.empty()) return 1.0;
  return divergence(metric, seg.child, seg.parent);
}

std::size_t prune_due_branches(std::vector<Branch>& branches, std::size_t step,
                               const LatrConfig& cfg, std::vector<TreeEvent>& events,
                               const PruneDecider* decider) {
  std::size_t pruned = 0;
  for (std::size_t id = 0; id < branches.size(); ++id) {
    Branch& b = branches[id];
    if (!b.alive()) continue;
    auto due = std::find(b.pending_checks.begin(), b.pending_checks.end(), step);
    if (due == b.pending_checks.end()) continue;
    b.pending_checks.erase(due);
    if (!b.parent) continue;

    const Branch& parent = branches[*b.parent];
    WindowCheck check;
    check.due_step = step;
    check.window = step - b.birth;
    check.distance = window_divergence(b, parent, check.window, cfg.prune_metric);
    bool prune = false;
    if (decider) {
      prune = (*decider)(b, check.window);
    } else if (check.distance) {
      prune = *check.distance < cfg.tau_ed;
    }
    check.passed = !prune;
    b.checks.push_back(check);
    if (!prune) continue;

    b.status = BranchStatus::pruned;
    b.pruned_at = step;
    b.pending_checks.clear();
    ++pruned;
    TreeEvent ev;
    ev.step = step;
    ev.kind = TreeEvent::Kind::prune;
    ev.branch_id = id;
    ev.parent_id = b.parent;
    ev.distance = check.distance;
    events.push_back(ev);

    // children always carry larger ids than their parents
    std::vector<bool> doomed(branches.size(), false);
    doomed[id] = true;
    for (std::size_t d = id + 1; d < branches.size(); ++d) {
      Branch& desc = branches[d];
      if (!desc.parent || !doomed[*desc.parent]) continue;
      doomed[d] = true;
      if (!desc.alive()) continue;
      desc.status = BranchStatus::pruned;
      desc.pruned_at = step;
      desc.pruned_via_ancestor = id;
      desc.pending_checks.clear();
      ++pruned;
      TreeEvent dev;
      dev.step = step;
      dev.kind = TreeEvent::Kind::prune;
      dev.branch_id = d;
      dev.parent_id = desc.parent;
      dev.ancestor_id = id;
      events.push_back(dev);
    }
  }
  return pruned;
}

// ---------------------------------------------------------------------------

LookaheadTree::LookaheadTree(const SoftmaxPolicy& policy, std::span<const TokenId> prompt,
                             TokenId eos, LatrConfig cfg, SamplingConfig sampling,
                             std::uint64_t prompt_id, LatrVariant variant)
    : policy_(policy),
      prompt_(prompt.begin(), prompt.end()),
      eos_(eos),
      cfg_(std::move(cfg)),
      sampling_(sampling),
      prompt_id_(prompt_id),
      variant_(variant),
      variant_rng_(stream_seed(sampling.seed, Stream::latr_variant, prompt_id)) {
  cfg_.validate();
  sampling_.validate();
  variant_.validate();
  Branch root;
  root.id = 0;
  branches_.push_back(root);
  width_by_step_.push_back(1);
  if (cfg_.k == 1) saturate();
}

std::size_t LookaheadTree::width() const {
  return static_cast<std::size_t>(
      std::count_if(branches_.begin(), branches_.end(), [](const Branch& b) { return b.alive(); }));
}

std::size_t LookaheadTree::active_count() const {
  return static_cast<std::size_t>(std::count_if(
      branches_.begin(), branches_.end(), [](const Branch& b) { return b.status == BranchStatus::active; }));
}

bool LookaheadTree::has_pending_checks() const {
  return std::any_of(branches_.begin(), branches_.end(),
                     [](const Branch& b) { return b.alive() && !b.pending_checks.empty(); });
}

void LookaheadTree::saturate() {
  saturated_ = true;
  stats_.saturation_step = step_;
  for (Branch& b : branches_) b.pending_checks.clear();
  TreeEvent ev;
  ev.step = step_;
  ev.kind = TreeEvent::Kind::saturate;
  events_.push_back(ev);
}

void LookaheadTree::branch_step() {
  if (saturated_) throw std::logic_error("branch_step on a saturated tree");
  ++step_;

  std::vector<PendingChild> pool;
  const std::size_t existing = branches_.size();
  for (std::size_t id = 0; id < existing; ++id) {
    Branch& b = branches_[id];
    if (b.status != BranchStatus::active) continue;

    const ProbVector dist = policy_.next_distribution(policy_.context_for(prompt_, b.tokens));
    ++stats_.forward_passes;
    const TokenId top = argmax(dist);

    if (variant_.kind == LatrVariant::Kind::random_branch) {
      if (variant_rng_.bernoulli(variant_.rate)) {
        ProbVector shaped = shape_distribution(dist, sampling_);
        shaped[static_cast<std::size_t>(top)] = 0.0;
        double mass = 0.0;
        for (double p : shaped) mass += p;
        if (mass > 0.0) {
          for (double& p : shaped) p /= mass;
          const TokenId pick = sample_token(shaped, variant_rng_);
          pool.push_back({id, b.tokens.size(), pick, dist[static_cast<std::size_t>(pick)], b.total_logprob});
        }
      }
    } else {
      for (const Candidate& c : candidate_set(dist, cfg_))
        pool.push_back({id, b.tokens.size(), c.token, c.probability, b.total_logprob});
    }

    b.tokens.push_back(top);
    b.total_logprob += std::log(dist[static_cast<std::size_t>(top)]);
    ++stats_.tokens_generated;
    if (top == eos_) {
      b.status = BranchStatus::complete;
      TreeEvent ev;
      ev.step = step_;
      ev.kind = TreeEvent::Kind::eos;
      ev.branch_id = id;
      ev.parent_id = b.parent;
      events_.push_back(ev);
    }
  }

  rank_children(pool);
  std::size_t alive = width();
  for (const PendingChild& pc : pool) {
    if (alive >= cfg_.k) break;
    Branch child;
    child.id = branches_.size();
    const Branch& parent = branches_[pc.parent];
    child.tokens.assign(parent.tokens.begin(), parent.tokens.begin() + static_cast<std::ptrdiff_t>(pc.prefix_len));
    child.tokens.push_back(pc.token);
    child.parent = pc.parent;
    child.birth = step_;
    child.branch_probability = pc.probability;
    child.total_logprob = pc.prefix_logprob + std::log(pc.probability);
    for (std::size_t w : cfg_.windows) child.pending_checks.push_back(step_ + w);
    ++stats_.branch_events;
    ++stats_.tokens_generated;

    TreeEvent ev;
    ev.step = step_;
    ev.kind = TreeEvent::Kind::branch;
    ev.branch_id = child.id;
    ev.parent_id = pc.parent;
    ev.probability = pc.probability;
    events_.push_back(ev);

    if (pc.token == eos_) {
      child.status = BranchStatus::complete;
      TreeEvent done;
      done.step = step_;
      done.kind = TreeEvent::Kind::eos;
      done.branch_id = child.id;
      done.parent_id = child.parent;
      events_.push_back(done);
    }
    branches_.push_back(std::move(child));
    ++alive;
  }

  width_by_step_.push_back(alive);
  if (alive >= cfg_.k) saturate();
}

void LookaheadTree::prune_step() {
  if (saturated_ || variant_.kind == LatrVariant::Kind::no_prune) return;
  if (variant_.kind == LatrVariant::Kind::random_prune) {
    const PruneDecider decider = [this](const Branch&, std::size_t) {
      return variant_rng_.bernoulli(variant_.rate);
    };
    stats_.pruned_count += prune_due_branches(branches_, step_, cfg_, events_, &decider);
  } else {
    stats_.pruned_count += prune_due_branches(branches_, step_, cfg_, events_);
  }
}

LatrResult LookaheadTree::run() {
  while (!saturated_ && step_ < cfg_.n) {
    if (active_count() == 0 && !has_pending_checks()) break;
    branch_step();
    prune_step();
  }

  if (saturated_) {
    std::vector<TreeEvent> tail;
    for (Branch& b : branches_) {
      if (b.status != BranchStatus::active) continue;
      Sequence seq{b.tokens, false, b.total_logprob};
      Rng rng(stream_seed(sampling_.seed, Stream::latr_continuation, prompt_id_, b.id));
      const std::size_t before = seq.tokens.size();
      continue_stochastic(policy_, prompt_, eos_, cfg_.n, sampling_, rng, seq, stats_.forward_passes);
      stats_.tokens_generated += seq.tokens.size() - before;
      b.tokens = std::move(seq.tokens);
      b.total_logprob = seq.total_logprob;
      b.status = BranchStatus::complete;
      if (b.tokens.back() == eos_) {
        TreeEvent ev;
        ev.step = b.tokens.size();
        ev.kind = TreeEvent::Kind::eos;
        ev.branch_id = b.id;
        ev.parent_id = b.parent;
        tail.push_back(ev);
      }
    }
    std::stable_sort(tail.begin(), tail.end(),
                     [](const TreeEvent& a, const TreeEvent& b) { return a.step < b.step; });
    events_.insert(events_.end(), tail.begin(), tail.end());
  }
  for (Branch& b : branches_)
    if (b.status == BranchStatus::active) b.status = BranchStatus::complete;  // hit the length cap

  LatrResult result;
  for (const Branch& b : branches_) {
    if (!b.alive()) continue;
    result.sequences.push_back(Sequence{b.tokens, true, b.total_logprob});
    result.origins.push_back(SequenceOrigin::latr);
    result.branch_ids.push_back(b.id);
  }
  if (result.sequences.size() < cfg_.k) {
    const std::size_t need = cfg_.k - result.sequences.size();
    RolloutBatch pad = stochastic_rollout(policy_, prompt_, eos_, need, cfg_.n, sampling_,
                                          prompt_id_, Stream::latr_padding);
    stats_.padding_forward_passes += pad.forward_passes;
    stats_.padded += need;
    for (Sequence& s : pad.sequences) {
      result.sequences.push_back(std::move(s));
      result.origins.push_back(SequenceOrigin::padding);
      result.branch_ids.push_back(std::nullopt);
    }
  }
  result.stats = stats_;
  result.events = events_;
  result.branches = branches_;
  result.width_by_step = width_by_step_;
  return result;
}

LatrResult latr_rollout(const SoftmaxPolicy& policy, std::span<const TokenId> prompt, TokenId eos,
                        const LatrConfig& cfg, const SamplingConfig& sampling,
                        std::uint64_t prompt_id) {
  return LookaheadTree(policy, prompt, eos, cfg, sampling, prompt_id).run();
}

LatrResult latr_variant_rollout(const SoftmaxPolicy& policy, std::span<const TokenId> prompt,
                                TokenId eos, const LatrConfig& cfg,
                                const SamplingConfig& sampling, LatrVariant variant,
                                std::uint64_t prompt_id) {
  return LookaheadTree(policy, prompt, eos, cfg, sampling, prompt_id, variant).run();
}

}  // namespace rolloutlab
