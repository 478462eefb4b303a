#include "rolloutlab/training.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rolloutlab {

std::string_view to_string(Algo algo) { return algo == Algo::grpo ? "grpo" : "dapo"; }

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::latr: return "latr";
    case Strategy::stochastic: return "stochastic";
    case Strategy::sr: return "sr";
    case Strategy::latr_variant: return "latr_variant";
  }
  return "latr";
}

Algo parse_algo(std::string_view name) {
  if (name == "grpo") return Algo::grpo;
  if (name == "dapo") return Algo::dapo;
  throw std::invalid_argument("unknown algo '" + std::string(name) + "' (expected grpo or dapo)");
}

Strategy parse_strategy(std::string_view name) {
  if (name == "latr") return Strategy::latr;
  if (name == "stochastic") return Strategy::stochastic;
  if (name == "sr") return Strategy::sr;
  if (name == "latr_variant") return Strategy::latr_variant;
  throw std::invalid_argument("unknown strategy '" + std::string(name) +
                              "' (expected latr, stochastic, sr or latr_variant)");
}

void TrainConfig::validate() const {
  latr.validate();
  variant.validate();
  sampling.validate();
  eval_sampling.validate();
  hybrid.validate();
  grpo.validate();
  dapo.validate();
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (eval_samples < 1) throw std::invalid_argument("eval_samples must be >= 1");
  if (latr.k < 2) throw std::invalid_argument("k must be >= 2 for group advantages");
  if (strategy == Strategy::sr && sr_oversample < latr.k)
    throw std::invalid_argument("sr_oversample must be >= k");
  if (strategy == Strategy::latr_variant && variant.kind == LatrVariant::Kind::none)
    throw std::invalid_argument("strategy latr_variant needs a variant other than none");
}

GroupRollout generate_group(const SoftmaxPolicy& policy, const CountdownEnv& env,
                            const CountdownTask& task, std::size_t task_index,
                            const TrainConfig& cfg, std::size_t step, std::uint64_t slot) {
  SamplingConfig sampling = cfg.sampling;
  sampling.seed = mix_seed(cfg.seed, {step});
  const std::size_t k = cfg.latr.k;
  const std::size_t n = cfg.latr.n;
  const auto& prompt = task.prompt_tokens;

  GroupRollout out;
  Group& g = out.group;
  g.prompt = prompt;
  g.task_index = task_index;

  auto append = [&](std::vector<Sequence>& seqs, SequenceOrigin origin) {
    for (Sequence& s : seqs) {
      g.sequences.push_back(std::move(s));
      g.origins.push_back(origin);
    }
  };

  switch (cfg.strategy) {
    case Strategy::stochastic: {
      RolloutBatch b = stochastic_rollout(policy, prompt, env.eos(), k, n, sampling, slot);
      out.forward_passes = b.forward_passes;
      append(b.sequences, SequenceOrigin::stochastic);
      break;
    }
    case Strategy::sr: {
      SrConfig sr;
      sr.oversample_count = cfg.sr_oversample;
      sr.keep_count = k;
      SrResult r = sr_rollout(policy, prompt, env.eos(), sr, sampling, n, slot);
      out.forward_passes = r.forward_passes;
      append(r.sequences, SequenceOrigin::stochastic);
      break;
    }
    case Strategy::latr:
    case Strategy::latr_variant: {
      const HybridAllocation alloc = hybrid_allocate(k, step, cfg.hybrid);
      out.eta = alloc.eta;
      if (alloc.k_latr > 0) {
        LatrConfig lc = cfg.latr;
        lc.k = alloc.k_latr;
        LatrResult r = cfg.strategy == Strategy::latr
                           ? latr_rollout(policy, prompt, env.eos(), lc, sampling, slot)
                           : latr_variant_rollout(policy, prompt, env.eos(), lc, sampling, cfg.variant, slot);
        out.forward_passes += r.stats.total_forward_passes();
        out.tree = r.stats;
        for (std::size_t i = 0; i < r.sequences.size(); ++i) {
          g.sequences.push_back(std::move(r.sequences[i]));
          g.origins.push_back(r.origins[i]);
        }
      }
      if (alloc.k_std > 0) {
        RolloutBatch b = stochastic_rollout(policy, prompt, env.eos(), alloc.k_std, n, sampling,
                                            slot, Stream::hybrid_std);
        out.forward_passes += b.forward_passes;
        append(b.sequences, SequenceOrigin::stochastic);
      }
      break;
    }
  }

  for (const Sequence& s : g.sequences) g.rewards.push_back(env.reward(task, s.tokens).total);
  normalize_group(g);
  return out;
}

std::vector<TraceRow> train_loop(SoftmaxPolicy& policy, const CountdownEnv& env,
                                 std::span<const CountdownTask> train_tasks,
                                 std::span<const CountdownTask> val_tasks,
                                 const TrainConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  if (cfg.steps > 0 && train_tasks.empty()) throw std::invalid_argument("train_loop: no training tasks");
  const SoftmaxPolicy reference = policy.snapshot(PolicyRole::reference);
  std::vector<TraceRow> rows;

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const SoftmaxPolicy old_policy = policy.snapshot(PolicyRole::old);
    Rng batch_rng(stream_seed(cfg.seed, Stream::batch, step));
    std::uint64_t slot = 0;
    std::vector<GroupRollout> all;

    auto next_group = [&]() -> Group {
      const std::size_t idx = batch_rng.below(train_tasks.size());
      all.push_back(generate_group(old_policy, env, train_tasks[idx], idx, cfg, step, slot++));
      return all.back().group;
    };

    std::size_t draws = cfg.batch_size;
    if (cfg.algo == Algo::dapo)
      draws = static_cast<std::size_t>(std::ceil(static_cast<double>(cfg.batch_size) * cfg.dapo.oversample_factor));
    std::vector<Group> groups;
    for (std::size_t i = 0; i < draws; ++i) groups.push_back(next_group());

    TraceRow row;
    row.step = step + 1;
    row.algo = std::string(to_string(cfg.algo));
    row.strategy = std::string(to_string(cfg.strategy));

    auto summarize = [&]() {
      double reward_sum = 0.0;
      std::size_t reward_count = 0;
      std::vector<std::vector<Completion>> completions;
      std::vector<TreeStats> trees;
      row.fwd_passes = 0;
      for (const GroupRollout& gr : all) {
        for (double r : gr.group.rewards) reward_sum += r;
        reward_count += gr.group.rewards.size();
        std::vector<Completion> c;
        for (const Sequence& s : gr.group.sequences) c.push_back(s.tokens);
        completions.push_back(std::move(c));
        if (gr.tree) trees.push_back(*gr.tree);
        row.fwd_passes += gr.forward_passes;
        row.eta = gr.eta;
      }
      row.reward_mean = reward_count ? reward_sum / static_cast<double>(reward_count) : 0.0;
      const DiversityStats d = diversity_stats(completions, env);
      row.distinct_mean = d.distinct_answers_mean;
      row.pairwise_dist = d.mean_pairwise_distance;
      if (!trees.empty()) {
        const RolloutStats rs = rollout_stats(trees);
        row.branch_ratio = rs.branching_ratio;
        row.sat_len = rs.saturation_length_mean;
      }
    };

    if (cfg.algo == Algo::dapo) {
      groups = dapo_filter(std::move(groups), cfg.batch_size, next_group, cfg.max_regenerations);
    }

    summarize();
    if (cfg.algo == Algo::grpo) {
      const ObjectiveResult obj = grpo_step(groups, policy, old_policy, reference, cfg.grpo);
      policy.apply_gradient(obj.gradient, cfg.grpo.learning_rate);
    } else {
      const ObjectiveResult obj = dapo_step(groups, policy, old_policy, cfg.dapo);
      policy.apply_gradient(obj.gradient, cfg.dapo.learning_rate);
    }

    const bool last = step + 1 == cfg.steps;
    const bool due = cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0;
    if (!val_tasks.empty() && (last || due)) {
      SamplingConfig es = cfg.eval_sampling;
      es.seed = cfg.seed;
      const EvalReport rep = evaluate_policy(policy, env, val_tasks, es, cfg.eval_samples, cfg.latr.n);
      row.pass1 = rep.pass1;
      row.pass8 = rep.pass8;
      row.len1 = rep.len1;
      row.len8 = rep.len8;
    }
    rows.push_back(row);
    if (on_step) on_step(row, policy);
  }
  return rows;
}

std::optional<std::size_t> steps_to_threshold(std::span<const TraceRow> rows, double threshold) {
  for (const TraceRow& r : rows)
    if (r.pass1 && *r.pass1 >= threshold) return r.step;
  return std::nullopt;
}

std::optional<double> final_pass1(std::span<const TraceRow> rows) {
  for (auto it = rows.rbegin(); it != rows.rend(); ++it)
    if (it->pass1) return it->pass1;
  return std::nullopt;
}

}  // namespace rolloutlab
