#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "rolloutlab/countdown.hpp"
#include "rolloutlab/lookahead_tree.hpp"
#include "rolloutlab/metrics.hpp"
#include "rolloutlab/rl_core.hpp"
#include "rolloutlab/sampling.hpp"

namespace rolloutlab {

enum class Algo { grpo, dapo };
enum class Strategy { latr, stochastic, sr, latr_variant };

std::string_view to_string(Algo algo);
std::string_view to_string(Strategy strategy);
Algo parse_algo(std::string_view name);
Strategy parse_strategy(std::string_view name);

struct TrainConfig {
  Algo algo = Algo::grpo;
  Strategy strategy = Strategy::latr;
  /// k and n live here.
  LatrConfig latr;
  LatrVariant variant;
  /// Rollout sampling; its seed field is replaced per step.
  SamplingConfig sampling;
  SamplingConfig eval_sampling{0.6, 20, 0.95, 0};
  std::size_t eval_samples = 8;
  std::size_t sr_oversample = 16;
  HybridSchedule hybrid;
  GrpoConfig grpo;
  DapoConfig dapo;
  /// Prompts per update.
  std::size_t batch_size = 8;
  std::size_t steps = 500;
  /// Validate every this many steps and on the last one; 0 = last step only.
  std::size_t eval_every = 10;
  /// Regeneration cap for the DAPO filter, per step.
  std::size_t max_regenerations = 1024;
  std::uint64_t seed = 1;

  void validate() const;
};

/// One prompt's rollouts with the bookkeeping the trace needs.
struct GroupRollout {
  Group group;
  std::optional<TreeStats> tree;
  std::size_t forward_passes = 0;
  double eta = 0.0;
};

/// Generates and scores one group. With the latr strategies the budget is
/// split by hybrid_allocate and both parts are normalized together.
GroupRollout generate_group(const SoftmaxPolicy& policy, const CountdownEnv& env,
                            const CountdownTask& task, std::size_t task_index,
                            const TrainConfig& cfg, std::size_t step, std::uint64_t slot);

/// Called after every update with the row just recorded.
using StepCallback = std::function<void(const TraceRow&, const SoftmaxPolicy&)>;

/// Rollout, score, (filter), normalize, one gradient-ascent update per step.
/// Throws FilterExhausted from the DAPO filter; rows already produced have
/// been delivered through `on_step`.
std::vector<TraceRow> train_loop(SoftmaxPolicy& policy, const CountdownEnv& env,
                                 std::span<const CountdownTask> train_tasks,
                                 std::span<const CountdownTask> val_tasks,
                                 const TrainConfig& cfg, const StepCallback& on_step = {});

/// First recorded step whose validation pass@1 reaches `threshold`.
std::optional<std::size_t> steps_to_threshold(std::span<const TraceRow> rows, double threshold);

/// Last recorded validation pass@1.
std::optional<double> final_pass1(std::span<const TraceRow> rows);

}  // namespace rolloutlab
