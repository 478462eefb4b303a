#pragma once

#include <cstddef>
#include <span>

#include "rolloutlab/countdown.hpp"
#include "rolloutlab/token_policy.hpp"

namespace rolloutlab {

/// Policy whose first step offers two qualifying alternatives (0.36 vs 0.30,
/// 0.30) and is uniform everywhere else, so every branch follows the same
/// lowest-id argmax line as its parent and is pruned at its first window.
SoftmaxPolicy collapse_policy(const CountdownEnv& env, std::span<const TokenId> prompt,
                              std::size_t context_order);

/// Policy that emits the first oracle solution of every task with
/// near-certainty. Throws std::invalid_argument when two tasks need different
/// tokens at the same context; raise the context order in that case.
SoftmaxPolicy oracle_policy(const CountdownEnv& env, std::span<const CountdownTask> tasks,
                            std::size_t context_order);

}  // namespace rolloutlab
