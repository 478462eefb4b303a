#include "rolloutlab/fixtures.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

namespace rolloutlab {

SoftmaxPolicy collapse_policy(const CountdownEnv& env, std::span<const TokenId> prompt,
                              std::size_t context_order) {
  const std::size_t v = env.vocab().size();
  if (v < 4) throw std::invalid_argument("collapse_policy needs at least 4 tokens");
  SoftmaxPolicy policy(v, context_order);
  std::vector<double> probs(v, 0.04 / static_cast<double>(v - 3));
  probs[0] = 0.36;
  probs[1] = 0.30;
  probs[2] = 0.30;
  std::vector<double> logits(v);
  for (std::size_t i = 0; i < v; ++i) logits[i] = std::log(probs[i]);
  policy.set_row(policy.context_for(prompt, {}), std::move(logits));
  return policy;
}

SoftmaxPolicy oracle_policy(const CountdownEnv& env, std::span<const CountdownTask> tasks,
                            std::size_t context_order) {
  constexpr double kLogit = 30.0;
  const std::size_t v = env.vocab().size();
  SoftmaxPolicy policy(v, context_order);
  std::map<ContextKey, TokenId> wanted;
  for (const CountdownTask& task : tasks) {
    const auto solutions = solve_oracle(task.numbers, task.target);
    if (solutions.empty()) throw std::invalid_argument("oracle_policy: unsolvable task");
    const std::vector<TokenId> completion = env.render_completion(solutions.front());
    for (std::size_t l = 0; l < completion.size(); ++l) {
      const ContextKey ctx = policy.context_for(task.prompt_tokens, std::span(completion).first(l));
      auto [it, inserted] = wanted.emplace(ctx, completion[l]);
      if (!inserted && it->second != completion[l])
        throw std::invalid_argument("oracle_policy: context " + ctx.to_string() +
                                    " is ambiguous at order " + std::to_string(context_order));
    }
  }
  for (const auto& [ctx, token] : wanted) {
    std::vector<double> row(v, 0.0);
    row[static_cast<std::size_t>(token)] = kLogit;
    policy.set_row(ctx, std::move(row));
  }
  return policy;
}

}  // namespace rolloutlab
