#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace rolloutlab {

using TokenId = std::int32_t;

/// Reserved id used only for left-padding context windows. Never emitted.
inline constexpr TokenId kBeginMarker = -1;

/// Normalized next-token distribution over the vocabulary.
using ProbVector = std::vector<double>;

/// True when every entry is non-negative and the entries sum to 1 within tol.
bool is_prob_vector(std::span<const double> probs, double tol = 1e-9);

/// Lowest-id argmax.
TokenId argmax(std::span<const double> probs);

class Vocabulary {
 public:
  Vocabulary(std::vector<std::string> tokens, TokenId eos);

  std::size_t size() const { return tokens_.size(); }
  TokenId eos() const { return eos_; }
  const std::string& surface(TokenId id) const;
  std::optional<TokenId> find(std::string_view surface) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Space-joined surface strings.
  std::string detokenize(std::span<const TokenId> ids) const;
  /// Inverse of detokenize; throws std::invalid_argument on unknown words.
  std::vector<TokenId> tokenize(std::string_view text) const;

  bool operator==(const Vocabulary&) const = default;

 private:
  std::vector<std::string> tokens_;
  TokenId eos_;
  std::unordered_map<std::string, TokenId> index_;
};

/// The last `order` tokens of prompt ⊕ partial completion, left-padded with
/// kBeginMarker.
class ContextKey {
 public:
  ContextKey() = default;
  explicit ContextKey(std::vector<TokenId> window) : window_(std::move(window)) {}

  static ContextKey from_history(std::span<const TokenId> prompt,
                                 std::span<const TokenId> completion, std::size_t order);

  const std::vector<TokenId>& window() const { return window_; }
  std::size_t order() const { return window_.size(); }

  /// Comma-separated ids; the begin marker renders as -1.
  std::string to_string() const;
  static ContextKey parse(std::string_view text);

  bool operator==(const ContextKey&) const = default;
  auto operator<=>(const ContextKey&) const = default;

 private:
  std::vector<TokenId> window_;
};

struct ContextKeyHash {
  std::size_t operator()(const ContextKey& key) const noexcept;
};

/// Sparse gradient over logit rows; absent rows are zero.
using LogitGradient = std::unordered_map<ContextKey, std::vector<double>, ContextKeyHash>;

enum class PolicyRole { current, old, reference };

std::string_view to_string(PolicyRole role);
PolicyRole parse_policy_role(std::string_view text);

/// Tabular softmax policy: one logit row per context. Unseen contexts behave
/// as zero rows, i.e. the uniform distribution.
///
/// Reads are const and safe to share across threads; mutation needs exclusive
/// access.
class SoftmaxPolicy {
 public:
  SoftmaxPolicy(std::size_t vocab_size, std::size_t context_order,
                PolicyRole role = PolicyRole::current);

  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t context_order() const { return context_order_; }
  PolicyRole role() const { return role_; }

  ContextKey context_for(std::span<const TokenId> prompt,
                         std::span<const TokenId> completion) const {
    return ContextKey::from_history(prompt, completion, context_order_);
  }

  /// Softmax of the context's logit row.
  ProbVector next_distribution(const ContextKey& context) const;
  double token_logprob(const ContextKey& context, TokenId token) const;
  /// d log pi(token | context) / d logits(context, .) = onehot(token) - pi.
  std::vector<double> logprob_grad(const ContextKey& context, TokenId token) const;
  /// Exact categorical KL(this || reference) at one context.
  double kl_to(const SoftmaxPolicy& reference, const ContextKey& context) const;

  /// Logit row; a shared zero row when the context is unseen.
  std::span<const double> row(const ContextKey& context) const;
  void set_row(const ContextKey& context, std::vector<double> logits);
  /// logits += step * gradient, row by row.
  void apply_gradient(const LogitGradient& gradient, double step);

  /// Deep copy under another role (old / reference snapshots).
  SoftmaxPolicy snapshot(PolicyRole role) const;

  std::size_t row_count() const { return rows_.size(); }
  const std::unordered_map<ContextKey, std::vector<double>, ContextKeyHash>& rows() const {
    return rows_;
  }

  /// Checkpoint form: rows keyed by ContextKey::to_string, sorted by key.
  nlohmann::json to_json() const;
  static SoftmaxPolicy from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static SoftmaxPolicy load(const std::filesystem::path& path);

  /// Logit tables compared exactly; role is ignored.
  bool same_logits(const SoftmaxPolicy& other) const;

 private:
  std::size_t vocab_size_;
  std::size_t context_order_;
  PolicyRole role_;
  std::vector<double> zero_row_;
  std::unordered_map<ContextKey, std::vector<double>, ContextKeyHash> rows_;
};

/// Numerically stable softmax.
ProbVector softmax(std::span<const double> logits);

}  // namespace rolloutlab
