#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rolloutlab/rng.hpp"
#include "rolloutlab/token_policy.hpp"

namespace rolloutlab {

/// Exact rational in lowest terms with a positive denominator.
class Rational {
 public:
  Rational(std::int64_t num = 0, std::int64_t den = 1);

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  bool is_integer() const { return den_ == 1; }
  std::string to_string() const;

  friend Rational operator+(const Rational& a, const Rational& b);
  friend Rational operator-(const Rational& a, const Rational& b);
  friend Rational operator*(const Rational& a, const Rational& b);
  /// Throws EvalError on a zero divisor.
  friend Rational operator/(const Rational& a, const Rational& b);
  bool operator==(const Rational&) const = default;
  bool operator<(const Rational& o) const;

 private:
  std::int64_t num_;
  std::int64_t den_;
};

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Op : char { add = '+', sub = '-', mul = '*', div = '/' };

/// Binary arithmetic tree over integer leaves, stored as an arena.
class Expression {
 public:
  struct Node {
    bool leaf = true;
    std::int64_t value = 0;
    Op op = Op::add;
    int left = -1;
    int right = -1;
  };

  static Expression leaf(std::int64_t value);
  static Expression combine(Op op, const Expression& lhs, const Expression& rhs);

  /// Throws EvalError on division by zero.
  Rational evaluate() const;
  /// True when every division node evaluates to an integer (and no divisor is 0).
  bool divisions_exact() const;
  std::vector<std::int64_t> leaves() const;
  /// Space-separated infix with the parentheses precedence requires.
  std::string render() const;
  std::vector<std::string> words() const;

  const std::vector<Node>& nodes() const { return nodes_; }
  int root() const { return root_; }

 private:
  Rational eval_node(int idx, bool* exact) const;
  void render_node(int idx, std::vector<std::string>& out) const;

  std::vector<Node> nodes_;
  int root_ = -1;
};

/// Parses "a + b * ( c - d )" style word lists; precedence and left
/// associativity as usual. Returns nullopt on any syntax error.
std::optional<Expression> parse_expression(std::span<const std::string> words);

struct EnvConfig {
  std::size_t count = 3;
  std::int64_t value_min = 1;
  std::int64_t value_max = 9;
  std::int64_t target_min = 1;
  std::int64_t target_max = 30;
  std::size_t max_attempts = 10000;

  void validate() const;
};

/// Answer-region markers and end of sequence.
inline constexpr const char* kAnswerOpen = "<ans>";
inline constexpr const char* kAnswerClose = "</ans>";
inline constexpr const char* kEos = "<eos>";

/// "1".."N" with N = max(value_max, target_max), the operators, "(", ")",
/// "=", the answer markers, and EOS last.
Vocabulary countdown_vocabulary(const EnvConfig& cfg);

struct CountdownTask {
  /// Sorted ascending.
  std::vector<std::int64_t> numbers;
  std::int64_t target = 0;
  /// numbers, "=", target.
  std::vector<TokenId> prompt_tokens;
};

struct ParseResult {
  bool format = false;
  std::optional<Expression> expr;
};

struct RewardBreakdown {
  int format = 0;
  int correctness = 0;
  double total = 0.0;
};

/// Every expression over all of the task's numbers that evaluates to the
/// target with exact divisions, deduplicated by rendering. Results are cached
/// per (numbers, target); safe to call concurrently.
std::vector<Expression> solve_oracle(std::span<const std::int64_t> numbers, std::int64_t target);

class CountdownEnv {
 public:
  explicit CountdownEnv(EnvConfig cfg = {});

  const EnvConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  TokenId eos() const { return vocab_.eos(); }

  /// Builds the prompt; throws std::invalid_argument when a number has no token.
  CountdownTask make_task(std::vector<std::int64_t> numbers, std::int64_t target) const;
  /// Rejection-samples a solvable task. Throws std::runtime_error after
  /// max_attempts draws.
  CountdownTask generate_task(Rng& rng) const;
  std::vector<CountdownTask> generate_tasks(std::uint64_t seed, Stream stream, std::size_t count) const;

  ParseResult parse_completion(std::span<const TokenId> tokens) const;
  RewardBreakdown reward(const CountdownTask& task, std::span<const TokenId> completion) const;
  /// Unparseable completions (and division-by-zero ones) form one class per
  /// literal token string; parseable ones are grouped by value.
  std::size_t distinct_answers(std::span<const std::vector<TokenId>> group) const;
  /// "<ans> expr </ans> <eos>".
  std::vector<TokenId> render_completion(const Expression& expr) const;

  std::vector<CountdownTask> load_tasks(const std::filesystem::path& path) const;
  static void save_tasks(const std::filesystem::path& path, std::span<const CountdownTask> tasks);
  static std::string task_to_jsonl(std::span<const CountdownTask> tasks);

 private:
  EnvConfig cfg_;
  Vocabulary vocab_;
  TokenId open_;
  TokenId close_;
};

}  // namespace rolloutlab
