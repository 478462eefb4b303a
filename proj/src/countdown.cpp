#include "rolloutlab/countdown.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <utility>

#include <json.hpp>

namespace rolloutlab {

Rational::Rational(std::int64_t num, std::int64_t den) {
  if (den == 0) throw EvalError("division by zero");
  if (den < 0) num = -num, den = -den;
  const std::int64_t g = std::gcd(num, den);
  num_ = num / g;
  den_ = den / g;
}

std::string Rational::to_string() const {
  return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_);
}

Rational operator+(const Rational& a, const Rational& b) {
  return Rational(a.num_ * b.den_ + b.num_ * a.den_, a.den_ * b.den_);
}
Rational operator-(const Rational& a, const Rational& b) {
  return Rational(a.num_ * b.den_ - b.num_ * a.den_, a.den_ * b.den_);
}
Rational operator*(const Rational& a, const Rational& b) {
  return Rational(a.num_ * b.num_, a.den_ * b.den_);
}
Rational operator/(const Rational& a, const Rational& b) {
  if (b.num_ == 0) throw EvalError("division by zero");
  return Rational(a.num_ * b.den_, a.den_ * b.num_);
}
bool Rational::operator<(const Rational& o) const {
  return static_cast<__int128>(num_) * o.den_ < static_cast<__int128>(o.num_) * den_;
}

// ---------------------------------------------------------------------------

Expression Expression::leaf(std::int64_t value) {
  Expression e;
  e.nodes_.push_back({true, value, Op::add, -1, -1});
  e.root_ = 0;
  return e;
}

Expression Expression::combine(Op op, const Expression& lhs, const Expression& rhs) {
  Expression e;
  e.nodes_ = lhs.nodes_;
  const int offset = static_cast<int>(e.nodes_.size());
  for (Node n : rhs.nodes_) {
    if (!n.leaf) n.left += offset, n.right += offset;
    e.nodes_.push_back(n);
  }
  e.nodes_.push_back({false, 0, op, lhs.root_, rhs.root_ + offset});
  e.root_ = static_cast<int>(e.nodes_.size()) - 1;
  return e;
}

Rational Expression::eval_node(int idx, bool* exact) const {
  const Node& n = nodes_[static_cast<std::size_t>(idx)];
  if (n.leaf) return Rational(n.value);
  const Rational a = eval_node(n.left, exact);
  const Rational b = eval_node(n.right, exact);
  switch (n.op) {
    case Op::add: return a + b;
    case Op::sub: return a - b;
    case Op::mul: return a * b;
    case Op::div: {
      const Rational q = a / b;
      if (exact && !q.is_integer()) *exact = false;
      return q;
    }
  }
  return a;
}

Rational Expression::evaluate() const {
  if (root_ < 0) throw EvalError("empty expression");
  return eval_node(root_, nullptr);
}

bool Expression::divisions_exact() const {
  bool exact = true;
  try {
    eval_node(root_, &exact);
  } catch (const EvalError&) {
    return false;
  }
  return exact;
}

std::vector<std::int64_t> Expression::leaves() const {
  std::vector<std::int64_t> out;
  for (const Node& n : nodes_)
    if (n.leaf) out.push_back(n.value);
  return out;
}

namespace {
int precedence(Op op) { return (op == Op::add || op == Op::sub) ? 1 : 2; }
}  // namespace

void Expression::render_node(int idx, std::vector<std::string>& out) const {
  const Node& n = nodes_[static_cast<std::size_t>(idx)];
  if (n.leaf) {
    out.push_back(std::to_string(n.value));
    return;
  }
  const Node& l = nodes_[static_cast<std::size_t>(n.left)];
  const Node& r = nodes_[static_cast<std::size_t>(n.right)];
  const bool wrap_l = !l.leaf && precedence(l.op) < precedence(n.op);
  const bool wrap_r = !r.leaf && (precedence(r.op) < precedence(n.op) ||
                                  (precedence(r.op) == precedence(n.op) &&
                                   (n.op == Op::sub || n.op == Op::div)));
  if (wrap_l) out.push_back("(");
  render_node(n.left, out);
  if (wrap_l) out.push_back(")");
  out.push_back(std::string(1, static_cast<char>(n.op)));
  if (wrap_r) out.push_back("(");
  render_node(n.right, out);
  if (wrap_r) out.push_back(")");
}

std::vector<std::string> Expression::words() const {
  std::vector<std::string> out;
  if (root_ >= 0) render_node(root_, out);
  return out;
}

std::string Expression::render() const {
  std::string s;
  for (const std::string& w : words()) {
    if (!s.empty()) s += ' ';
    s += w;
  }
  return s;
}

namespace {

class Parser {
 public:
  explicit Parser(std::span<const std::string> words) : words_(words) {}

  std::optional<Expression> run() {
    auto e = expr();
    if (!e || pos_ != words_.size()) return std::nullopt;
    return e;
  }

 private:
  const std::string* peek() const { return pos_ < words_.size() ? &words_[pos_] : nullptr; }

  std::optional<Expression> expr() {
    auto lhs = term();
    while (lhs && peek() && (*peek() == "+" || *peek() == "-")) {
      const Op op = (*peek())[0] == '+' ? Op::add : Op::sub;
      ++pos_;
      auto rhs = term();
      if (!rhs) return std::nullopt;
      lhs = Expression::combine(op, *lhs, *rhs);
    }
    return lhs;
  }

  std::optional<Expression> term() {
    auto lhs = factor();
    while (lhs && peek() && (*peek() == "*" || *peek() == "/")) {
      const Op op = (*peek())[0] == '*' ? Op::mul : Op::div;
      ++pos_;
      auto rhs = factor();
      if (!rhs) return std::nullopt;
      lhs = Expression::combine(op, *lhs, *rhs);
    }
    return lhs;
  }

  std::optional<Expression> factor() {
    const std::string* w = peek();
    if (!w) return std::nullopt;
    if (*w == "(") {
      ++pos_;
      auto inner = expr();
      if (!inner || !peek() || *peek() != ")") return std::nullopt;
      ++pos_;
      return inner;
    }
    if (w->empty() || w->size() > 15 ||
        !std::all_of(w->begin(), w->end(), [](char c) { return c >= '0' && c <= '9'; }))
      return std::nullopt;
    ++pos_;
    return Expression::leaf(std::stoll(*w));
  }

  std::span<const std::string> words_;
  std::size_t pos_ = 0;
};

}  // namespace

std::optional<Expression> parse_expression(std::span<const std::string> words) {
  return Parser(words).run();
}

// ---------------------------------------------------------------------------

void EnvConfig::validate() const {
  if (count < 1 || count > 5) throw std::invalid_argument("env count must lie in [1, 5]");
  if (value_min < 1 || value_max < value_min)
    throw std::invalid_argument("env value range must be non-empty and positive");
  if (target_min < 1 || target_max < target_min)
    throw std::invalid_argument("env target range must be non-empty and positive");
  if (std::max(value_max, target_max) > 10000)
    throw std::invalid_argument("env ranges must stay <= 10000 (one token per number)");
  if (max_attempts < 1) throw std::invalid_argument("env max_attempts must be >= 1");
}

Vocabulary countdown_vocabulary(const EnvConfig& cfg) {
  std::vector<std::string> tokens;
  const std::int64_t top = std::max(cfg.value_max, cfg.target_max);
  for (std::int64_t v = 1; v <= top; ++v) tokens.push_back(std::to_string(v));
  for (const char* s : {"+", "-", "*", "/", "(", ")", "=", kAnswerOpen, kAnswerClose, kEos})
    tokens.emplace_back(s);
  const auto eos = static_cast<TokenId>(tokens.size() - 1);
  return Vocabulary(std::move(tokens), eos);
}

namespace {

using OracleKey = std::pair<std::vector<std::int64_t>, std::int64_t>;

struct OracleCache {
  std::mutex mu;
  std::map<OracleKey, std::vector<Expression>> entries;
};

OracleCache& oracle_cache() {
  static OracleCache cache;
  return cache;
}

struct Partial {
  Expression expr;
  Rational value;
};

void enumerate(std::vector<Partial>& pool, std::int64_t target, std::set<std::string>& seen,
               std::vector<Expression>& out) {
  if (pool.size() == 1) {
    if (pool[0].value == Rational(target)) {
      // keep only renderings that reparse to an exact, on-target tree
      auto reparsed = parse_expression(pool[0].expr.words());
      if (reparsed && reparsed->divisions_exact() && reparsed->evaluate() == Rational(target) &&
          seen.insert(reparsed->render()).second)
        out.push_back(std::move(*reparsed));
    }
    return;
  }
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (std::size_t j = 0; j < pool.size(); ++j) {
      if (i == j) continue;
      std::vector<Partial> rest;
      for (std::size_t r = 0; r < pool.size(); ++r)
        if (r != i && r != j) rest.push_back(pool[r]);
      const Partial& a = pool[i];
      const Partial& b = pool[j];
      for (Op op : {Op::add, Op::sub, Op::mul, Op::div}) {
        Rational v;
        switch (op) {
          case Op::add: v = a.value + b.value; break;
          case Op::sub: v = a.value - b.value; break;
          case Op::mul: v = a.value * b.value; break;
          case Op::div:
            if (b.value.num() == 0) continue;
            v = a.value / b.value;
            if (!v.is_integer()) continue;
            break;
        }
        rest.push_back({Expression::combine(op, a.expr, b.expr), v});
        enumerate(rest, target, seen, out);
        rest.pop_back();
      }
    }
  }
}

}  // namespace

std::vector<Expression> solve_oracle(std::span<const std::int64_t> numbers, std::int64_t target) {
  if (numbers.empty() || numbers.size() > 5)
    throw std::invalid_argument("solve_oracle supports 1..5 numbers");
  OracleKey key{std::vector<std::int64_t>(numbers.begin(), numbers.end()), target};
  std::sort(key.first.begin(), key.first.end());

  OracleCache& cache = oracle_cache();
  std::lock_guard<std::mutex> lock(cache.mu);
  auto it = cache.entries.find(key);
  if (it != cache.entries.end()) return it->second;

  std::vector<Partial> pool;
  for (std::int64_t v : key.first) pool.push_back({Expression::leaf(v), Rational(v)});
  std::set<std::string> seen;
  std::vector<Expression> out;
  enumerate(pool, target, seen, out);
  std::sort(out.begin(), out.end(),
            [](const Expression& a, const Expression& b) { return a.render() < b.render(); });
  cache.entries.emplace(std::move(key), out);
  return out;
}

// ---------------------------------------------------------------------------

CountdownEnv::CountdownEnv(EnvConfig cfg)
    : cfg_((cfg.validate(), cfg)),
      vocab_(countdown_vocabulary(cfg_)),
      open_(*vocab_.find(kAnswerOpen)),
      close_(*vocab_.find(kAnswerClose)) {}

CountdownTask CountdownEnv::make_task(std::vector<std::int64_t> numbers, std::int64_t target) const {
  if (numbers.empty()) throw std::invalid_argument("task needs at least one number");
  std::sort(numbers.begin(), numbers.end());
  CountdownTask task;
  task.target = target;
  auto token_for = [&](std::int64_t v) {
    auto id = vocab_.find(std::to_string(v));
    if (v < 1 || !id) throw std::invalid_argument("number " + std::to_string(v) + " has no token");
    return *id;
  };
  for (std::int64_t v : numbers) task.prompt_tokens.push_back(token_for(v));
  task.prompt_tokens.push_back(*vocab_.find("="));
  task.prompt_tokens.push_back(token_for(target));
  task.numbers = std::move(numbers);
  return task;
}

CountdownTask CountdownEnv::generate_task(Rng& rng) const {
  const auto span_v = static_cast<std::size_t>(cfg_.value_max - cfg_.value_min + 1);
  const auto span_t = static_cast<std::size_t>(cfg_.target_max - cfg_.target_min + 1);
  for (std::size_t attempt = 0; attempt < cfg_.max_attempts; ++attempt) {
    std::vector<std::int64_t> numbers(cfg_.count);
    for (auto& v : numbers) v = cfg_.value_min + static_cast<std::int64_t>(rng.below(span_v));
    const std::int64_t target = cfg_.target_min + static_cast<std::int64_t>(rng.below(span_t));
    if (!solve_oracle(numbers, target).empty()) return make_task(std::move(numbers), target);
  }
  throw std::runtime_error("generate_task: no solvable task after " +
                           std::to_string(cfg_.max_attempts) + " attempts");
}

std::vector<CountdownTask> CountdownEnv::generate_tasks(std::uint64_t seed, Stream stream,
                                                        std::size_t count) const {
  Rng rng(stream_seed(seed, stream));
  std::vector<CountdownTask> tasks;
  tasks.reserve(count);
  for (std::size_t i = 0; i < count; ++i) tasks.push_back(generate_task(rng));
  return tasks;
}

ParseResult CountdownEnv::parse_completion(std::span<const TokenId> tokens) const {
  ParseResult result;
  std::optional<std::size_t> open_at, close_at;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == open_) {
      if (open_at) return result;
      open_at = i;
    } else if (tokens[i] == close_) {
      if (close_at) return result;
      close_at = i;
    }
  }
  if (!open_at || !close_at || *close_at < *open_at) return result;
  std::vector<std::string> words;
  for (std::size_t i = *open_at + 1; i < *close_at; ++i) {
    if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= vocab_.size()) return result;
    words.push_back(vocab_.surface(tokens[i]));
  }
  result.expr = parse_expression(words);
  result.format = result.expr.has_value();
  return result;
}

RewardBreakdown CountdownEnv::reward(const CountdownTask& task,
                                     std::span<const TokenId> completion) const {
  RewardBreakdown r;
  const ParseResult parsed = parse_completion(completion);
  r.format = parsed.format ? 1 : 0;
  if (parsed.format) {
    std::vector<std::int64_t> used = parsed.expr->leaves();
    std::sort(used.begin(), used.end());
    std::vector<std::int64_t> want = task.numbers;
    std::sort(want.begin(), want.end());
    if (used == want && parsed.expr->divisions_exact() &&
        parsed.expr->evaluate() == Rational(task.target))
      r.correctness = 1;
  }
  r.total = r.correctness ? 1.0 : (r.format ? 0.1 : 0.0);
  return r;
}

std::size_t CountdownEnv::distinct_answers(std::span<const std::vector<TokenId>> group) const {
  std::set<Rational> values;
  std::set<std::vector<TokenId>> literals;
  for (const auto& completion : group) {
    const ParseResult parsed = parse_completion(completion);
    bool valued = false;
    if (parsed.format) {
      try {
        values.insert(parsed.expr->evaluate());
        valued = true;
      } catch (const EvalError&) {
      }
    }
    if (!valued) literals.insert(completion);
  }
  return values.size() + literals.size();
}

std::vector<TokenId> CountdownEnv::render_completion(const Expression& expr) const {
  std::vector<TokenId> out{open_};
  for (const std::string& w : expr.words()) {
    auto id = vocab_.find(w);
    if (!id) throw std::invalid_argument("no token for '" + w + "'");
    out.push_back(*id);
  }
  out.push_back(close_);
  out.push_back(eos());
  return out;
}

std::string CountdownEnv::task_to_jsonl(std::span<const CountdownTask> tasks) {
  std::string out;
  for (const CountdownTask& t : tasks) {
    nlohmann::ordered_json j;
    j["numbers"] = t.numbers;
    j["target"] = t.target;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void CountdownEnv::save_tasks(const std::filesystem::path& path, std::span<const CountdownTask> tasks) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << task_to_jsonl(tasks);
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

std::vector<CountdownTask> CountdownEnv::load_tasks(const std::filesystem::path& path) const {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::vector<CountdownTask> tasks;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      tasks.push_back(make_task(j.at("numbers").get<std::vector<std::int64_t>>(),
                                j.at("target").get<std::int64_t>()));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return tasks;
}

}  // namespace rolloutlab
