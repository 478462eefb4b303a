#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <optional>
#include <set>

#include "rolloutlab/countdown.hpp"
#include "support.hpp"

using namespace rolloutlab;

namespace {

std::vector<TokenId> toks(const CountdownEnv& env, const std::string& text) { return env.vocab().tokenize(text); }

// Random expression over the given leaves, combining adjacent pairs.
Expression random_expression(Rng& rng, std::vector<std::int64_t> leaves) {
  std::vector<Expression> parts;
  for (auto v : leaves) parts.push_back(Expression::leaf(v));
  const Op ops[] = {Op::add, Op::sub, Op::mul, Op::div};
  while (parts.size() > 1) {
    const std::size_t i = rng.below(parts.size() - 1);
    auto merged = Expression::combine(ops[rng.below(4)], parts[i], parts[i + 1]);
    parts.erase(parts.begin() + static_cast<std::ptrdiff_t>(i), parts.begin() + static_cast<std::ptrdiff_t>(i) + 2);
    parts.insert(parts.begin() + static_cast<std::ptrdiff_t>(i), merged);
  }
  return parts[0];
}

// Same tree shape with every leaf multiplied by `factor`.
Expression scaled(const Expression& e, int idx, std::int64_t factor) {
  const auto& n = e.nodes()[static_cast<std::size_t>(idx)];
  if (n.leaf) return Expression::leaf(n.value * factor);
  return Expression::combine(n.op, scaled(e, n.left, factor), scaled(e, n.right, factor));
}

bool only_add_sub(const Expression& e) {
  for (const auto& n : e.nodes())
    if (!n.leaf && n.op != Op::add && n.op != Op::sub) return false;
  return true;
}

}  // namespace

TEST_CASE("rational arithmetic") {
  CHECK(Rational(6, -4) == Rational(-3, 2));
  CHECK((Rational(1, 2) + Rational(1, 3)) == Rational(5, 6));
  CHECK((Rational(9) / Rational(2)).to_string() == "9/2");
  CHECK_THROWS_AS(Rational(1) / Rational(0), EvalError);
  CHECK(Rational(1, 3) < Rational(1, 2));
}

TEST_CASE("vocabulary layout") {
  const CountdownEnv env;
  const auto& v = env.vocab();
  CHECK(v.size() == 30 + 10);
  CHECK(v.surface(0) == "1");
  CHECK(v.surface(29) == "30");
  CHECK(v.eos() == static_cast<TokenId>(v.size() - 1));
  CHECK(v.surface(v.eos()) == "<eos>");
  CHECK(v.find("<ans>").has_value());
  CHECK(v.find("</ans>").has_value());
}

TEST_CASE("evaluate") {
  const CountdownEnv env;
  auto p = env.parse_completion(toks(env, "<ans> ( 3 + 5 ) * 2 </ans> <eos>"));
  REQUIRE(p.expr);
  CHECK(p.expr->evaluate() == Rational(16));
  auto half = env.parse_completion(toks(env, "<ans> 9 / 2 </ans>"));
  REQUIRE(half.expr);
  CHECK(half.expr->evaluate() == Rational(9, 2));
  CHECK_FALSE(half.expr->divisions_exact());
  auto zero = env.parse_completion(toks(env, "<ans> 7 - 7 </ans>"));
  CHECK(zero.expr->evaluate() == Rational(0));
  auto dz = env.parse_completion(toks(env, "<ans> 4 / ( 2 - 2 ) </ans>"));
  REQUIRE(dz.expr);
  CHECK_THROWS_AS(dz.expr->evaluate(), EvalError);
  auto prec = env.parse_completion(toks(env, "<ans> 2 + 3 * 4 - 6 / 2 </ans>"));
  CHECK(prec.expr->evaluate() == Rational(11));
  auto assoc = env.parse_completion(toks(env, "<ans> 8 - 3 - 2 </ans>"));
  CHECK(assoc.expr->evaluate() == Rational(3));
}

TEST_CASE("parse_completion format rules") {
  const CountdownEnv env;
  CHECK(env.parse_completion(toks(env, "<ans> ( 3 + 5 ) * 2 </ans> <eos>")).format);
  auto missing = env.parse_completion(toks(env, "<ans> ( 3 + 5 ) * 2 <eos>"));
  CHECK_FALSE(missing.format);
  CHECK_FALSE(missing.expr);
  CHECK_FALSE(env.parse_completion(toks(env, "<ans> 3 </ans> <ans> 4 </ans>")).format);
  CHECK_FALSE(env.parse_completion(toks(env, "</ans> 3 <ans>")).format);
  CHECK_FALSE(env.parse_completion(toks(env, "<ans> 3 + </ans>")).format);
  CHECK_FALSE(env.parse_completion(toks(env, "<ans> ( 3 </ans>")).format);
  CHECK_FALSE(env.parse_completion(toks(env, "<ans> </ans>")).format);
  CHECK_FALSE(env.parse_completion(std::vector<TokenId>{}).format);
}

TEST_CASE("reward") {
  const CountdownEnv env;
  const auto task = env.make_task({5, 3, 2}, 16);
  CHECK(task.numbers == std::vector<std::int64_t>{2, 3, 5});
  CHECK(env.vocab().detokenize(task.prompt_tokens) == "2 3 5 = 16");

  const auto full = env.reward(task, toks(env, "<ans> ( 3 + 5 ) * 2 </ans> <eos>"));
  CHECK(full.total == 1.0);
  CHECK(full.format == 1);
  CHECK(full.correctness == 1);
  CHECK(env.reward(task, toks(env, "<ans> ( 3 + 5 ) + 2 </ans> <eos>")).total == 0.1);
  CHECK(env.reward(task, toks(env, "( 3 + 5 ) * 2 <eos>")).total == 0.0);
  // number usage: 16 without using every number exactly once
  CHECK(env.reward(task, toks(env, "<ans> 16 </ans>")).total == 0.1);
  CHECK(env.reward(task, toks(env, "<ans> ( 3 + 5 ) * 2 * 1 </ans>")).total == 0.1);

  // non-exact intermediate division is incorrect even when the value matches
  const auto t2 = env.make_task({2, 3, 4}, 6);
  CHECK(env.reward(t2, toks(env, "<ans> 3 / 2 * 4 </ans>")).total == 0.1);
  CHECK(env.reward(t2, toks(env, "<ans> 3 * 4 / 2 </ans>")).total == 1.0);
}

TEST_CASE("reward totals are one of three values") {
  const CountdownEnv env;
  Rng rng(77);
  const auto task = env.make_task({2, 3, 5}, 16);
  for (int trial = 0; trial < 3000; ++trial) {
    auto comp = testsupport::random_tokens(rng, 1 + rng.below(12), env.vocab().size());
    if (trial % 3 == 0) {
      comp.insert(comp.begin(), *env.vocab().find("<ans>"));
      comp.push_back(*env.vocab().find("</ans>"));
    }
    const auto r = env.reward(task, comp);
    CHECK((r.total == 0.0 || r.total == 0.1 || r.total == 1.0));
    if (r.correctness) CHECK(r.format == 1);
  }
}

TEST_CASE("distinct answers") {
  const CountdownEnv env;
  std::vector<std::vector<TokenId>> g{toks(env, "<ans> ( 3 + 5 ) * 2 </ans>"), toks(env, "<ans> 2 * ( 5 + 3 ) </ans>"),
                                      toks(env, "<ans> 3 * 5 + 2 </ans>")};
  CHECK(env.distinct_answers(g) == 2);
  std::vector<std::vector<TokenId>> same(5, toks(env, "<ans> 1 + 2 </ans>"));
  CHECK(env.distinct_answers(same) == 1);
  std::vector<std::vector<TokenId>> junk{toks(env, "1 2"), toks(env, "2 1"), toks(env, "+ +"), toks(env, "<eos>")};
  CHECK(env.distinct_answers(junk) == 4);

  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::vector<TokenId>> group;
    for (int i = 0; i < 6; ++i)
      group.push_back(rng.bernoulli(0.5) ? env.render_completion(random_expression(rng, {1 + static_cast<std::int64_t>(rng.below(4)), 2}))
                                         : testsupport::random_tokens(rng, 2, 3));
    const auto base = env.distinct_answers(group);
    CHECK(base >= 1);
    CHECK(base <= group.size());
    std::reverse(group.begin(), group.end());
    CHECK(env.distinct_answers(group) == base);
    std::rotate(group.begin(), group.begin() + 2, group.end());
    CHECK(env.distinct_answers(group) == base);
  }
}

TEST_CASE("oracle examples") {
  std::set<std::string> renders;
  for (const auto& e : solve_oracle(std::vector<std::int64_t>{2, 3, 5}, 16)) renders.insert(e.render());
  CHECK(renders.count("( 3 + 5 ) * 2") == 1);
  CHECK(renders.count("2 * ( 3 + 5 )") == 1);
  CHECK(solve_oracle(std::vector<std::int64_t>{9, 9, 9}, 1).empty());
  CHECK(solve_oracle(std::vector<std::int64_t>{2, 2}, 5).empty());
  const auto single = solve_oracle(std::vector<std::int64_t>{7}, 7);
  REQUIRE(single.size() == 1);
  CHECK(single[0].render() == "7");
  CHECK(solve_oracle(std::vector<std::int64_t>{7}, 8).empty());
}

TEST_CASE("oracle agrees with the reward on every solution") {
  const CountdownEnv env;
  Rng rng(101);
  for (int trial = 0; trial < 40; ++trial) {
    const auto task = env.generate_task(rng);
    const auto sols = solve_oracle(task.numbers, task.target);
    REQUIRE_FALSE(sols.empty());
    for (const auto& e : sols) CHECK(env.reward(task, env.render_completion(e)).total == 1.0);
  }
}

TEST_CASE("oracle matches exhaustive two-number enumeration") {
  // Independent check: with two numbers the only expressions are a op b and b op a.
  for (std::int64_t a = 1; a <= 6; ++a)
    for (std::int64_t b = a; b <= 6; ++b)
      for (std::int64_t t = 1; t <= 15; ++t) {
        bool solvable = a + b == t || a * b == t || b - a == t || a - b == t || (b % a == 0 && b / a == t) ||
                        (a % b == 0 && a / b == t);
        CHECK(!solve_oracle(std::vector<std::int64_t>{a, b}, t).empty() == solvable);
      }
}

TEST_CASE("rational evaluation scales linearly under + and -") {
  Rng rng(44);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::int64_t> leaves;
    const std::size_t count = 2 + rng.below(4);
    for (std::size_t i = 0; i < count; ++i) leaves.push_back(1 + static_cast<std::int64_t>(rng.below(20)));
    auto e = random_expression(rng, leaves);
    const std::int64_t f = 2 + static_cast<std::int64_t>(rng.below(7));
    const auto s = scaled(e, e.root(), f);
    try {
      const auto v = e.evaluate();
      const auto w = s.evaluate();
      if (only_add_sub(e)) CHECK(w == v * Rational(f));
    } catch (const EvalError&) {
    }
  }
}

TEST_CASE("render round trips through the parser") {
  const CountdownEnv env;
  Rng rng(9);
  for (int trial = 0; trial < 300; ++trial) {
    auto e = random_expression(rng, {1 + static_cast<std::int64_t>(rng.below(9)), 1 + static_cast<std::int64_t>(rng.below(9)),
                                     1 + static_cast<std::int64_t>(rng.below(9))});
    const auto p = env.parse_completion(env.render_completion(e));
    REQUIRE(p.expr);
    CHECK(p.expr->render() == e.render());
    std::optional<Rational> want, got;
    try {
      want = e.evaluate();
    } catch (const EvalError&) {
    }
    try {
      got = p.expr->evaluate();
    } catch (const EvalError&) {
    }
    CHECK(want == got);
  }
}

TEST_CASE("task generation") {
  const CountdownEnv env;
  const auto a = env.generate_tasks(3, Stream::task_train, 25);
  const auto b = env.generate_tasks(3, Stream::task_train, 25);
  REQUIRE(a.size() == 25);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].numbers == b[i].numbers);
    CHECK(a[i].target == b[i].target);
    CHECK(a[i].numbers.size() == 3);
    CHECK(std::is_sorted(a[i].numbers.begin(), a[i].numbers.end()));
    CHECK(a[i].target >= 1);
    CHECK(a[i].target <= 30);
    CHECK_FALSE(solve_oracle(a[i].numbers, a[i].target).empty());
  }

  EnvConfig impossible;
  impossible.count = 2;
  impossible.value_min = 2;
  impossible.value_max = 2;
  impossible.target_min = 5;
  impossible.target_max = 5;
  impossible.max_attempts = 50;
  const CountdownEnv bad(impossible);
  Rng rng(1);
  CHECK_THROWS_AS(bad.generate_task(rng), std::runtime_error);

  EnvConfig c;
  c.count = 6;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("task files round trip") {
  const CountdownEnv env;
  const auto tasks = env.generate_tasks(8, Stream::task_val, 10);
  const auto path = std::filesystem::temp_directory_path() / "rolloutlab_tasks_roundtrip.jsonl";
  CountdownEnv::save_tasks(path, tasks);
  const auto loaded = env.load_tasks(path);
  std::filesystem::remove(path);
  REQUIRE(loaded.size() == tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    CHECK(loaded[i].numbers == tasks[i].numbers);
    CHECK(loaded[i].target == tasks[i].target);
    CHECK(loaded[i].prompt_tokens == tasks[i].prompt_tokens);
  }
  CHECK(CountdownEnv::task_to_jsonl(std::span(tasks).first(1)).find("{\"numbers\":[") == 0);
}
