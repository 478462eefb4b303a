#include <doctest.h>

#include <cmath>
#include <set>

#include "rolloutlab/countdown.hpp"
#include "rolloutlab/fixtures.hpp"
#include "rolloutlab/lookahead_tree.hpp"
#include "support.hpp"

using namespace rolloutlab;
using V = std::vector<TokenId>;

namespace {

// Order-1 policy whose every row (all tokens plus the begin marker) has the
// given probabilities.
SoftmaxPolicy constant_policy(const std::vector<double>& probs) {
  SoftmaxPolicy p(probs.size(), 1);
  const auto row = testsupport::log_probs(probs);
  p.set_row(ContextKey({kBeginMarker}), row);
  for (std::size_t t = 0; t < probs.size(); ++t) p.set_row(ContextKey({static_cast<TokenId>(t)}), row);
  return p;
}

SoftmaxPolicy one_hot_policy(std::size_t vocab, TokenId favored) {
  std::vector<double> row(vocab, 0.0);
  row[static_cast<std::size_t>(favored)] = 60.0;
  SoftmaxPolicy p(vocab, 1);
  p.set_row(ContextKey({kBeginMarker}), row);
  for (std::size_t t = 0; t < vocab; ++t) p.set_row(ContextKey({static_cast<TokenId>(t)}), row);
  return p;
}

std::vector<double> with_rest(std::vector<double> head, std::size_t vocab) {
  double used = 0.0;
  for (double x : head) used += x;
  const double rest = (1.0 - used) / static_cast<double>(vocab - head.size());
  head.resize(vocab, rest);
  return head;
}

// Listed tokens get their probability; the rest share the remainder evenly.
std::vector<double> probs_with(std::size_t vocab, std::vector<std::pair<TokenId, double>> fixed) {
  double used = 0.0;
  for (const auto& f : fixed) used += f.second;
  std::vector<double> out(vocab, (1.0 - used) / static_cast<double>(vocab - fixed.size()));
  for (const auto& [t, prob] : fixed) out[static_cast<std::size_t>(t)] = prob;
  return out;
}

Branch make_branch(std::size_t id, V tokens, std::optional<std::size_t> parent, std::size_t birth,
                   std::vector<std::size_t> checks) {
  Branch b;
  b.id = id;
  b.tokens = std::move(tokens);
  b.parent = parent;
  b.birth = birth;
  b.pending_checks = std::move(checks);
  return b;
}

LatrConfig small_cfg(std::size_t k, std::size_t n, std::vector<std::size_t> windows) {
  LatrConfig c;
  c.k = k;
  c.n = n;
  c.windows = std::move(windows);
  return c;
}

}  // namespace

TEST_CASE("candidate_set examples") {
  LatrConfig cfg;
  const auto a = candidate_set(std::vector<double>{0.5, 0.4, 0.08, 0.02}, cfg);
  REQUIRE(a.size() == 1);
  CHECK(a[0].token == 1);
  CHECK(a[0].probability == 0.4);

  CHECK(candidate_set(std::vector<double>{0.0, 1.0, 0.0}, cfg).empty());

  const auto b = candidate_set(std::vector<double>{0.34, 0.33, 0.33}, cfg);
  REQUIRE(b.size() == 2);
  CHECK(b[0].token == 1);
  CHECK(b[1].token == 2);

  // top tie goes to the lowest id, the other becomes a candidate
  const auto c = candidate_set(std::vector<double>{0.1, 0.45, 0.45}, cfg);
  REQUIRE(c.size() == 1);
  CHECK(c[0].token == 2);
}

TEST_CASE("candidates satisfy both conditions on random distributions") {
  Rng rng(2);
  LatrConfig cfg;
  for (int trial = 0; trial < 2000; ++trial) {
    const auto d = softmax(testsupport::random_row(rng, 2 + rng.below(5), 2.0));
    const TokenId top = argmax(d);
    const auto cands = candidate_set(d, cfg);
    std::set<TokenId> chosen;
    for (const auto& c : cands) chosen.insert(c.token);
    for (std::size_t t = 0; t < d.size(); ++t) {
      const bool qualifies = static_cast<TokenId>(t) != top && d[t] > cfg.tau_abs && d[top] - d[t] < cfg.tau_rel;
      CHECK(qualifies == (chosen.count(static_cast<TokenId>(t)) == 1));
    }
    for (std::size_t i = 1; i < cands.size(); ++i) CHECK(cands[i - 1].probability >= cands[i].probability);
  }
}

TEST_CASE("branch_step without candidates grows the root only") {
  const auto policy = SoftmaxPolicy(40, 2);
  const V prompt{1, 2};
  LookaheadTree tree(policy, prompt, 39, small_cfg(8, 24, {20, 30, 50}), SamplingConfig{}, 0);
  tree.branch_step();
  CHECK(tree.width() == 1);
  CHECK(tree.branches()[0].tokens == V{0});
  CHECK(tree.stats().forward_passes == 1);
  tree.branch_step();
  CHECK(tree.branches()[0].tokens == V{0, 0});
  CHECK(tree.stats().forward_passes == 2);
}

TEST_CASE("children are ranked globally by probability") {
  std::vector<PendingChild> pool{{0, 3, 1, 0.3, 0}, {0, 3, 2, 0.4, 0}, {1, 3, 4, 0.3, 0}, {1, 3, 5, 0.35, 0}};
  rank_children(pool);
  CHECK(pool[0].probability == 0.4);
  CHECK(pool[1].probability == 0.35);
  CHECK(pool[2].parent == 0);
  CHECK(pool[3].parent == 1);

  // k = 3: the second step has one free slot and two branches offering
  // 0.30 (root) and 0.35 (branch 1); only the 0.35 child is created.
  const std::size_t vocab = 7;
  SoftmaxPolicy p(vocab, 1);
  p.set_row(ContextKey({5}), testsupport::log_probs(probs_with(vocab, {{0, 0.4}, {1, 0.35}})));
  p.set_row(ContextKey({0}), testsupport::log_probs(probs_with(vocab, {{0, 0.4}, {2, 0.3}})));
  p.set_row(ContextKey({1}), testsupport::log_probs(probs_with(vocab, {{0, 0.4}, {3, 0.35}})));
  const V prompt{5};
  LookaheadTree tree(p, prompt, 6, small_cfg(3, 24, {20}), SamplingConfig{}, 0);
  tree.branch_step();
  CHECK(tree.width() == 2);
  CHECK(tree.branches()[1].tokens == V{1});
  const std::size_t before = tree.stats().forward_passes;
  tree.branch_step();
  CHECK(tree.stats().forward_passes == before + 2);
  CHECK(tree.width() == 3);
  CHECK(tree.saturated());
  REQUIRE(tree.branches().size() == 3);
  CHECK(tree.branches()[2].parent == std::optional<std::size_t>(1));
  CHECK(tree.branches()[2].tokens == V{1, 3});
  CHECK(tree.branches()[1].tokens == V{1, 0});
  CHECK(tree.branches()[0].tokens == V{0, 0});
  CHECK(tree.stats().saturation_step == std::optional<std::size_t>(2));
}

TEST_CASE("prune examples") {
  LatrConfig cfg;
  cfg.windows = {4};
  std::vector<TreeEvent> events;

  SUBCASE("one edit in four prunes the child and its descendants") {
    std::vector<Branch> bs;
    bs.push_back(make_branch(0, {9, 9, 1, 5, 3, 4}, std::nullopt, 0, {}));
    bs.push_back(make_branch(1, {9, 8, 1, 2, 3, 4}, 0, 2, {6}));
    bs.push_back(make_branch(2, {9, 8, 1, 7, 7, 7}, 1, 4, {8}));
    bs.push_back(make_branch(3, {9, 7, 11, 12, 13, 14}, 0, 2, {6}));
    CHECK(window_divergence(bs[1], bs[0], 4, SimilarityMetric::edit_distance) == std::optional<double>(0.25));
    CHECK(prune_due_branches(bs, 6, cfg, events) == 2);
    CHECK(bs[1].status == BranchStatus::pruned);
    CHECK(bs[2].status == BranchStatus::pruned);
    CHECK(bs[2].pruned_via_ancestor == std::optional<std::size_t>(1));
    CHECK(bs[3].alive());
    CHECK(bs[3].checks.size() == 1);
    CHECK(bs[3].checks[0].distance == std::optional<double>(1.0));
    REQUIRE(events.size() == 2);
    CHECK(events[0].branch_id == std::optional<std::size_t>(1));
    CHECK(events[0].distance == std::optional<double>(0.25));
    CHECK(events[1].ancestor_id == std::optional<std::size_t>(1));
    CHECK(events[1].step == 6);
  }

  SUBCASE("identical window is pruned") {
    std::vector<Branch> bs;
    bs.push_back(make_branch(0, {1, 2, 3, 4, 5}, std::nullopt, 0, {}));
    bs.push_back(make_branch(1, {6, 2, 3, 4, 5}, 0, 1, {5}));
    prune_due_branches(bs, 5, cfg, events);
    CHECK(bs[1].status == BranchStatus::pruned);
    CHECK(bs[1].checks[0].distance == std::optional<double>(0.0));
  }

  SUBCASE("disjoint window of twenty survives") {
    cfg.windows = {20};
    V parent{1}, child{2};
    for (int i = 0; i < 20; ++i) {
      parent.push_back(3);
      child.push_back(4 + i);
    }
    std::vector<Branch> bs;
    bs.push_back(make_branch(0, parent, std::nullopt, 0, {}));
    bs.push_back(make_branch(1, child, 0, 1, {21}));
    CHECK(prune_due_branches(bs, 21, cfg, events) == 0);
    CHECK(bs[1].alive());
    CHECK(bs[1].checks[0].distance == std::optional<double>(1.0));
    CHECK(bs[1].pending_checks.empty());
  }

  SUBCASE("terminated parent") {
    std::vector<Branch> bs;
    bs.push_back(make_branch(0, {1, 2, 3}, std::nullopt, 0, {}));
    bs[0].status = BranchStatus::complete;
    bs.push_back(make_branch(1, {1, 5, 3, 7, 8}, 0, 2, {6}));
    bs.push_back(make_branch(2, {9, 9, 9, 9}, 0, 3, {7}));
    // parent segment [3] against child segment [3, 7, 8]
    CHECK(window_divergence(bs[1], bs[0], 4, SimilarityMetric::edit_distance) ==
          doctest::Approx(2.0 / 3.0));
    // no parent tokens past position 3: the check is skipped
    CHECK_FALSE(window_divergence(bs[2], bs[0], 4, SimilarityMetric::edit_distance).has_value());
    prune_due_branches(bs, 7, cfg, events);
    CHECK(bs[2].alive());
    CHECK(bs[2].checks[0].passed);
  }
}

TEST_CASE("deterministic policy never branches") {
  const auto p = one_hot_policy(5, 2);
  const V prompt{0, 1};
  const auto r = latr_rollout(p, prompt, 4, small_cfg(4, 10, {3}), SamplingConfig{}, 0);
  REQUIRE(r.sequences.size() == 4);
  CHECK(r.stats.branch_events == 0);
  CHECK_FALSE(r.stats.saturation_step.has_value());
  CHECK(r.stats.forward_passes == 10);
  CHECK(r.stats.padded == 3);
  CHECK(r.origins[0] == SequenceOrigin::latr);
  for (const auto& s : r.sequences) CHECK(s.tokens == V(10, 2));
}

TEST_CASE("forward passes stay within n*k") {
  Rng rng(8);
  for (int trial = 0; trial < 4; ++trial) {
    const auto p = testsupport::random_policy(rng, 4, 1.0);
    SamplingConfig s;
    s.seed = static_cast<std::uint64_t>(trial);
    const auto r = latr_rollout(p, V{0}, 3, small_cfg(8, 1024, {20, 30, 50}), s, 0);
    CHECK(r.stats.forward_passes <= 8192);
    CHECK(r.sequences.size() == 8);
  }
}

TEST_CASE("collapse fixture prunes both children at the first window") {
  const CountdownEnv env;
  const auto task = env.make_task({2, 3, 5}, 16);
  const auto policy = collapse_policy(env, task.prompt_tokens, 2);
  const auto r = latr_rollout(policy, task.prompt_tokens, env.eos(), LatrConfig{}, SamplingConfig{}, 0);
  std::vector<TreeEvent> branches, prunes;
  for (const auto& e : r.events) {
    if (e.kind == TreeEvent::Kind::branch) branches.push_back(e);
    if (e.kind == TreeEvent::Kind::prune) prunes.push_back(e);
  }
  REQUIRE(branches.size() == 2);
  CHECK(branches[0].step == 1);
  CHECK(branches[1].step == 1);
  REQUIRE(prunes.size() == 2);
  for (const auto& e : prunes) {
    CHECK(e.step == 21);
    CHECK(e.distance == std::optional<double>(0.0));
  }
  CHECK(r.sequences.size() == 8);
  CHECK(r.stats.padded == 7);
  CHECK_FALSE(r.stats.saturation_step.has_value());
}

TEST_CASE("no_prune doubles to saturation") {
  const auto p = constant_policy(with_rest({0.45, 0.40}, 6));
  LatrVariant v;
  v.kind = LatrVariant::Kind::no_prune;
  const auto r = latr_variant_rollout(p, V{1}, 5, small_cfg(8, 12, {2}), SamplingConfig{}, v, 0);
  CHECK(r.width_by_step == std::vector<std::size_t>{1, 2, 4, 8});
  CHECK(r.stats.saturation_step == std::optional<std::size_t>(3));
  CHECK(r.stats.branch_events == 7);
  CHECK(r.stats.pruned_count == 0);
  CHECK(r.sequences.size() == 8);
  CHECK(r.stats.padded == 0);
}

TEST_CASE("zero-rate variants") {
  Rng rng(19);
  const auto p = testsupport::random_policy(rng, 4, 1.2);
  SamplingConfig s;
  s.seed = 3;
  const auto cfg = small_cfg(8, 40, {3, 6});

  LatrVariant none_prune;
  none_prune.kind = LatrVariant::Kind::no_prune;
  LatrVariant rp0;
  rp0.kind = LatrVariant::Kind::random_prune;
  const auto a = latr_variant_rollout(p, V{0}, 3, cfg, s, none_prune, 5);
  const auto b = latr_variant_rollout(p, V{0}, 3, cfg, s, rp0, 5);
  CHECK(a.sequences == b.sequences);
  CHECK(events_to_jsonl(a.events) == events_to_jsonl(b.events));

  LatrVariant rb0;
  rb0.kind = LatrVariant::Kind::random_branch;
  const auto c = latr_variant_rollout(p, V{0}, 3, cfg, s, rb0, 5);
  CHECK(c.stats.branch_events == 0);
  CHECK(c.origins[0] == SequenceOrigin::latr);
  for (std::size_t i = 1; i < c.origins.size(); ++i) CHECK(c.origins[i] == SequenceOrigin::padding);

  LatrVariant bad;
  bad.kind = LatrVariant::Kind::random_prune;
  bad.rate = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("random branch always branches at rate one") {
  const auto p = one_hot_policy(5, 2);
  LatrVariant rb;
  rb.kind = LatrVariant::Kind::random_branch;
  rb.rate = 1.0;
  const auto r = latr_variant_rollout(p, V{0}, 4, small_cfg(4, 10, {3}), SamplingConfig{}, rb, 0);
  CHECK(r.stats.branch_events >= 1);
  for (const auto& br : r.branches)
    if (br.parent) CHECK(br.tokens[br.birth - 1] != 2);
}

TEST_CASE("rollouts are deterministic and exactly k wide") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = testsupport::random_policy(rng, 5, 1.5);
    SamplingConfig s;
    s.seed = 100 + static_cast<std::uint64_t>(trial);
    const auto cfg = small_cfg(4 + rng.below(6), 30, {4, 8});
    const auto a = latr_rollout(p, V{1}, 4, cfg, s, 2);
    const auto b = latr_rollout(p, V{1}, 4, cfg, s, 2);
    CHECK(a.sequences == b.sequences);
    CHECK(events_to_jsonl(a.events) == events_to_jsonl(b.events));
    CHECK(a.sequences.size() == cfg.k);
    for (std::size_t w : a.width_by_step) CHECK(w <= cfg.k);
  }
}

TEST_CASE("k of one saturates immediately") {
  const auto p = SoftmaxPolicy(6, 1);
  const auto r = latr_rollout(p, V{1}, 5, small_cfg(1, 8, {2}), SamplingConfig{}, 0);
  CHECK(r.stats.saturation_step == std::optional<std::size_t>(0));
  CHECK(r.sequences.size() == 1);
  CHECK(r.stats.branch_events == 0);
}

TEST_CASE("config validation and event json") {
  LatrConfig c;
  c.tau_abs = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.windows = {30, 20};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.windows = {};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.k = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  TreeEvent e;
  e.step = 3;
  e.kind = TreeEvent::Kind::branch;
  e.branch_id = 2;
  e.parent_id = 0;
  e.probability = 0.375;
  CHECK(e.to_json().dump() == R"({"step":3,"event":"branch","branch_id":2,"parent_id":0,"probability":0.375})");
  TreeEvent sat;
  sat.step = 4;
  sat.kind = TreeEvent::Kind::saturate;
  CHECK(events_to_jsonl(std::vector<TreeEvent>{sat}) ==
        "{\"step\":4,\"event\":\"saturate\",\"branch_id\":null,\"parent_id\":null}\n");
}
