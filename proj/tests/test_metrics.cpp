#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rolloutlab/countdown.hpp"
#include "rolloutlab/metrics.hpp"
#include "support.hpp"

using namespace rolloutlab;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

EvalReport sample_report() {
  EvalReport r;
  r.pass1 = 1.0 / 3.0;
  r.pass8 = 0.5;
  r.len1 = 12.345678912;
  r.len8 = 20;
  r.distinct_answers_mean = 4.125;
  r.mean_pairwise_distance = 0.87654321;
  r.per_task.push_back({0, {2, 3, 5}, 16, 8, 3, 5, 11.11111111, 18});
  r.per_task.push_back({1, {1, 1, 9}, 9, 8, 0, 8, 13.5, 24});
  return r;
}

}  // namespace

TEST_CASE("pass_at_k") {
  auto a = pass_at_k({{false, false, true, false, false, false, false, false}});
  CHECK(a.pass1 == 0.125);
  CHECK(a.pass8 == 1.0);
  a = pass_at_k({std::vector<bool>(8, true)});
  CHECK(a.pass1 == 1.0);
  CHECK(a.pass8 == 1.0);
  a = pass_at_k({std::vector<bool>(8, false), std::vector<bool>(8, true)});
  CHECK(a.pass1 == 0.5);
  CHECK(a.pass8 == 0.5);
  CHECK_THROWS_AS(pass_at_k({}), std::invalid_argument);
  CHECK_THROWS_AS(pass_at_k({{true}, {true, false}}), std::invalid_argument);

  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::vector<bool>> flags(1 + rng.below(5));
    const std::size_t k = 1 + rng.below(8);
    for (auto& f : flags) {
      f.resize(k);
      for (std::size_t i = 0; i < f.size(); ++i) f[i] = rng.bernoulli(0.3);
    }
    const auto p = pass_at_k(flags);
    CHECK(p.pass1 <= p.pass8);
  }
}

TEST_CASE("length_stats") {
  auto l = length_stats({{10, 10, 10}});
  CHECK(l.len1 == 10);
  CHECK(l.len8 == 10);
  l = length_stats({{4, 8}});
  CHECK(l.len1 == 6);
  CHECK(l.len8 == 8);
  l = length_stats({{2, 2}, {6, 10}});
  CHECK(l.len1 == 5);
  CHECK(l.len8 == 6);
  CHECK_THROWS_AS(length_stats({}), std::invalid_argument);
}

TEST_CASE("rollout_stats") {
  TreeStats none;
  none.tokens_generated = 50;
  auto s = rollout_stats(std::vector<TreeStats>{none});
  CHECK(s.branching_ratio == 0.0);
  CHECK_FALSE(s.saturation_length_mean.has_value());
  CHECK(s.unsaturated == 1);

  TreeStats ten;
  ten.branch_events = 10;
  ten.tokens_generated = 100;
  s = rollout_stats(std::vector<TreeStats>{ten});
  CHECK(s.branching_ratio == doctest::Approx(0.1));

  TreeStats a, b, c;
  a.saturation_step = 60;
  b.saturation_step = 80;
  a.tokens_generated = b.tokens_generated = c.tokens_generated = 10;
  a.forward_passes = 10;
  b.forward_passes = 20;
  c.forward_passes = 30;
  c.padding_forward_passes = 30;
  s = rollout_stats(std::vector<TreeStats>{a, b, c});
  CHECK(*s.saturation_length_mean == 70.0);
  CHECK(s.saturated == 2);
  CHECK(s.unsaturated == 1);
  CHECK(s.forward_passes_mean == doctest::Approx(30.0));
  CHECK_THROWS_AS(rollout_stats(std::vector<TreeStats>{}), std::invalid_argument);
}

TEST_CASE("diversity_stats") {
  const CountdownEnv env;
  const auto& v = env.vocab();
  const Completion x = v.tokenize("<ans> 1 + 2 </ans>");
  auto d = diversity_stats({{x, x, x}}, env);
  CHECK(d.distinct_answers_mean == 1.0);
  CHECK(d.mean_pairwise_distance == 0.0);

  d = diversity_stats({{v.tokenize("<ans> ( 3 + 5 ) * 2 </ans>"), v.tokenize("<ans> 2 * ( 5 + 3 ) </ans>"),
                        v.tokenize("<ans> 3 * 5 + 2 </ans>")}},
                      env);
  CHECK(d.distinct_answers_mean == 2.0);

  CHECK(mean_pairwise_distance(std::vector<Completion>{{1, 2, 3}, {4, 5, 6}}) == 1.0);
  CHECK(mean_pairwise_distance(std::vector<Completion>{{1, 2, 3}}) == 0.0);

  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Completion> g;
    for (int i = 0; i < 5; ++i) g.push_back(testsupport::random_tokens(rng, 1 + rng.below(6), v.size()));
    const auto a = diversity_stats({g}, env);
    std::reverse(g.begin(), g.end());
    const auto b = diversity_stats({g}, env);
    CHECK(a.distinct_answers_mean == b.distinct_answers_mean);
    CHECK(a.mean_pairwise_distance == doctest::Approx(b.mean_pairwise_distance).epsilon(1e-12));
  }
  CHECK_THROWS_AS(diversity_stats({}, env), std::invalid_argument);
}

TEST_CASE("number formatting") {
  CHECK(format_number(0.125) == "0.125");
  CHECK(format_number(1.0 / 3.0) == "0.333333");
  CHECK(format_number(24) == "24");
  CHECK(format_number(1234567.0) == "1.23457e+06");
  CHECK(round6(1.0 / 3.0) == 0.333333);
}

TEST_CASE("report emission") {
  const auto dir = std::filesystem::temp_directory_path() / "rolloutlab_report_test";
  std::filesystem::remove_all(dir);
  const auto r = sample_report();

  emit_report(r, ReportFormat::csv, dir / "a.csv");
  emit_report(r, ReportFormat::csv, dir / "b.csv");
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  const std::string csv = slurp(dir / "a.csv");
  CHECK(csv.substr(0, csv.find('\n')) == "pass1,pass8,len1,len8,distinct_mean,pairwise_dist,tasks");
  CHECK(csv.substr(csv.find('\n') + 1) == "0.333333,0.5,12.3457,20,4.125,0.876543,2\n");

  emit_report(r, ReportFormat::json, dir / "a.json");
  emit_report(r, ReportFormat::json, dir / "b.json");
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
  const auto back = load_report(dir / "a.json");
  CHECK(back == r.rounded());
  CHECK(back.rounded() == back);
  std::filesystem::remove_all(dir);

  CHECK(parse_report_format("csv") == ReportFormat::csv);
  CHECK_THROWS_AS(parse_report_format("xml"), std::invalid_argument);
  CHECK_THROWS(load_report(dir / "missing.json"));
}

TEST_CASE("trace rows") {
  TraceRow row;
  row.step = 3;
  row.algo = "grpo";
  row.strategy = "latr";
  row.distinct_mean = 7.5;
  row.pairwise_dist = 0.9;
  row.fwd_passes = 1200;
  row.eta = 0.970225;
  CHECK(trace_csv_header() == "step,algo,strategy,pass1,pass8,len1,len8,distinct_mean,pairwise_dist,branch_ratio,sat_len,fwd_passes,eta\n");
  CHECK(trace_csv_row(row) == "3,grpo,latr,,,,,7.5,0.9,0,,1200,0.970225\n");
  row.pass1 = 0.25;
  row.pass8 = 0.5;
  row.len1 = 10;
  row.len8 = 24;
  row.sat_len = 4.5;
  CHECK(trace_csv_row(row) == "3,grpo,latr,0.25,0.5,10,24,7.5,0.9,0,4.5,1200,0.970225\n");
  const auto j = trace_row_json(row);
  CHECK(j["step"] == 3);
  CHECK(j["pass1"] == 0.25);
  CHECK(j.contains("reward_mean"));
}
