#include "rolloutlab/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <optional>
#include <sstream>
#include <thread>

#include "rolloutlab/fixtures.hpp"
#include "rolloutlab/lookahead_tree.hpp"
#include "rolloutlab/metrics.hpp"
#include "rolloutlab/sampling.hpp"
#include "rolloutlab/training.hpp"

namespace rolloutlab {

namespace fs = std::filesystem;

fs::path output_root(const RunConfig& cfg) {
  const char* env = std::getenv(kOutputRootEnv);
  if (env && *env) return fs::path(env);
  return fs::path(cfg.output_dir);
}

namespace {

std::vector<CountdownTask> load_or_generate(const CountdownEnv& env, const std::string& file,
                                            std::uint64_t seed, Stream stream, std::size_t count) {
  if (!file.empty()) {
    if (!fs::exists(file)) throw IoError("task file not found: " + file);
    auto tasks = env.load_tasks(file);
    if (tasks.empty()) throw IoError("task file is empty: " + file);
    return tasks;
  }
  return env.generate_tasks(seed, stream, count);
}

std::string task_label(const CountdownTask& t) {
  std::string s;
  for (std::int64_t v : t.numbers) s += std::to_string(v) + " ";
  return s + "= " + std::to_string(t.target);
}

void write_config(const fs::path& dir, const RunConfig& cfg) {
  write_text_file(dir / "config.json", to_json(cfg).dump(2) + "\n");
}

}  // namespace

std::vector<CountdownTask> train_tasks(const RunConfig& cfg, const CountdownEnv& env) {
  return load_or_generate(env, cfg.train_task_file, cfg.task_seed, Stream::task_train, cfg.train_tasks);
}

std::vector<CountdownTask> val_tasks(const RunConfig& cfg, const CountdownEnv& env) {
  return load_or_generate(env, cfg.val_task_file, cfg.task_seed, Stream::task_val, cfg.val_tasks);
}

SoftmaxPolicy initial_policy(const RunConfig& cfg, const CountdownEnv& env,
                             const std::vector<CountdownTask>& tasks) {
  if (!cfg.checkpoint.empty()) {
    if (!fs::exists(cfg.checkpoint)) throw IoError("checkpoint not found: " + cfg.checkpoint);
    SoftmaxPolicy p = SoftmaxPolicy::load(cfg.checkpoint);
    if (p.vocab_size() != env.vocab().size())
      throw ConfigError("checkpoint vocabulary size " + std::to_string(p.vocab_size()) +
                        " does not match the environment's " + std::to_string(env.vocab().size()));
    return p;
  }
  if (cfg.policy_fixture == "collapse") {
    if (tasks.empty()) throw ConfigError("collapse fixture needs a task");
    return collapse_policy(env, tasks.front().prompt_tokens, cfg.context_order);
  }
  if (cfg.policy_fixture == "oracle") return oracle_policy(env, tasks, cfg.context_order);
  return SoftmaxPolicy(env.vocab().size(), cfg.context_order);
}

// ---------------------------------------------------------------------------

std::string cmd_rollout(const RunConfig& cfg) {
  const CountdownEnv env(cfg.env_config());
  CountdownTask task;
  if (!cfg.task_numbers.empty()) {
    task = env.make_task(cfg.task_numbers, cfg.task_target);
  } else {
    const auto tasks = val_tasks(cfg, env);
    if (cfg.task_index >= tasks.size())
      throw ConfigError("config key 'task_index': " + std::to_string(cfg.task_index) +
                        " is out of range for " + std::to_string(tasks.size()) + " tasks");
    task = tasks[cfg.task_index];
  }
  const SoftmaxPolicy policy = initial_policy(cfg, env, {task});
  const Strategy strategy = parse_strategy(cfg.strategy);
  const SamplingConfig sampling = cfg.sampling_config();
  const LatrConfig lc = cfg.latr_config();

  std::vector<Sequence> seqs;
  std::vector<std::string> origins;
  std::vector<std::optional<std::size_t>> branch_ids;
  std::vector<TreeEvent> events;
  std::optional<TreeStats> stats;
  std::size_t forward_passes = 0;

  if (strategy == Strategy::latr || strategy == Strategy::latr_variant) {
    LatrResult r = strategy == Strategy::latr
                       ? latr_rollout(policy, task.prompt_tokens, env.eos(), lc, sampling, 0)
                       : latr_variant_rollout(policy, task.prompt_tokens, env.eos(), lc, sampling,
                                              cfg.latr_variant(), 0);
    seqs = std::move(r.sequences);
    for (SequenceOrigin o : r.origins) origins.emplace_back(to_string(o));
    branch_ids = r.branch_ids;
    events = std::move(r.events);
    stats = r.stats;
    forward_passes = r.stats.total_forward_passes();
  } else if (strategy == Strategy::stochastic) {
    RolloutBatch b = stochastic_rollout(policy, task.prompt_tokens, env.eos(), lc.k, lc.n, sampling, 0);
    seqs = std::move(b.sequences);
    forward_passes = b.forward_passes;
  } else {
    SrConfig sr;
    sr.oversample_count = cfg.sr_oversample;
    sr.keep_count = lc.k;
    SrResult r = sr_rollout(policy, task.prompt_tokens, env.eos(), sr, sampling, lc.n, 0);
    seqs = std::move(r.sequences);
    forward_passes = r.forward_passes;
  }
  if (origins.empty()) origins.assign(seqs.size(), "stochastic");
  if (branch_ids.empty()) branch_ids.assign(seqs.size(), std::nullopt);

  const fs::path dir = output_root(cfg) / "rollout";
  std::ostringstream text;
  std::string seq_lines;
  text << "task: " << task_label(task) << "\n";
  text << "strategy: " << cfg.strategy << "\n";
  std::vector<Completion> group;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const RewardBreakdown rw = env.reward(task, seqs[i].tokens);
    const std::string surface = env.vocab().detokenize(seqs[i].tokens);
    nlohmann::ordered_json j;
    j["index"] = i;
    j["origin"] = origins[i];
    j["branch_id"] = branch_ids[i] ? nlohmann::ordered_json(*branch_ids[i]) : nlohmann::ordered_json(nullptr);
    j["tokens"] = seqs[i].tokens;
    j["text"] = surface;
    j["reward"] = rw.total;
    j["logprob"] = round6(seqs[i].total_logprob);
    seq_lines += j.dump() + "\n";
    char head[64];
    std::snprintf(head, sizeof head, "[%zu] %-10s r=%s | ", i, origins[i].c_str(),
                  format_number(rw.total).c_str());
    text << head << surface << "\n";
    group.push_back(seqs[i].tokens);
  }

  nlohmann::ordered_json summary;
  summary["task"] = {{"numbers", task.numbers}, {"target", task.target}};
  summary["strategy"] = cfg.strategy;
  summary["k"] = seqs.size();
  summary["forward_passes"] = forward_passes;
  summary["distinct_answers"] = env.distinct_answers(group);
  summary["pairwise_dist"] = round6(mean_pairwise_distance(group));
  if (stats) {
    summary["branch_events"] = stats->branch_events;
    summary["tokens_generated"] = stats->tokens_generated;
    summary["pruned"] = stats->pruned_count;
    summary["saturation_step"] = stats->saturation_step ? nlohmann::ordered_json(*stats->saturation_step)
                                                         : nlohmann::ordered_json(nullptr);
    summary["tree_forward_passes"] = stats->forward_passes;
    summary["padding_forward_passes"] = stats->padding_forward_passes;
    summary["padded"] = stats->padded;
  }
  text << "distinct answers: " << env.distinct_answers(group)
       << ", pairwise distance: " << format_number(mean_pairwise_distance(group))
       << ", forward passes: " << forward_passes << "\n";
  if (stats) {
    text << "branch events: " << stats->branch_events << ", pruned: " << stats->pruned_count
         << ", saturation step: "
         << (stats->saturation_step ? std::to_string(*stats->saturation_step) : std::string("none"))
         << ", padded: " << stats->padded << "\n";
  }

  write_text_file(dir / "events.jsonl", events_to_jsonl(events));
  write_text_file(dir / "sequences.jsonl", seq_lines);
  write_text_file(dir / "summary.json", summary.dump(2) + "\n");
  write_config(dir, cfg);
  return text.str();
}

// ---------------------------------------------------------------------------

namespace {

struct TrainOutcome {
  std::vector<TraceRow> rows;
  /// Set when the DAPO filter ran dry; rows hold the steps completed before.
  std::exception_ptr exhausted;
};

/// Runs training; checkpoints go to `checkpoint_dir` when it is set.
TrainOutcome run_training(const RunConfig& cfg, const CountdownEnv& env,
                          const std::vector<CountdownTask>& train,
                          const std::vector<CountdownTask>& val, SoftmaxPolicy& policy,
                          const std::optional<fs::path>& checkpoint_dir) {
  TrainOutcome out;
  const TrainConfig tc = cfg.train_config();
  auto on_step = [&](const TraceRow& row, const SoftmaxPolicy& p) {
    out.rows.push_back(row);
    if (checkpoint_dir && cfg.checkpoint_every > 0 && row.step % cfg.checkpoint_every == 0) {
      char name[48];
      std::snprintf(name, sizeof name, "step_%06zu.json", row.step);
      fs::create_directories(*checkpoint_dir);
      p.save(*checkpoint_dir / name);
    }
  };
  try {
    train_loop(policy, env, train, val, tc, on_step);
  } catch (const FilterExhausted&) {
    out.exhausted = std::current_exception();
  }
  return out;
}

}  // namespace

std::string cmd_train(const RunConfig& cfg) {
  if (cfg.steps < 1) throw ConfigError("config key 'steps': train needs at least 1 step");
  const CountdownEnv env(cfg.env_config());
  const auto train = train_tasks(cfg, env);
  const auto val = val_tasks(cfg, env);
  SoftmaxPolicy policy = initial_policy(cfg, env, val);
  const fs::path dir = output_root(cfg) / "train";
  write_config(dir, cfg);

  TrainOutcome outcome = run_training(cfg, env, train, val, policy, dir / "checkpoints");
  write_text_file(dir / "trace.csv", trace_csv(outcome.rows));
  write_text_file(dir / "trace.json", trace_json(outcome.rows));
  if (outcome.exhausted) std::rethrow_exception(outcome.exhausted);
  fs::create_directories(dir);
  policy.save(dir / "policy.json");

  std::ostringstream text;
  text << "steps: " << outcome.rows.size() << "\n";
  if (!outcome.rows.empty()) {
    const TraceRow& last = outcome.rows.back();
    text << "final reward mean: " << format_number(last.reward_mean) << "\n";
    if (last.pass1)
      text << "final val pass@1: " << format_number(*last.pass1)
           << ", pass@8: " << format_number(*last.pass8) << "\n";
  }
  const auto reached = steps_to_threshold(outcome.rows, cfg.threshold);
  text << "steps to threshold " << format_number(cfg.threshold) << ": "
       << (reached ? std::to_string(*reached) : std::string("not reached")) << "\n";
  text << "trace: " << (dir / "trace.csv").string() << "\n";
  return text.str();
}

// ---------------------------------------------------------------------------

std::string cmd_eval(const RunConfig& cfg) {
  const CountdownEnv env(cfg.env_config());
  const auto val = val_tasks(cfg, env);
  const SoftmaxPolicy policy = initial_policy(cfg, env, val);
  const EvalReport report =
      evaluate_policy(policy, env, val, cfg.eval_sampling_config(), cfg.eval_samples, cfg.n);
  const fs::path dir = output_root(cfg) / "eval";
  emit_report(report, ReportFormat::csv, dir / "report.csv");
  emit_report(report, ReportFormat::json, dir / "report.json");
  write_config(dir, cfg);
  std::ostringstream text;
  text << "tasks: " << val.size() << "\n"
       << "pass@1: " << format_number(report.pass1) << ", pass@8: " << format_number(report.pass8) << "\n"
       << "len1: " << format_number(report.len1) << ", len8: " << format_number(report.len8) << "\n"
       << "distinct answers: " << format_number(report.distinct_answers_mean)
       << ", pairwise distance: " << format_number(report.mean_pairwise_distance) << "\n";
  return text.str();
}

// ---------------------------------------------------------------------------

namespace {

struct Cell {
  std::string algo;
  std::string strategy;
  std::uint64_t k;
  double temperature;
  std::uint64_t seed;
  std::string name;
};

struct CellResult {
  std::vector<TraceRow> rows;
  std::optional<std::string> error;
};

std::string median_text(std::vector<double> v) {
  if (v.empty()) return "";
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return format_number(v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]));
}

}  // namespace

std::string cmd_compare(const RunConfig& cfg) {
  if (cfg.compare_algos.empty() || cfg.compare_strategies.empty() || cfg.seeds.empty())
    throw ConfigError("compare needs non-empty compare_algos, compare_strategies and seeds");
  const std::vector<std::uint64_t> ks = cfg.sweep_k.empty() ? std::vector<std::uint64_t>{cfg.k} : cfg.sweep_k;
  const std::vector<double> temps =
      cfg.sweep_temperature.empty() ? std::vector<double>{cfg.temperature} : cfg.sweep_temperature;

  std::vector<Cell> cells;
  for (const std::string& algo : cfg.compare_algos)
    for (const std::string& strategy : cfg.compare_strategies)
      for (std::uint64_t k : ks)
        for (double t : temps)
          for (std::uint64_t seed : cfg.seeds) {
            Cell c{algo, strategy, k, t, seed, ""};
            c.name = algo + "_" + strategy + "_k" + std::to_string(k) + "_t" + format_number(t) +
                     "_s" + std::to_string(seed);
            cells.push_back(std::move(c));
          }

  // validate every cell before any work starts
  std::vector<RunConfig> cell_cfgs;
  for (const Cell& c : cells) {
    RunConfig rc = cfg;
    rc.algo = c.algo;
    rc.k = c.k;
    rc.temperature = c.temperature;
    rc.seed = c.seed;
    if (c.strategy == "no_prune" || c.strategy == "random_branch" || c.strategy == "random_prune") {
      rc.strategy = "latr_variant";
      rc.variant = c.strategy;
    } else {
      rc.strategy = c.strategy;
    }
    try {
      rc.validate();
    } catch (const ConfigError& e) {
      throw ConfigError("compare cell " + c.name + ": " + e.what());
    }
    cell_cfgs.push_back(std::move(rc));
  }

  const CountdownEnv env(cfg.env_config());
  const auto train = train_tasks(cfg, env);
  const auto val = val_tasks(cfg, env);
  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        SoftmaxPolicy policy = initial_policy(cell_cfgs[i], env, val);
        TrainOutcome o = run_training(cell_cfgs[i], env, train, val, policy, std::nullopt);
        results[i].rows = std::move(o.rows);
        if (o.exhausted) std::rethrow_exception(o.exhausted);
      } catch (const std::exception& e) {
        results[i].error = e.what();
      }
    }
  };
  const std::size_t n_workers = std::min<std::size_t>(cfg.workers, cells.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  const fs::path dir = output_root(cfg) / "compare";
  write_config(dir, cfg);
  std::string long_csv = "cell,seed,k,temperature," + trace_csv_header().substr(0, trace_csv_header().size() - 1) +
                         ",reward_mean\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Cell& c = cells[i];
    write_text_file(dir / "cells" / c.name / "trace.csv", trace_csv(results[i].rows));
    for (TraceRow row : results[i].rows) {
      row.strategy = c.strategy;
      std::string line = trace_csv_row(row);
      line.pop_back();
      long_csv += c.name + "," + std::to_string(c.seed) + "," + std::to_string(c.k) + "," +
                  format_number(c.temperature) + "," + line + "," + format_number(row.reward_mean) + "\n";
    }
  }
  write_text_file(dir / "compare.csv", long_csv);

  std::string summary = "algo,strategy,k,temperature,seeds,reached,median_steps_to_threshold,median_final_pass1,failed\n";
  std::ostringstream text;
  std::size_t failed_total = 0;
  for (std::size_t i = 0; i < cells.size();) {
    std::size_t j = i;
    std::vector<double> steps, finals;
    std::size_t failed = 0, reached = 0;
    while (j < cells.size() && cells[j].algo == cells[i].algo && cells[j].strategy == cells[i].strategy &&
           cells[j].k == cells[i].k && cells[j].temperature == cells[i].temperature) {
      if (results[j].error) ++failed;
      const auto s = steps_to_threshold(results[j].rows, cfg.threshold);
      if (s) ++reached;
      // unreached seeds count as one past the budget
      steps.push_back(s ? static_cast<double>(*s) : static_cast<double>(cfg.steps + 1));
      if (auto f = final_pass1(results[j].rows)) finals.push_back(*f);
      ++j;
    }
    failed_total += failed;
    const Cell& c = cells[i];
    summary += c.algo + "," + c.strategy + "," + std::to_string(c.k) + "," + format_number(c.temperature) + "," +
               std::to_string(j - i) + "," + std::to_string(reached) + "," + median_text(steps) + "," +
               median_text(finals) + "," + std::to_string(failed) + "\n";
    text << c.algo << " " << c.strategy << " k=" << c.k << " t=" << format_number(c.temperature)
         << ": median steps-to-threshold " << median_text(steps) << " (" << reached << "/" << (j - i)
         << " reached), median final pass@1 " << median_text(finals) << "\n";
    i = j;
  }
  write_text_file(dir / "summary.csv", summary);
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (results[i].error) text << "cell " << cells[i].name << " failed: " << *results[i].error << "\n";
  if (failed_total > 0)
    throw std::runtime_error(text.str() + std::to_string(failed_total) + " compare cell(s) failed");
  return text.str();
}

// ---------------------------------------------------------------------------

std::string cmd_gen_tasks(const RunConfig& cfg) {
  const CountdownEnv env(cfg.env_config());
  const auto train = env.generate_tasks(cfg.task_seed, Stream::task_train, cfg.train_tasks);
  const auto val = env.generate_tasks(cfg.task_seed, Stream::task_val, cfg.val_tasks);
  const fs::path dir = output_root(cfg) / "tasks";
  write_text_file(dir / "train.jsonl", CountdownEnv::task_to_jsonl(train));
  write_text_file(dir / "val.jsonl", CountdownEnv::task_to_jsonl(val));
  std::ostringstream text;
  text << "train: " << train.size() << " tasks -> " << (dir / "train.jsonl").string() << "\n"
       << "val: " << val.size() << " tasks -> " << (dir / "val.jsonl").string() << "\n";
  return text.str();
}

}  // namespace rolloutlab
