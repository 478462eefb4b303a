#include "rolloutlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "rolloutlab/similarity.hpp"

namespace rolloutlab {

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

double round6(double x) {
  if (!std::isfinite(x)) return x;
  return std::strtod(format_number(x).c_str(), nullptr);
}

PassAtK pass_at_k(const std::vector<std::vector<bool>>& flags) {
  if (flags.empty()) throw std::invalid_argument("pass_at_k: no tasks");
  std::size_t total = 0, hits = 0, solved = 0;
  for (const auto& task : flags) {
    if (task.empty()) throw std::invalid_argument("pass_at_k: task with no samples");
    if (task.size() != flags.front().size()) throw std::invalid_argument("pass_at_k: tasks differ in sample count");
    const auto c = static_cast<std::size_t>(std::count(task.begin(), task.end(), true));
    total += task.size();
    hits += c;
    if (c > 0) ++solved;
  }
  return {static_cast<double>(hits) / static_cast<double>(total),
          static_cast<double>(solved) / static_cast<double>(flags.size())};
}

LengthStats length_stats(const std::vector<std::vector<std::size_t>>& lengths) {
  if (lengths.empty()) throw std::invalid_argument("length_stats: no groups");
  double sum = 0.0, max_sum = 0.0;
  std::size_t count = 0;
  for (const auto& group : lengths) {
    if (group.empty()) throw std::invalid_argument("length_stats: empty group");
    for (std::size_t len : group) sum += static_cast<double>(len);
    count += group.size();
    max_sum += static_cast<double>(*std::max_element(group.begin(), group.end()));
  }
  return {sum / static_cast<double>(count), max_sum / static_cast<double>(lengths.size())};
}

RolloutStats rollout_stats(std::span<const TreeStats> stats) {
  if (stats.empty()) throw std::invalid_argument("rollout_stats: no trees");
  RolloutStats out;
  std::size_t branches = 0, tokens = 0, passes = 0;
  double sat_sum = 0.0;
  for (const TreeStats& s : stats) {
    branches += s.branch_events;
    tokens += s.tokens_generated;
    passes += s.total_forward_passes();
    if (s.saturation_step) {
      ++out.saturated;
      sat_sum += static_cast<double>(*s.saturation_step);
    } else {
      ++out.unsaturated;
    }
  }
  out.branching_ratio = tokens ? static_cast<double>(branches) / static_cast<double>(tokens) : 0.0;
  if (out.saturated) out.saturation_length_mean = sat_sum / static_cast<double>(out.saturated);
  out.forward_passes_mean = static_cast<double>(passes) / static_cast<double>(stats.size());
  return out;
}

double mean_pairwise_distance(std::span<const Completion> group) {
  if (group.size() < 2) return 0.0;
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < group.size(); ++i) {
    for (std::size_t j = i + 1; j < group.size(); ++j) {
      sum += (group[i].empty() && group[j].empty()) ? 0.0 : norm_edit_distance(group[i], group[j]);
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

DiversityStats diversity_stats(const std::vector<std::vector<Completion>>& groups,
                               const CountdownEnv& env) {
  if (groups.empty()) throw std::invalid_argument("diversity_stats: no groups");
  DiversityStats out;
  for (const auto& g : groups) {
    if (g.empty()) throw std::invalid_argument("diversity_stats: empty group");
    out.distinct_answers_mean += static_cast<double>(env.distinct_answers(g));
    out.mean_pairwise_distance += mean_pairwise_distance(g);
  }
  out.distinct_answers_mean /= static_cast<double>(groups.size());
  out.mean_pairwise_distance /= static_cast<double>(groups.size());
  return out;
}

EvalReport EvalReport::rounded() const {
  EvalReport r = *this;
  for (double* x : {&r.pass1, &r.pass8, &r.len1, &r.len8, &r.distinct_answers_mean,
                    &r.mean_pairwise_distance})
    *x = round6(*x);
  for (TaskRow& t : r.per_task) t.len_mean = round6(t.len_mean);
  return r;
}

EvalReport evaluate_policy(const SoftmaxPolicy& policy, const CountdownEnv& env,
                           std::span<const CountdownTask> tasks, const SamplingConfig& sampling,
                           std::size_t samples, std::size_t n) {
  if (tasks.empty()) throw std::invalid_argument("evaluate_policy: no tasks");
  if (samples < 1) throw std::invalid_argument("evaluate_policy: samples must be >= 1");
  std::vector<std::vector<bool>> flags;
  std::vector<std::vector<std::size_t>> lengths;
  std::vector<std::vector<Completion>> groups;
  EvalReport report;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const RolloutBatch batch =
        stochastic_rollout(policy, tasks[t].prompt_tokens, env.eos(), samples, n, sampling, t, Stream::eval);
    TaskRow row;
    row.task = t;
    row.numbers = tasks[t].numbers;
    row.target = tasks[t].target;
    row.samples = samples;
    std::vector<bool> f;
    std::vector<std::size_t> lens;
    std::vector<Completion> group;
    for (const Sequence& s : batch.sequences) {
      const bool ok = env.reward(tasks[t], s.tokens).correctness == 1;
      f.push_back(ok);
      row.correct += ok ? 1 : 0;
      lens.push_back(s.tokens.size());
      group.push_back(s.tokens);
    }
    row.distinct = env.distinct_answers(group);
    double len_sum = 0.0;
    for (std::size_t l : lens) len_sum += static_cast<double>(l);
    row.len_mean = len_sum / static_cast<double>(lens.size());
    row.len_max = *std::max_element(lens.begin(), lens.end());
    report.per_task.push_back(std::move(row));
    flags.push_back(std::move(f));
    lengths.push_back(std::move(lens));
    groups.push_back(std::move(group));
  }
  const PassAtK p = pass_at_k(flags);
  const LengthStats l = length_stats(lengths);
  const DiversityStats d = diversity_stats(groups, env);
  report.pass1 = p.pass1;
  report.pass8 = p.pass8;
  report.len1 = l.len1;
  report.len8 = l.len8;
  report.distinct_answers_mean = d.distinct_answers_mean;
  report.mean_pairwise_distance = d.mean_pairwise_distance;
  return report;
}

ReportFormat parse_report_format(std::string_view name) {
  if (name == "csv") return ReportFormat::csv;
  if (name == "json") return ReportFormat::json;
  throw std::invalid_argument("unknown report format '" + std::string(name) + "' (expected csv or json)");
}

namespace {

nlohmann::ordered_json number_json(double x) { return nlohmann::ordered_json(round6(x)); }

std::string join_csv(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  out += '\n';
  return out;
}

std::string opt_number(const std::optional<double>& x) { return x ? format_number(*x) : ""; }

nlohmann::ordered_json opt_json(const std::optional<double>& x) {
  return x ? number_json(*x) : nlohmann::ordered_json(nullptr);
}

}  // namespace

std::string render_report(const EvalReport& report, ReportFormat format) {
  if (format == ReportFormat::csv) {
    std::vector<std::string> header(kReportColumns.begin(), kReportColumns.end());
    return join_csv(header) +
           join_csv({format_number(report.pass1), format_number(report.pass8),
                     format_number(report.len1), format_number(report.len8),
                     format_number(report.distinct_answers_mean),
                     format_number(report.mean_pairwise_distance),
                     std::to_string(report.per_task.size())});
  }
  nlohmann::ordered_json j;
  j["pass1"] = number_json(report.pass1);
  j["pass8"] = number_json(report.pass8);
  j["len1"] = number_json(report.len1);
  j["len8"] = number_json(report.len8);
  j["distinct_mean"] = number_json(report.distinct_answers_mean);
  j["pairwise_dist"] = number_json(report.mean_pairwise_distance);
  j["tasks"] = report.per_task.size();
  auto rows = nlohmann::ordered_json::array();
  for (const TaskRow& t : report.per_task) {
    nlohmann::ordered_json r;
    r["task"] = t.task;
    r["numbers"] = t.numbers;
    r["target"] = t.target;
    r["samples"] = t.samples;
    r["correct"] = t.correct;
    r["distinct"] = t.distinct;
    r["len_mean"] = number_json(t.len_mean);
    r["len_max"] = t.len_max;
    rows.push_back(std::move(r));
  }
  j["per_task"] = std::move(rows);
  return j.dump(2) + "\n";
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::error_code ec;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw std::runtime_error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

void emit_report(const EvalReport& report, ReportFormat format, const std::filesystem::path& path) {
  write_text_file(path, render_report(report, format));
}

EvalReport parse_report_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  EvalReport r;
  r.pass1 = j.at("pass1").get<double>();
  r.pass8 = j.at("pass8").get<double>();
  r.len1 = j.at("len1").get<double>();
  r.len8 = j.at("len8").get<double>();
  r.distinct_answers_mean = j.at("distinct_mean").get<double>();
  r.mean_pairwise_distance = j.at("pairwise_dist").get<double>();
  for (const auto& row : j.at("per_task")) {
    TaskRow t;
    t.task = row.at("task").get<std::size_t>();
    t.numbers = row.at("numbers").get<std::vector<std::int64_t>>();
    t.target = row.at("target").get<std::int64_t>();
    t.samples = row.at("samples").get<std::size_t>();
    t.correct = row.at("correct").get<std::size_t>();
    t.distinct = row.at("distinct").get<std::size_t>();
    t.len_mean = row.at("len_mean").get<double>();
    t.len_max = row.at("len_max").get<std::size_t>();
    r.per_task.push_back(std::move(t));
  }
  return r;
}

EvalReport load_report(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_report_json(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

std::string trace_csv_header() {
  return join_csv(std::vector<std::string>(kTraceColumns.begin(), kTraceColumns.end()));
}

std::string trace_csv_row(const TraceRow& row) {
  return join_csv({std::to_string(row.step), row.algo, row.strategy, opt_number(row.pass1),
                   opt_number(row.pass8), opt_number(row.len1), opt_number(row.len8),
                   format_number(row.distinct_mean), format_number(row.pairwise_dist),
                   format_number(row.branch_ratio), opt_number(row.sat_len),
                   std::to_string(row.fwd_passes), format_number(row.eta)});
}

std::string trace_csv(std::span<const TraceRow> rows) {
  std::string out = trace_csv_header();
  for (const TraceRow& r : rows) out += trace_csv_row(r);
  return out;
}

nlohmann::ordered_json trace_row_json(const TraceRow& row) {
  nlohmann::ordered_json j;
  j["step"] = row.step;
  j["algo"] = row.algo;
  j["strategy"] = row.strategy;
  j["pass1"] = opt_json(row.pass1);
  j["pass8"] = opt_json(row.pass8);
  j["len1"] = opt_json(row.len1);
  j["len8"] = opt_json(row.len8);
  j["distinct_mean"] = number_json(row.distinct_mean);
  j["pairwise_dist"] = number_json(row.pairwise_dist);
  j["branch_ratio"] = number_json(row.branch_ratio);
  j["sat_len"] = opt_json(row.sat_len);
  j["fwd_passes"] = row.fwd_passes;
  j["eta"] = number_json(row.eta);
  j["reward_mean"] = number_json(row.reward_mean);
  return j;
}

std::string trace_json(std::span<const TraceRow> rows) {
  auto arr = nlohmann::ordered_json::array();
  for (const TraceRow& r : rows) arr.push_back(trace_row_json(r));
  return arr.dump(1) + "\n";
}

}  // namespace rolloutlab
