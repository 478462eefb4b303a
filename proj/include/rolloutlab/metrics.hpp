#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rolloutlab/countdown.hpp"
#include "rolloutlab/lookahead_tree.hpp"
#include "rolloutlab/sampling.hpp"
#include "rolloutlab/token_policy.hpp"

namespace rolloutlab {

/// "%.6g"; non-finite values render as "nan" / "inf" / "-inf".
std::string format_number(double x);
/// x rounded to the value format_number prints.
double round6(double x);

struct PassAtK {
  double pass1 = 0.0;
  double pass8 = 0.0;
};

/// pass1: mean over all flags. pass8: fraction of tasks with any true flag.
/// Every task must carry the same number of flags.
PassAtK pass_at_k(const std::vector<std::vector<bool>>& flags);

struct LengthStats {
  double len1 = 0.0;
  double len8 = 0.0;
};

/// len1: mean length over all completions. len8: mean over tasks of the
/// longest completion in the group.
LengthStats length_stats(const std::vector<std::vector<std::size_t>>& lengths);

struct RolloutStats {
  double branching_ratio = 0.0;
  /// Mean over trees that saturated; empty when none did.
  std::optional<double> saturation_length_mean;
  std::size_t saturated = 0;
  std::size_t unsaturated = 0;
  double forward_passes_mean = 0.0;
};

RolloutStats rollout_stats(std::span<const TreeStats> stats);

using Completion = std::vector<TokenId>;

/// Mean normalized edit distance over unordered pairs; 0 for groups of one.
double mean_pairwise_distance(std::span<const Completion> group);

struct DiversityStats {
  double distinct_answers_mean = 0.0;
  double mean_pairwise_distance = 0.0;
};

/// Both measures averaged over groups.
DiversityStats diversity_stats(const std::vector<std::vector<Completion>>& groups,
                               const CountdownEnv& env);

struct TaskRow {
  std::size_t task = 0;
  std::vector<std::int64_t> numbers;
  std::int64_t target = 0;
  std::size_t samples = 0;
  std::size_t correct = 0;
  std::size_t distinct = 0;
  double len_mean = 0.0;
  std::size_t len_max = 0;

  bool operator==(const TaskRow&) const = default;
};

struct EvalReport {
  double pass1 = 0.0;
  double pass8 = 0.0;
  double len1 = 0.0;
  double len8 = 0.0;
  /// Mean over tasks of the distinct-answer count of each task's samples.
  double distinct_answers_mean = 0.0;
  double mean_pairwise_distance = 0.0;
  std::vector<TaskRow> per_task;

  /// Copy with every real rounded as it is written to disk.
  EvalReport rounded() const;
  bool operator==(const EvalReport&) const = default;
};

/// `samples` completions per task under `sampling`; sample i of task t draws
/// from the stream (sampling.seed, eval, t, i), so reports depend only on the
/// policy and the seed.
EvalReport evaluate_policy(const SoftmaxPolicy& policy, const CountdownEnv& env,
                           std::span<const CountdownTask> tasks, const SamplingConfig& sampling,
                           std::size_t samples, std::size_t n);

enum class ReportFormat { csv, json };

ReportFormat parse_report_format(std::string_view name);

/// CSV: header plus one summary row (see kReportColumns). JSON: summary plus
/// per_task rows.
std::string render_report(const EvalReport& report, ReportFormat format);
void emit_report(const EvalReport& report, ReportFormat format, const std::filesystem::path& path);
EvalReport parse_report_json(std::string_view text);
EvalReport load_report(const std::filesystem::path& path);

inline constexpr std::array<std::string_view, 7> kReportColumns{
    "pass1", "pass8", "len1", "len8", "distinct_mean", "pairwise_dist", "tasks"};

/// One training step. Validation fields are empty on steps without an eval.
struct TraceRow {
  std::size_t step = 0;
  std::string algo;
  std::string strategy;
  double reward_mean = 0.0;
  std::optional<double> pass1;
  std::optional<double> pass8;
  std::optional<double> len1;
  std::optional<double> len8;
  /// Rollout diversity of the step's training groups.
  double distinct_mean = 0.0;
  double pairwise_dist = 0.0;
  double branch_ratio = 0.0;
  std::optional<double> sat_len;
  std::size_t fwd_passes = 0;
  double eta = 0.0;
};

inline constexpr std::array<std::string_view, 13> kTraceColumns{
    "step",          "algo",         "strategy", "pass1",  "pass8",      "len1", "len8",
    "distinct_mean", "pairwise_dist", "branch_ratio", "sat_len", "fwd_passes", "eta"};

std::string trace_csv_header();
std::string trace_csv_row(const TraceRow& row);
std::string trace_csv(std::span<const TraceRow> rows);
nlohmann::ordered_json trace_row_json(const TraceRow& row);
std::string trace_json(std::span<const TraceRow> rows);

/// Writes `text` to `path`, creating parent directories.
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace rolloutlab
