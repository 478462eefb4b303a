#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rolloutlab/countdown.hpp"
#include "rolloutlab/training.hpp"

namespace rolloutlab {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Every setting a command can read. Keys are the snake_case field names.
struct RunConfig {
  std::string algo = "grpo";
  std::string strategy = "latr";
  std::string variant = "none";
  double variant_rate = 0.0;

  double tau_abs = 0.25;
  double tau_rel = 0.15;
  double tau_ed = 0.4;
  std::vector<std::uint64_t> windows{20, 30, 50};
  std::string prune_metric = "edit";
  std::uint64_t k = 8;
  std::uint64_t n = 24;

  double temperature = 1.0;
  std::int64_t top_k = -1;
  double top_p = 1.0;
  double eval_temperature = 0.6;
  std::int64_t eval_top_k = 20;
  double eval_top_p = 0.95;
  std::uint64_t eval_samples = 8;
  std::uint64_t sr_oversample = 16;

  double hybrid_eta0 = 1.0;
  double hybrid_gamma = 0.985;
  double clip_eps = 0.2;
  double kl_beta = 0.01;
  double clip_low = 0.2;
  double clip_high = 0.28;
  double oversample_factor = 1.5;
  double learning_rate = 0.05;
  std::uint64_t batch_size = 8;
  std::uint64_t steps = 500;
  std::uint64_t eval_every = 10;
  std::uint64_t max_regenerations = 1024;
  std::uint64_t checkpoint_every = 0;
  std::uint64_t context_order = 2;

  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::uint64_t task_seed = 0;

  std::uint64_t env_count = 3;
  std::int64_t env_value_min = 1;
  std::int64_t env_value_max = 9;
  std::int64_t env_target_min = 1;
  std::int64_t env_target_max = 30;
  std::uint64_t env_max_attempts = 10000;
  std::uint64_t train_tasks = 1000;
  std::uint64_t val_tasks = 200;
  std::string train_task_file;
  std::string val_task_file;

  std::string output_dir = "runs";
  std::string checkpoint;
  std::string policy_fixture = "none";
  std::uint64_t task_index = 0;
  std::vector<std::int64_t> task_numbers;
  std::int64_t task_target = 0;

  double threshold = 0.6;
  std::vector<std::string> compare_algos{"grpo"};
  std::vector<std::string> compare_strategies{"latr", "stochastic"};
  std::vector<std::uint64_t> sweep_k;
  std::vector<double> sweep_temperature;
  std::uint64_t workers = 1;

  /// Checks every field against the invariants of the module that uses it.
  /// Throws ConfigError naming the key.
  void validate() const;

  EnvConfig env_config() const;
  LatrConfig latr_config() const;
  LatrVariant latr_variant() const;
  SamplingConfig sampling_config() const;
  SamplingConfig eval_sampling_config() const;
  TrainConfig train_config() const;
};

enum class KeyKind { integer, unsigned_integer, real, string, int_list, uint_list, real_list, string_list };

const char* to_string(KeyKind kind);

struct ConfigKey {
  std::string name;
  KeyKind kind;
  std::string help;
  std::function<nlohmann::ordered_json(const RunConfig&)> get;
  /// Throws ConfigError on a type mismatch.
  std::function<void(RunConfig&, const nlohmann::json&)> set;
};

const std::vector<ConfigKey>& config_keys();

/// [{"name", "kind", "help", "default"}...]
nlohmann::ordered_json config_schema();

/// Applies `overrides` on top of `base` on top of the defaults, then validates.
/// Unknown keys and type mismatches raise ConfigError.
RunConfig parse_run_config(const nlohmann::json& base, const nlohmann::json& overrides);

nlohmann::ordered_json to_json(const RunConfig& cfg);

}  // namespace rolloutlab
