#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "rolloutlab/config.hpp"
#include "rolloutlab/countdown.hpp"
#include "rolloutlab/token_policy.hpp"

namespace rolloutlab {

/// Overrides output_dir when set and non-empty.
inline constexpr const char* kOutputRootEnv = "ROLLOUTLAB_OUTPUT_ROOT";

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::filesystem::path output_root(const RunConfig& cfg);

/// Training / validation tasks from files or from the task seed.
std::vector<CountdownTask> train_tasks(const RunConfig& cfg, const CountdownEnv& env);
std::vector<CountdownTask> val_tasks(const RunConfig& cfg, const CountdownEnv& env);

/// The checkpoint, a fixture, or a fresh uniform policy.
SoftmaxPolicy initial_policy(const RunConfig& cfg, const CountdownEnv& env,
                             const std::vector<CountdownTask>& tasks);

/// Each command writes under output_root(cfg)/<command>/ and returns the text
/// meant for standard output. Errors propagate as exceptions: ConfigError for
/// invalid settings, IoError for files, FilterExhausted, std::runtime_error.
std::string cmd_rollout(const RunConfig& cfg);
std::string cmd_train(const RunConfig& cfg);
std::string cmd_eval(const RunConfig& cfg);
std::string cmd_compare(const RunConfig& cfg);
std::string cmd_gen_tasks(const RunConfig& cfg);

}  // namespace rolloutlab
