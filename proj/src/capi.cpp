#include "rolloutlab/rolloutlab.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include <json.hpp>

#include "rolloutlab/commands.hpp"
#include "rolloutlab/config.hpp"
#include "rolloutlab/rl_core.hpp"
#include "rolloutlab/token_policy.hpp"

struct rl_config {
  rolloutlab::RunConfig cfg;
};

struct rl_policy {
  rolloutlab::SoftmaxPolicy policy;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <class F>
rl_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return RL_OK;
  } catch (const rolloutlab::ConfigError& e) {
    g_last_error = e.what();
    return RL_ERR_CONFIG;
  } catch (const rolloutlab::FilterExhausted& e) {
    g_last_error = e.what();
    return RL_ERR_FILTER_EXHAUSTED;
  } catch (const rolloutlab::IoError& e) {
    g_last_error = e.what();
    return RL_ERR_IO;
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("invalid JSON: ") + e.what();
    return RL_ERR_CONFIG;
  } catch (const std::invalid_argument& e) {
    g_last_error = e.what();
    return RL_ERR_INVALID_ARGUMENT;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return RL_ERR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return RL_ERR_RUNTIME;
  }
}

rl_status null_arg(const char* what) {
  g_last_error = std::string(what) + " must not be NULL";
  return RL_ERR_INVALID_ARGUMENT;
}

nlohmann::json parse_optional(const char* text) {
  if (!text || !*text) return nullptr;
  return nlohmann::json::parse(text);
}

template <class Cmd>
rl_status run_command(const rl_config* cfg, char** out_text, Cmd cmd) {
  if (!cfg) return null_arg("cfg");
  if (!out_text) return null_arg("out_text");
  *out_text = nullptr;
  return guarded([&] { *out_text = dup_string(cmd(cfg->cfg)); });
}

}  // namespace

extern "C" {

const char* rl_last_error(void) { return g_last_error.c_str(); }

const char* rl_version(void) { return "0.1.0"; }

void rl_string_free(char* s) { std::free(s); }

rl_status rl_config_schema(char** out_json) {
  if (!out_json) return null_arg("out_json");
  return guarded([&] { *out_json = dup_string(rolloutlab::config_schema().dump()); });
}

rl_status rl_config_parse(const char* base_json, const char* overrides_json, rl_config** out) {
  if (!out) return null_arg("out");
  *out = nullptr;
  return guarded([&] {
    const auto base = parse_optional(base_json);
    const auto overrides = parse_optional(overrides_json);
    *out = new rl_config{rolloutlab::parse_run_config(base, overrides)};
  });
}

rl_status rl_config_to_json(const rl_config* cfg, char** out_json) {
  if (!cfg) return null_arg("cfg");
  if (!out_json) return null_arg("out_json");
  return guarded([&] { *out_json = dup_string(rolloutlab::to_json(cfg->cfg).dump(2)); });
}

void rl_config_destroy(rl_config* cfg) { delete cfg; }

rl_status rl_policy_create(size_t vocab_size, size_t context_order, rl_policy** out) {
  if (!out) return null_arg("out");
  *out = nullptr;
  return guarded([&] { *out = new rl_policy{rolloutlab::SoftmaxPolicy(vocab_size, context_order)}; });
}

rl_status rl_policy_load(const char* path, rl_policy** out) {
  if (!path) return null_arg("path");
  if (!out) return null_arg("out");
  *out = nullptr;
  return guarded([&] { *out = new rl_policy{rolloutlab::SoftmaxPolicy::load(path)}; });
}

rl_status rl_policy_save(const rl_policy* policy, const char* path) {
  if (!policy) return null_arg("policy");
  if (!path) return null_arg("path");
  return guarded([&] { policy->policy.save(path); });
}

rl_status rl_policy_next_distribution(const rl_policy* policy, const int32_t* history,
                                      size_t history_len, double* out, size_t out_len) {
  if (!policy) return null_arg("policy");
  if (!history && history_len > 0) return null_arg("history");
  if (!out) return null_arg("out");
  return guarded([&] {
    const auto& p = policy->policy;
    if (out_len < p.vocab_size()) throw std::invalid_argument("output buffer shorter than the vocabulary");
    const std::span<const rolloutlab::TokenId> hist(history, history_len);
    const auto dist = p.next_distribution(p.context_for({}, hist));
    std::copy(dist.begin(), dist.end(), out);
  });
}

size_t rl_policy_vocab_size(const rl_policy* policy) { return policy ? policy->policy.vocab_size() : 0; }

void rl_policy_destroy(rl_policy* policy) { delete policy; }

rl_status rl_cmd_rollout(const rl_config* cfg, char** out_text) {
  return run_command(cfg, out_text, rolloutlab::cmd_rollout);
}
rl_status rl_cmd_train(const rl_config* cfg, char** out_text) {
  return run_command(cfg, out_text, rolloutlab::cmd_train);
}
rl_status rl_cmd_eval(const rl_config* cfg, char** out_text) {
  return run_command(cfg, out_text, rolloutlab::cmd_eval);
}
rl_status rl_cmd_compare(const rl_config* cfg, char** out_text) {
  return run_command(cfg, out_text, rolloutlab::cmd_compare);
}
rl_status rl_cmd_gen_tasks(const rl_config* cfg, char** out_text) {
  return run_command(cfg, out_text, rolloutlab::cmd_gen_tasks);
}

}  // extern "C"
