#ifndef ROLLOUTLAB_H
#define ROLLOUTLAB_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RL_API __declspec(dllexport)
#else
#define RL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rl_status {
  RL_OK = 0,
  RL_ERR_INVALID_ARGUMENT = 1,
  RL_ERR_CONFIG = 2,
  RL_ERR_IO = 3,
  RL_ERR_RUNTIME = 4,
  RL_ERR_FILTER_EXHAUSTED = 5
} rl_status;

typedef struct rl_config rl_config;
typedef struct rl_policy rl_policy;

/* Message of the last failing call on this thread; "" after success. */
RL_API const char* rl_last_error(void);
RL_API const char* rl_version(void);

/* Strings returned through char** belong to the caller; free them with
   rl_string_free. */
RL_API void rl_string_free(char* s);

/* JSON array of {name, kind, help, default} describing every config key. */
RL_API rl_status rl_config_schema(char** out_json);

/* Builds a validated config from the defaults, then base_json, then
   overrides_json. Either JSON argument may be NULL. */
RL_API rl_status rl_config_parse(const char* base_json, const char* overrides_json, rl_config** out);
RL_API rl_status rl_config_to_json(const rl_config* cfg, char** out_json);
RL_API void rl_config_destroy(rl_config* cfg);

RL_API rl_status rl_policy_create(size_t vocab_size, size_t context_order, rl_policy** out);
RL_API rl_status rl_policy_load(const char* path, rl_policy** out);
RL_API rl_status rl_policy_save(const rl_policy* policy, const char* path);
/* Writes the next-token distribution after `history` (prompt and completion
   so far) into out[0..vocab_size). */
RL_API rl_status rl_policy_next_distribution(const rl_policy* policy, const int32_t* history,
                                             size_t history_len, double* out, size_t out_len);
RL_API size_t rl_policy_vocab_size(const rl_policy* policy);
RL_API void rl_policy_destroy(rl_policy* policy);

/* Commands. Files land under the configured output directory; *out_text
   receives the human-readable summary. */
RL_API rl_status rl_cmd_rollout(const rl_config* cfg, char** out_text);
RL_API rl_status rl_cmd_train(const rl_config* cfg, char** out_text);
RL_API rl_status rl_cmd_eval(const rl_config* cfg, char** out_text);
RL_API rl_status rl_cmd_compare(const rl_config* cfg, char** out_text);
RL_API rl_status rl_cmd_gen_tasks(const rl_config* cfg, char** out_text);

#ifdef __cplusplus
}
#endif

#endif
