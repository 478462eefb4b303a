#include "rolloutlab/config.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <type_traits>

namespace rolloutlab {

const char* to_string(KeyKind kind) {
  switch (kind) {
    case KeyKind::integer: return "integer";
    case KeyKind::unsigned_integer: return "unsigned";
    case KeyKind::real: return "real";
    case KeyKind::string: return "string";
    case KeyKind::int_list: return "integer_list";
    case KeyKind::uint_list: return "unsigned_list";
    case KeyKind::real_list: return "real_list";
    case KeyKind::string_list: return "string_list";
  }
  return "string";
}

namespace {

template <class T>
T convert_scalar(const std::string& key, const nlohmann::json& j) {
  if constexpr (std::is_same_v<T, std::string>) {
    if (!j.is_string()) throw ConfigError("config key '" + key + "': expected a string");
    return j.get<std::string>();
  } else if constexpr (std::is_same_v<T, double>) {
    if (!j.is_number()) throw ConfigError("config key '" + key + "': expected a number");
    return j.get<double>();
  } else if constexpr (std::is_same_v<T, std::uint64_t>) {
    if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0))
      throw ConfigError("config key '" + key + "': expected a non-negative integer");
    return j.get<std::uint64_t>();
  } else {
    if (!j.is_number_integer()) throw ConfigError("config key '" + key + "': expected an integer");
    return j.get<std::int64_t>();
  }
}

template <class T>
struct KindOf;
template <> struct KindOf<std::int64_t> { static constexpr KeyKind value = KeyKind::integer; };
template <> struct KindOf<std::uint64_t> { static constexpr KeyKind value = KeyKind::unsigned_integer; };
template <> struct KindOf<double> { static constexpr KeyKind value = KeyKind::real; };
template <> struct KindOf<std::string> { static constexpr KeyKind value = KeyKind::string; };
template <> struct KindOf<std::vector<std::int64_t>> { static constexpr KeyKind value = KeyKind::int_list; };
template <> struct KindOf<std::vector<std::uint64_t>> { static constexpr KeyKind value = KeyKind::uint_list; };
template <> struct KindOf<std::vector<double>> { static constexpr KeyKind value = KeyKind::real_list; };
template <> struct KindOf<std::vector<std::string>> { static constexpr KeyKind value = KeyKind::string_list; };

template <class T>
struct IsVector : std::false_type {};
template <class U>
struct IsVector<std::vector<U>> : std::true_type {};

template <class T>
ConfigKey make_key(std::string name, T RunConfig::*member, std::string help) {
  ConfigKey key;
  key.name = name;
  key.kind = KindOf<T>::value;
  key.help = std::move(help);
  key.get = [member](const RunConfig& c) { return nlohmann::ordered_json(c.*member); };
  key.set = [member, name](RunConfig& c, const nlohmann::json& j) {
    if constexpr (IsVector<T>::value) {
      if (!j.is_array()) throw ConfigError("config key '" + name + "': expected a list");
      T out;
      for (const auto& e : j) out.push_back(convert_scalar<typename T::value_type>(name, e));
      c.*member = std::move(out);
    } else {
      c.*member = convert_scalar<T>(name, j);
    }
  };
  return key;
}

std::vector<ConfigKey> build_keys() {
  using C = RunConfig;
  return {
      make_key("algo", &C::algo, "grpo | dapo"),
      make_key("strategy", &C::strategy, "latr | stochastic | sr | latr_variant"),
      make_key("variant", &C::variant, "none | random_branch | random_prune | no_prune"),
      make_key("variant_rate", &C::variant_rate, "Bernoulli rate of the random variants"),
      make_key("tau_abs", &C::tau_abs, "branch candidate probability floor"),
      make_key("tau_rel", &C::tau_rel, "branch candidate gap to the top token"),
      make_key("tau_ed", &C::tau_ed, "prune when window divergence falls below this"),
      make_key("windows", &C::windows, "lookahead lengths, strictly ascending"),
      make_key("prune_metric", &C::prune_metric, "edit | rouge_l | suffix | bleu_rouge_avg"),
      make_key("k", &C::k, "rollouts per prompt"),
      make_key("n", &C::n, "max completion length"),
      make_key("temperature", &C::temperature, "rollout temperature"),
      make_key("top_k", &C::top_k, "rollout top-k, -1 for unlimited"),
      make_key("top_p", &C::top_p, "rollout nucleus mass"),
      make_key("eval_temperature", &C::eval_temperature, "evaluation temperature"),
      make_key("eval_top_k", &C::eval_top_k, "evaluation top-k, -1 for unlimited"),
      make_key("eval_top_p", &C::eval_top_p, "evaluation nucleus mass"),
      make_key("eval_samples", &C::eval_samples, "completions per validation task"),
      make_key("sr_oversample", &C::sr_oversample, "pool size of selection-based rollout"),
      make_key("hybrid_eta0", &C::hybrid_eta0, "initial tree share of each group"),
      make_key("hybrid_gamma", &C::hybrid_gamma, "per-step decay of the tree share"),
      make_key("clip_eps", &C::clip_eps, "GRPO clip range"),
      make_key("kl_beta", &C::kl_beta, "GRPO KL weight"),
      make_key("clip_low", &C::clip_low, "DAPO lower clip"),
      make_key("clip_high", &C::clip_high, "DAPO upper clip"),
      make_key("oversample_factor", &C::oversample_factor, "DAPO prompt oversampling"),
      make_key("learning_rate", &C::learning_rate, "gradient ascent step size"),
      make_key("batch_size", &C::batch_size, "prompts per update"),
      make_key("steps", &C::steps, "training steps"),
      make_key("eval_every", &C::eval_every, "validate every N steps (0: last step only)"),
      make_key("max_regenerations", &C::max_regenerations, "DAPO refill cap per step"),
      make_key("checkpoint_every", &C::checkpoint_every, "save the policy every N steps (0: final only)"),
      make_key("context_order", &C::context_order, "tokens of history the policy sees"),
      make_key("seed", &C::seed, "run seed"),
      make_key("seeds", &C::seeds, "seeds of a compare matrix"),
      make_key("task_seed", &C::task_seed, "seed of generated task sets"),
      make_key("env_count", &C::env_count, "numbers per task"),
      make_key("env_value_min", &C::env_value_min, "smallest task number"),
      make_key("env_value_max", &C::env_value_max, "largest task number"),
      make_key("env_target_min", &C::env_target_min, "smallest target"),
      make_key("env_target_max", &C::env_target_max, "largest target"),
      make_key("env_max_attempts", &C::env_max_attempts, "rejection-sampling cap per task"),
      make_key("train_tasks", &C::train_tasks, "generated training tasks"),
      make_key("val_tasks", &C::val_tasks, "generated validation tasks"),
      make_key("train_task_file", &C::train_task_file, "JSON-lines training tasks (overrides generation)"),
      make_key("val_task_file", &C::val_task_file, "JSON-lines validation tasks (overrides generation)"),
      make_key("output_dir", &C::output_dir, "root of every file written"),
      make_key("checkpoint", &C::checkpoint, "policy file to start from"),
      make_key("policy_fixture", &C::policy_fixture, "none | collapse | oracle"),
      make_key("task_index", &C::task_index, "validation task used by rollout"),
      make_key("task_numbers", &C::task_numbers, "explicit rollout task numbers"),
      make_key("task_target", &C::task_target, "explicit rollout task target"),
      make_key("threshold", &C::threshold, "validation pass@1 for steps-to-threshold"),
      make_key("compare_algos", &C::compare_algos, "algos of a compare matrix"),
      make_key("compare_strategies", &C::compare_strategies,
               "strategies of a compare matrix; no_prune, random_branch and random_prune name variants"),
      make_key("sweep_k", &C::sweep_k, "k values of a compare sweep"),
      make_key("sweep_temperature", &C::sweep_temperature, "temperatures of a compare sweep"),
      make_key("workers", &C::workers, "compare cells run in parallel"),
  };
}

template <class F>
void wrap(const char* key, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void apply(RunConfig& cfg, const nlohmann::json& doc, const char* origin) {
  if (doc.is_null()) return;
  if (!doc.is_object()) throw ConfigError(std::string(origin) + ": expected a JSON object");
  const auto& keys = config_keys();
  for (const auto& [name, value] : doc.items()) {
    auto it = std::find_if(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.name == name; });
    if (it == keys.end()) throw ConfigError(std::string(origin) + ": unknown config key '" + name + "'");
    it->set(cfg, value);
  }
}

bool is_variant_name(const std::string& s) {
  return s == "no_prune" || s == "random_branch" || s == "random_prune";
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

nlohmann::ordered_json config_schema() {
  const RunConfig defaults;
  auto arr = nlohmann::ordered_json::array();
  for (const ConfigKey& k : config_keys()) {
    nlohmann::ordered_json e;
    e["name"] = k.name;
    e["kind"] = to_string(k.kind);
    e["help"] = k.help;
    e["default"] = k.get(defaults);
    arr.push_back(std::move(e));
  }
  return arr;
}

nlohmann::ordered_json to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  for (const ConfigKey& k : config_keys()) j[k.name] = k.get(cfg);
  return j;
}

RunConfig parse_run_config(const nlohmann::json& base, const nlohmann::json& overrides) {
  RunConfig cfg;
  apply(cfg, base, "config file");
  apply(cfg, overrides, "overrides");
  cfg.validate();
  return cfg;
}

EnvConfig RunConfig::env_config() const {
  EnvConfig e;
  e.count = env_count;
  e.value_min = env_value_min;
  e.value_max = env_value_max;
  e.target_min = env_target_min;
  e.target_max = env_target_max;
  e.max_attempts = env_max_attempts;
  return e;
}

LatrConfig RunConfig::latr_config() const {
  LatrConfig c;
  c.tau_abs = tau_abs;
  c.tau_rel = tau_rel;
  c.tau_ed = tau_ed;
  c.windows.assign(windows.begin(), windows.end());
  c.k = k;
  c.n = n;
  c.prune_metric = parse_similarity_metric(prune_metric);
  return c;
}

LatrVariant RunConfig::latr_variant() const {
  return LatrVariant{parse_variant_kind(variant), variant_rate};
}

SamplingConfig RunConfig::sampling_config() const {
  return SamplingConfig{temperature, static_cast<int>(top_k), top_p, seed};
}

SamplingConfig RunConfig::eval_sampling_config() const {
  return SamplingConfig{eval_temperature, static_cast<int>(eval_top_k), eval_top_p, seed};
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.algo = parse_algo(algo);
  t.strategy = parse_strategy(strategy);
  t.latr = latr_config();
  t.variant = latr_variant();
  t.sampling = sampling_config();
  t.eval_sampling = eval_sampling_config();
  t.eval_samples = eval_samples;
  t.sr_oversample = sr_oversample;
  t.hybrid = HybridSchedule{hybrid_eta0, hybrid_gamma};
  t.grpo = GrpoConfig{clip_eps, kl_beta, learning_rate};
  t.dapo = DapoConfig{clip_low, clip_high, oversample_factor, learning_rate};
  t.batch_size = batch_size;
  t.steps = steps;
  t.eval_every = eval_every;
  t.max_regenerations = max_regenerations;
  t.seed = seed;
  return t;
}

void RunConfig::validate() const {
  wrap("algo", [&] { parse_algo(algo); });
  wrap("strategy", [&] { parse_strategy(strategy); });
  wrap("variant", [&] { parse_variant_kind(variant); });
  wrap("variant_rate", [&] { latr_variant().validate(); });
  wrap("prune_metric", [&] { parse_similarity_metric(prune_metric); });
  wrap("windows", [&] { latr_config().validate(); });
  if (top_k < -1 || top_k == 0 || top_k > std::numeric_limits<int>::max())
    throw ConfigError("config key 'top_k': expected -1 or a positive integer");
  if (eval_top_k < -1 || eval_top_k == 0 || eval_top_k > std::numeric_limits<int>::max())
    throw ConfigError("config key 'eval_top_k': expected -1 or a positive integer");
  wrap("temperature", [&] { sampling_config().validate(); });
  wrap("eval_temperature", [&] { eval_sampling_config().validate(); });
  wrap("env_count", [&] { env_config().validate(); });
  wrap("hybrid_gamma", [&] { HybridSchedule{hybrid_eta0, hybrid_gamma}.validate(); });
  wrap("clip_eps", [&] { GrpoConfig{clip_eps, kl_beta, learning_rate}.validate(); });
  wrap("clip_high", [&] { DapoConfig{clip_low, clip_high, oversample_factor, learning_rate}.validate(); });
  if (context_order < 1 || context_order > 64)
    throw ConfigError("config key 'context_order': expected 1..64");
  if (k < 2) throw ConfigError("config key 'k': expected >= 2");
  if (batch_size < 1) throw ConfigError("config key 'batch_size': expected >= 1");
  if (eval_samples < 1) throw ConfigError("config key 'eval_samples': expected >= 1");
  if (strategy == "sr" && sr_oversample < k)
    throw ConfigError("config key 'sr_oversample': must be >= k");
  if (strategy == "latr_variant" && variant == "none")
    throw ConfigError("config key 'variant': strategy latr_variant needs a variant");
  if (policy_fixture != "none" && policy_fixture != "collapse" && policy_fixture != "oracle")
    throw ConfigError("config key 'policy_fixture': expected none, collapse or oracle");
  if (!policy_fixture.empty() && policy_fixture != "none" && !checkpoint.empty())
    throw ConfigError("config key 'policy_fixture': cannot be combined with 'checkpoint'");
  if (output_dir.empty()) throw ConfigError("config key 'output_dir': must not be empty");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("config key 'threshold': expected [0, 1]");
  if (val_tasks < 1 && val_task_file.empty()) throw ConfigError("config key 'val_tasks': expected >= 1");
  if (!task_numbers.empty()) {
    if (task_target < 1) throw ConfigError("config key 'task_target': expected >= 1 with task_numbers");
    for (std::int64_t v : task_numbers)
      if (v < 1 || v > std::max(env_value_max, env_target_max))
        throw ConfigError("config key 'task_numbers': value " + std::to_string(v) + " has no token");
    if (task_target > std::max(env_value_max, env_target_max))
      throw ConfigError("config key 'task_target': value has no token");
  }
  for (const std::string& a : compare_algos) wrap("compare_algos", [&] { parse_algo(a); });
  for (const std::string& s : compare_strategies)
    if (!is_variant_name(s)) wrap("compare_strategies", [&] { parse_strategy(s); });
  for (std::uint64_t kk : sweep_k)
    if (kk < 2) throw ConfigError("config key 'sweep_k': values must be >= 2");
  for (double t : sweep_temperature)
    if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError("config key 'sweep_temperature': values must be > 0");
  if (workers < 1) throw ConfigError("config key 'workers': expected >= 1");
}

}  // namespace rolloutlab
