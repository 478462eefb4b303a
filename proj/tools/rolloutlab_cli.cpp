// rolloutlab command line: rollout | train | eval | compare | gen-tasks
// Every config key is also a kebab-case flag; flags override --config values.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rolloutlab/rolloutlab.h"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct KeySpec {
  std::string name;
  std::string kind;
  std::string help;
};

std::string kebab(std::string s) {
  for (char& c : s)
    if (c == '_') c = '-';
  return s;
}

nlohmann::json convert(const std::string& kind, const std::string& text) {
  std::size_t used = 0;
  if (kind == "integer" || kind == "integer_list") {
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  }
  if (kind == "unsigned" || kind == "unsigned_list") {
    if (!text.empty() && text[0] == '-') throw std::invalid_argument(text);
    const unsigned long long v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  }
  if (kind == "real" || kind == "real_list") {
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  }
  return text;
}

bool is_list(const std::string& kind) { return kind.size() > 5 && kind.substr(kind.size() - 5) == "_list"; }

std::vector<KeySpec> load_schema() {
  char* raw = nullptr;
  if (rl_config_schema(&raw) != RL_OK) throw std::runtime_error(rl_last_error());
  const auto doc = nlohmann::json::parse(raw);
  rl_string_free(raw);
  std::vector<KeySpec> keys;
  for (const auto& e : doc)
    keys.push_back({e.at("name").get<std::string>(), e.at("kind").get<std::string>(),
                    e.at("help").get<std::string>()});
  return keys;
}

int exit_code(rl_status s) {
  switch (s) {
    case RL_OK: return 0;
    case RL_ERR_CONFIG:
    case RL_ERR_INVALID_ARGUMENT: return kExitUsage;
    default: return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<KeySpec> keys;
  try {
    keys = load_schema();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }

  CLI::App app{"Tree-based rollout laboratory on a Countdown environment"};
  app.require_subcommand(1);

  using Command = rl_status (*)(const rl_config*, char**);
  const std::vector<std::pair<std::string, std::pair<std::string, Command>>> commands{
      {"rollout", {"one group of rollouts with its event log", rl_cmd_rollout}},
      {"train", {"train a policy and write its trace", rl_cmd_train}},
      {"eval", {"evaluate a policy on validation tasks", rl_cmd_eval}},
      {"compare", {"train a matrix of algo x strategy x seed cells", rl_cmd_compare}},
      {"gen-tasks", {"write train / validation task files", rl_cmd_gen_tasks}},
  };

  std::string config_path;
  std::map<std::string, std::string> scalars;
  std::map<std::string, std::vector<std::string>> lists;
  std::map<CLI::App*, Command> handlers;
  std::map<CLI::App*, std::vector<std::pair<CLI::Option*, const KeySpec*>>> options;

  for (const auto& [name, info] : commands) {
    CLI::App* sub = app.add_subcommand(name, info.first);
    handlers[sub] = info.second;
    sub->add_option("--config", config_path, "JSON config file");
    for (const KeySpec& k : keys) {
      const std::string flag = "--" + kebab(k.name);
      const std::string help = k.help + " [" + k.kind + "]";
      CLI::Option* opt = is_list(k.kind)
                             ? sub->add_option(flag, lists[k.name], help)->delimiter(',')
                             : sub->add_option(flag, scalars[k.name], help);
      options[sub].emplace_back(opt, &k);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();

  std::string base_text;
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) {
      std::fprintf(stderr, "error: cannot read config file %s\n", config_path.c_str());
      return kExitUsage;
    }
    std::stringstream ss;
    ss << f.rdbuf();
    base_text = ss.str();
  }

  nlohmann::json overrides = nlohmann::json::object();
  for (const auto& [opt, key] : options[chosen]) {
    if (opt->count() == 0) continue;
    try {
      if (is_list(key->kind)) {
        nlohmann::json arr = nlohmann::json::array();
        for (const std::string& v : lists[key->name])
          if (!v.empty()) arr.push_back(convert(key->kind, v));
        overrides[key->name] = arr;
      } else {
        overrides[key->name] = convert(key->kind, scalars[key->name]);
      }
    } catch (const std::exception&) {
      std::fprintf(stderr, "error: --%s expects a %s value\n", kebab(key->name).c_str(), key->kind.c_str());
      return kExitUsage;
    }
  }

  rl_config* cfg = nullptr;
  const std::string override_text = overrides.dump();
  rl_status s = rl_config_parse(base_text.empty() ? nullptr : base_text.c_str(), override_text.c_str(), &cfg);
  if (s != RL_OK) {
    std::fprintf(stderr, "error: %s\n", rl_last_error());
    return exit_code(s);
  }

  char* text = nullptr;
  s = handlers[chosen](cfg, &text);
  rl_config_destroy(cfg);
  if (text) {
    std::fputs(text, stdout);
    rl_string_free(text);
  }
  if (s != RL_OK) {
    std::fprintf(stderr, "error: %s\n", rl_last_error());
    return exit_code(s);
  }
  return 0;
}
