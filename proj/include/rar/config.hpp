#pragma once

#include <cstdlib>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rar/error.hpp"
#include "rar/http_backend.hpp"
#include "rar/judge.hpp"
#include "rar/jsonl.hpp"
#include "rar/reward.hpp"
#include "rar/templates.hpp"

namespace rar {

struct RunConfig {
  std::vector<JudgeBackendSpec> backends;
  std::optional<std::string> cache_dir;
  int max_in_flight = 4;
  FailurePolicy failure_policy = FailurePolicy::Drop;
  RubricListStyle rubric_list_style = RubricListStyle::Categories;
  LikertNorm likert_norm = LikertNorm::FullRange;
  std::uint64_t seed = 0;
  // Directory all relative paths inside the config resolve against.
  std::filesystem::path base_dir = ".";
};

inline std::optional<std::string> env_value(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

namespace detail {

inline void collect(std::vector<std::string>& errors, const std::string& path,
                    const std::string& message) {
  errors.push_back(path + ": " + message);
}

}  // namespace detail

// Parses the JSON run configuration, collecting every schema violation before
// failing. JUDGE_BASE_URL and RAR_CACHE_DIR override file values; JUDGE_API_KEY
// is consulted when a remote transport is built.
inline RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir) {
  RunConfig config;
  config.base_dir = base_dir;
  std::vector<std::string> errors;

  if (j.contains("backends")) {
    if (!j["backends"].is_array()) {
      detail::collect(errors, "/backends", "must be an array");
    } else {
      for (std::size_t i = 0; i < j["backends"].size(); ++i) {
        const json& b = j["backends"][i];
        const std::string at = "/backends/" + std::to_string(i);
        JudgeBackendSpec spec;
        if (!b.is_object()) {
          detail::collect(errors, at, "must be an object");
          continue;
        }
        if (!b.contains("name") || !b["name"].is_string() ||
            b["name"].get<std::string>().empty()) {
          detail::collect(errors, at + "/name", "required non-empty string");
        } else {
          spec.name = b["name"].get<std::string>();
        }
        if (!b.contains("kind") || !b["kind"].is_string()) {
          detail::collect(errors, at + "/kind", "required string");
        } else {
          try {
            spec.kind = backend_kind_from_string(b["kind"].get<std::string>());
          } catch (const ValidationError& e) {
            detail::collect(errors, at + "/kind", e.what());
          }
        }
        if (b.contains("endpoint")) spec.endpoint = b["endpoint"].get<std::string>();
        if (b.contains("model_id")) spec.model_id = b["model_id"].get<std::string>();
        if (b.contains("temperature")) {
          if (!b["temperature"].is_number()) {
            detail::collect(errors, at + "/temperature", "must be a number");
          } else {
            spec.temperature = b["temperature"].get<double>();
            if (spec.temperature < 0.0) {
              detail::collect(errors, at + "/temperature", "must be >= 0");
            }
          }
        }
        if (b.contains("max_attempts")) {
          if (!b["max_attempts"].is_number_integer() || b["max_attempts"].get<int>() < 1) {
            detail::collect(errors, at + "/max_attempts", "must be an integer >= 1");
          } else {
            spec.max_attempts = b["max_attempts"].get<int>();
          }
        }
        if (b.contains("script_path")) spec.script_path = b["script_path"].get<std::string>();
        if (spec.kind == BackendKind::Remote) {
          if (auto base = env_value("JUDGE_BASE_URL")) spec.endpoint = *base;
          if (!spec.endpoint) {
            detail::collect(errors, at + "/endpoint",
                            "remote backend needs an endpoint (or JUDGE_BASE_URL)");
          }
          if (!spec.model_id) {
            detail::collect(errors, at + "/model_id", "remote backend needs a model_id");
          }
        }
        if (spec.kind == BackendKind::MockScripted && !spec.script_path) {
          detail::collect(errors, at + "/script_path", "mock-scripted backend needs a script");
        }
        config.backends.push_back(std::move(spec));
      }
    }
  }

  if (j.contains("cache_dir") && !j["cache_dir"].is_null()) {
    if (!j["cache_dir"].is_string()) {
      detail::collect(errors, "/cache_dir", "must be a string");
    } else {
      config.cache_dir = j["cache_dir"].get<std::string>();
    }
  }
  if (auto env_cache = env_value("RAR_CACHE_DIR")) config.cache_dir = *env_cache;

  if (j.contains("max_in_flight")) {
    if (!j["max_in_flight"].is_number_integer() || j["max_in_flight"].get<int>() < 1) {
      detail::collect(errors, "/max_in_flight", "must be an integer >= 1");
    } else {
      config.max_in_flight = j["max_in_flight"].get<int>();
    }
  }
  if (j.contains("failure_policy")) {
    try {
      config.failure_policy = failure_policy_from_string(j["failure_policy"].get<std::string>());
    } catch (const std::exception& e) {
      detail::collect(errors, "/failure_policy", e.what());
    }
  }
  if (j.contains("rubric_list_style")) {
    const std::string s = j["rubric_list_style"].is_string()
                              ? j["rubric_list_style"].get<std::string>()
                              : std::string();
    if (s == "categories") {
      config.rubric_list_style = RubricListStyle::Categories;
    } else if (s == "weights") {
      config.rubric_list_style = RubricListStyle::NumericWeights;
    } else {
      detail::collect(errors, "/rubric_list_style", "must be \"categories\" or \"weights\"");
    }
  }
  if (j.contains("likert_norm")) {
    const std::string s =
        j["likert_norm"].is_string() ? j["likert_norm"].get<std::string>() : std::string();
    if (s == "full-range") {
      config.likert_norm = LikertNorm::FullRange;
    } else if (s == "tenth-scale") {
      config.likert_norm = LikertNorm::TenthScale;
    } else {
      detail::collect(errors, "/likert_norm", "must be \"full-range\" or \"tenth-scale\"");
    }
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_integer()) {
      detail::collect(errors, "/seed", "must be an integer");
    } else {
      config.seed = j["seed"].get<std::uint64_t>();
    }
  }

  if (!errors.empty()) {
    std::string joined = "invalid configuration:";
    for (const std::string& e : errors) joined += "\n  " + e;
    throw ConfigError(joined);
  }
  return config;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  const json j = read_json(path);
  return parse_run_config(j, path.has_parent_path() ? path.parent_path() : ".");
}

// Loads one scripted response per JSONL row: either a plain string or an
// object with a "response" field.
inline std::vector<std::string> load_script(const std::filesystem::path& path) {
  std::vector<std::string> out;
  for (const json& row : read_jsonl(path)) {
    if (row.is_string()) {
      out.push_back(row.get<std::string>());
    } else if (row.is_object() && row.contains("response")) {
      out.push_back(row["response"].get<std::string>());
    } else {
      throw ValidationError(path.string() + ": each row must be a string or {response}");
    }
  }
  return out;
}

// Builds the transport for a backend spec. Remote backends fail fast here,
// before any network call, when JUDGE_API_KEY is missing.
inline std::shared_ptr<JudgeTransport> make_transport(const JudgeBackendSpec& spec,
                                                      const std::filesystem::path& base_dir) {
  switch (spec.kind) {
    case BackendKind::MockKeyword:
      return std::make_shared<KeywordTransport>();
    case BackendKind::MockScripted: {
      std::filesystem::path script(*spec.script_path);
      if (script.is_relative()) script = base_dir / script;
      return std::make_shared<ScriptedTransport>(load_script(script));
    }
    case BackendKind::Remote: {
      const auto api_key = env_value("JUDGE_API_KEY");
      if (!api_key) {
        throw ConfigError("backend \"" + spec.name +
                          "\": JUDGE_API_KEY must be set for remote backends");
      }
      return std::make_shared<RemoteTransport>(*spec.endpoint, *spec.model_id, spec.temperature,
                                               *api_key);
    }
  }
  throw ContractError("invalid BackendKind value");
}

inline void register_config_backends(JudgeGateway& gateway, const RunConfig& config) {
  for (const JudgeBackendSpec& spec : config.backends) {
    spec.validate();
    gateway.register_backend(spec, make_transport(spec, config.base_dir));
  }
}

// Inline backend shorthand: "mock:keyword", "mock:scripted:<path>", or
// "remote:<model_id>" (endpoint from JUDGE_BASE_URL). Anything else must name
// a configured backend.
inline std::string resolve_backend(JudgeGateway& gateway, const RunConfig& config,
                                   const std::string& judge_arg) {
  if (judge_arg.rfind("mock:", 0) != 0 && judge_arg.rfind("remote:", 0) != 0) {
    if (!gateway.has_backend(judge_arg)) {
      throw ConfigError("unknown judge backend: \"" + judge_arg +
                        "\" (not defined in the configuration)");
    }
    return judge_arg;
  }
  if (gateway.has_backend(judge_arg)) return judge_arg;

  JudgeBackendSpec spec;
  spec.name = judge_arg;
  if (judge_arg == "mock:keyword") {
    spec.kind = BackendKind::MockKeyword;
  } else if (judge_arg.rfind("mock:scripted:", 0) == 0) {
    spec.kind = BackendKind::MockScripted;
    spec.script_path = judge_arg.substr(std::string("mock:scripted:").size());
  } else if (judge_arg == "mock:scripted") {
    throw ConfigError("mock:scripted needs a script path: mock:scripted:<file.jsonl>");
  } else if (judge_arg.rfind("remote:", 0) == 0) {
    spec.kind = BackendKind::Remote;
    spec.model_id = judge_arg.substr(std::string("remote:").size());
    if (auto base = env_value("JUDGE_BASE_URL")) spec.endpoint = *base;
    if (!spec.endpoint) {
      throw ConfigError("remote:<model> shorthand needs JUDGE_BASE_URL to be set");
    }
  } else {
    throw ConfigError("unknown judge shorthand: \"" + judge_arg + "\"");
  }
  gateway.register_backend(spec, make_transport(spec, config.base_dir));
  return judge_arg;
}

}  // namespace rar
