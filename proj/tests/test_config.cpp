#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "rar/config.hpp"

using namespace rar;

namespace {

struct EnvVar {
  std::string name;
  std::optional<std::string> saved;
  explicit EnvVar(const char* n) : name(n) {
    if (const char* v = std::getenv(n)) saved = v;
  }
  void set(const std::string& value) { ::setenv(name.c_str(), value.c_str(), 1); }
  void clear() { ::unsetenv(name.c_str()); }
  ~EnvVar() {
    if (saved) {
      ::setenv(name.c_str(), saved->c_str(), 1);
    } else {
      ::unsetenv(name.c_str());
    }
  }
};

json minimal_config() {
  return json{{"backends", json::array({json{{"name", "kw"}, {"kind", "mock-keyword"}}})}};
}

}  // namespace

TEST_CASE("minimal config with one mock backend is valid") {
  EnvVar cache_env("RAR_CACHE_DIR");
  cache_env.clear();
  RunConfig config = parse_run_config(minimal_config(), ".");
  REQUIRE(config.backends.size() == 1);
  CHECK(config.backends[0].kind == BackendKind::MockKeyword);
  CHECK(config.max_in_flight == 4);
  CHECK_FALSE(config.cache_dir.has_value());
}

TEST_CASE("schema violations are collected exhaustively with pointer-style paths") {
  EnvVar base_env("JUDGE_BASE_URL");
  base_env.clear();
  json bad{{"backends", json::array({
                json{{"name", ""}, {"kind", "mock-keyword"}},
                json{{"name", "r"}, {"kind", "remote"}},
                json{{"name", "s"}, {"kind", "mock-scripted"}},
            })},
           {"max_in_flight", 0},
           {"failure_policy", "sometimes"}};
  try {
    parse_run_config(bad, ".");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("/backends/0/name") != std::string::npos);
    CHECK(msg.find("/backends/1/endpoint") != std::string::npos);
    CHECK(msg.find("/backends/1/model_id") != std::string::npos);
    CHECK(msg.find("/backends/2/script_path") != std::string::npos);
    CHECK(msg.find("/max_in_flight") != std::string::npos);
    CHECK(msg.find("/failure_policy") != std::string::npos);
  }
}

TEST_CASE("environment variables override file values") {
  SECTION("JUDGE_BASE_URL replaces remote endpoints") {
    EnvVar base_env("JUDGE_BASE_URL");
    base_env.set("https://override.test/v2");
    json j{{"backends", json::array({json{{"name", "r"},
                                          {"kind", "remote"},
                                          {"endpoint", "https://file.test/v1"},
                                          {"model_id", "judge-1"}}})}};
    RunConfig config = parse_run_config(j, ".");
    CHECK(config.backends[0].endpoint == "https://override.test/v2");
  }
  SECTION("RAR_CACHE_DIR replaces cache_dir") {
    EnvVar cache_env("RAR_CACHE_DIR");
    cache_env.set("/tmp/env-cache");
    json j = minimal_config();
    j["cache_dir"] = "file-cache";
    RunConfig config = parse_run_config(j, ".");
    CHECK(config.cache_dir == "/tmp/env-cache");
  }
}

TEST_CASE("remote transports fail fast without JUDGE_API_KEY") {
  EnvVar key_env("JUDGE_API_KEY");
  key_env.clear();
  JudgeBackendSpec spec;
  spec.name = "r";
  spec.kind = BackendKind::Remote;
  spec.endpoint = "https://example.test/v1";
  spec.model_id = "judge-1";
  CHECK_THROWS_AS(make_transport(spec, "."), ConfigError);

  key_env.set("sk-test");
  CHECK_NOTHROW(make_transport(spec, "."));
}

TEST_CASE("backend shorthands") {
  GatewayOptions options;
  options.backoff_base_ms = 0;
  JudgeGateway gw(options);
  RunConfig config;

  SECTION("mock:keyword registers on demand") {
    const std::string name = resolve_backend(gw, config, "mock:keyword");
    CHECK(name == "mock:keyword");
    CHECK(gw.has_backend("mock:keyword"));
    CHECK(gw.backend(name).kind == BackendKind::MockKeyword);
  }
  SECTION("mock:scripted requires a path") {
    CHECK_THROWS_AS(resolve_backend(gw, config, "mock:scripted"), ConfigError);
  }
  SECTION("unknown named backend is a config error") {
    CHECK_THROWS_AS(resolve_backend(gw, config, "nonexistent"), ConfigError);
  }
  SECTION("remote shorthand needs JUDGE_BASE_URL") {
    EnvVar base_env("JUDGE_BASE_URL");
    EnvVar key_env("JUDGE_API_KEY");
    base_env.clear();
    CHECK_THROWS_AS(resolve_backend(gw, config, "remote:judge-1"), ConfigError);
    base_env.set("https://example.test/v1");
    key_env.set("sk-test");
    CHECK(resolve_backend(gw, config, "remote:judge-1") == "remote:judge-1");
  }
}

TEST_CASE("scripted response files accept strings and objects") {
  const auto dir = std::filesystem::temp_directory_path() / "rar-config-test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "script.jsonl";
  {
    std::ofstream out(path);
    out << "\"plain string\"\n";
    out << "{\"response\": \"object form\"}\n";
  }
  auto script = load_script(path);
  REQUIRE(script.size() == 2);
  CHECK(script[0] == "plain string");
  CHECK(script[1] == "object form");
  {
    std::ofstream out(path);
    out << "{\"not_response\": 1}\n";
  }
  CHECK_THROWS_AS(load_script(path), ValidationError);
  std::filesystem::remove_all(dir);
}
