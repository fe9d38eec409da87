#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rar/config.hpp"
#include "rar/evalbench.hpp"
#include "rar/grpo.hpp"
#include "rar/jsonl.hpp"
#include "rar/reward.hpp"
#include "rar/synthesis.hpp"

namespace {

using rar::json;

constexpr int kExitOk = 0;
constexpr int kExitUserError = 1;
constexpr int kExitJudgeFailure = 2;
constexpr int kExitInternal = 3;

struct Context {
  rar::RunConfig config;
  std::unique_ptr<rar::JudgeGateway> gateway;
};

std::filesystem::path resolve_against(const std::filesystem::path& base, std::string value) {
  std::filesystem::path p(std::move(value));
  return p.is_relative() ? base / p : p;
}

Context make_context(const std::string& config_path, const std::string& cache_dir_flag) {
  Context ctx;
  if (!config_path.empty()) ctx.config = rar::load_config(config_path);

  rar::GatewayOptions options;
  if (!cache_dir_flag.empty()) {
    options.cache_dir = cache_dir_flag;
  } else if (auto env_cache = rar::env_value("RAR_CACHE_DIR")) {
    options.cache_dir = *env_cache;
  } else if (ctx.config.cache_dir) {
    options.cache_dir = resolve_against(ctx.config.base_dir, *ctx.config.cache_dir);
  }
  ctx.gateway = std::make_unique<rar::JudgeGateway>(options);
  rar::register_config_backends(*ctx.gateway, ctx.config);
  return ctx;
}

void emit(const json& j) { std::cout << j.dump() << "\n"; }

// ---------------------------------------------------------------------------
// synthesize
// ---------------------------------------------------------------------------

int cmd_synthesize(const std::string& config_path, const std::string& cache_dir,
                   const std::string& input, const std::string& judge, const std::string& out,
                   const std::string& report_path, int max_in_flight) {
  Context ctx = make_context(config_path, cache_dir);
  const std::string backend = rar::resolve_backend(*ctx.gateway, ctx.config, judge);
  std::vector<rar::SynthesisTask> tasks;
  for (const json& row : rar::read_jsonl(input)) {
    tasks.push_back(rar::synthesis_task_from_json(row, backend));
  }
  const int mif = max_in_flight > 0 ? max_in_flight : ctx.config.max_in_flight;
  rar::SynthesisRunResult result = rar::run_synthesis(*ctx.gateway, tasks, mif);

  std::vector<json> rows;
  for (const auto& rubric : result.rubrics) {
    if (rubric) rows.push_back(rar::to_json(*rubric));
  }
  rar::write_jsonl(out, rows);
  if (!report_path.empty()) rar::write_json(report_path, result.report);
  emit(result.report);
  if (result.report["n_failed"].get<int>() > 0 &&
      ctx.config.failure_policy == rar::FailurePolicy::Abort) {
    return kExitJudgeFailure;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

int cmd_score(const std::string& config_path, const std::string& cache_dir,
              const std::string& method_name, const std::string& input,
              const std::string& rubrics_path, const std::string& judge, const std::string& out,
              int max_in_flight, const std::string& failure_policy) {
  Context ctx = make_context(config_path, cache_dir);
  const rar::RewardMethod method = rar::reward_method_from_string(method_name);

  rar::MethodConfig mc = rar::make_method_config(method, "");
  mc.rubric_list_style = ctx.config.rubric_list_style;
  mc.likert_norm = ctx.config.likert_norm;
  if (method != rar::RewardMethod::Rlvr) {
    if (judge.empty()) throw rar::ConfigError("score: --judge is required for " + method_name);
    mc.judge = rar::resolve_backend(*ctx.gateway, ctx.config, judge);
  }

  std::map<std::string, rar::Rubric> rubric_index;
  if (!rubrics_path.empty()) {
    for (const json& row : rar::read_jsonl(rubrics_path)) {
      rar::Rubric r = rar::rubric_from_json(row);
      rubric_index.emplace(r.prompt_id, std::move(r));
    }
  }

  std::vector<rar::ScoringItem> items;
  for (const json& row : rar::read_jsonl(input)) {
    rar::ScoringItem item = rar::scoring_item_from_json(row);
    if (!item.rubric) {
      auto it = rubric_index.find(item.prompt_id);
      if (it != rubric_index.end()) item.rubric = it->second;
    }
    items.push_back(std::move(item));
  }

  const rar::FailurePolicy policy = failure_policy.empty()
                                        ? ctx.config.failure_policy
                                        : rar::failure_policy_from_string(failure_policy);
  const int mif = max_in_flight > 0 ? max_in_flight : ctx.config.max_in_flight;
  rar::DatasetScoreResult result = rar::score_dataset(*ctx.gateway, items, mc, mif, policy);

  std::vector<json> rows;
  for (const auto& record : result.records) {
    if (record) rows.push_back(rar::to_json(*record));
  }
  rar::write_jsonl(out, rows);
  emit(result.summary);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sim-grpo
// ---------------------------------------------------------------------------

int cmd_sim_grpo(const std::string& config_path, const std::string& cache_dir,
                 const std::string& sim_config_path, const std::string& pools_path,
                 const std::string& out, const std::string& policy_out, long long seed_flag) {
  const json sim_json = rar::read_json(sim_config_path);
  const std::filesystem::path sim_base =
      std::filesystem::path(sim_config_path).has_parent_path()
          ? std::filesystem::path(sim_config_path).parent_path()
          : ".";

  Context ctx = make_context(config_path, cache_dir);
  // The sim file may carry its own backends (and cache settings) so that a
  // single file describes a full run.
  if (sim_json.contains("backends")) {
    rar::RunConfig extra = rar::parse_run_config(sim_json, sim_base);
    rar::register_config_backends(*ctx.gateway, extra);
  }

  rar::SimConfig sim = rar::sim_config_from_json(sim_json);
  if (seed_flag >= 0) sim.seed = static_cast<std::uint64_t>(seed_flag);

  if (!sim_json.contains("method") || !sim_json.contains("judge")) {
    throw rar::ConfigError("sim config must set \"method\" and \"judge\"");
  }
  rar::MethodConfig mc = rar::make_method_config(
      rar::reward_method_from_string(sim_json["method"].get<std::string>()), "");
  mc.rubric_list_style = ctx.config.rubric_list_style;
  mc.likert_norm = ctx.config.likert_norm;
  if (mc.method != rar::RewardMethod::Rlvr) {
    mc.judge =
        rar::resolve_backend(*ctx.gateway, ctx.config, sim_json["judge"].get<std::string>());
  }

  std::string pools = pools_path;
  if (pools.empty()) {
    if (!sim_json.contains("pools")) {
      throw rar::ConfigError("sim config must set \"pools\" (or pass --pools)");
    }
    pools = resolve_against(sim_base, sim_json["pools"].get<std::string>()).string();
  }
  std::vector<rar::PromptCase> cases;
  for (const json& row : rar::read_jsonl(pools)) {
    cases.push_back(rar::prompt_case_from_json(row));
  }
  if (cases.empty()) throw rar::ValidationError("sim: pools file has no prompts");

  const rar::FailurePolicy policy =
      sim_json.contains("failure_policy")
          ? rar::failure_policy_from_string(sim_json["failure_policy"].get<std::string>())
          : rar::FailurePolicy::Abort;
  rar::TrainingLog log = rar::run_training(*ctx.gateway, sim, cases, mc, policy);

  rar::write_jsonl(out, log.entries);
  if (!policy_out.empty()) rar::write_json(policy_out, log.policy_snapshot);
  json footer{{"steps", sim.steps},
              {"prompts", cases.size()},
              {"entries", log.entries.size()},
              {"method", to_string(mc.method)},
              {"seed", sim.seed}};
  emit(footer);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval-extract
// ---------------------------------------------------------------------------

int cmd_eval_extract(const std::string& config_path, const std::string& cache_dir,
                     const std::string& input, const std::string& responses_path,
                     const std::string& judge, const std::string& out) {
  Context ctx = make_context(config_path, cache_dir);
  std::string backend;
  if (!judge.empty()) backend = rar::resolve_backend(*ctx.gateway, ctx.config, judge);

  std::vector<rar::McqInstance> instances;
  std::map<std::string, std::size_t> index_of;
  for (const json& row : rar::read_jsonl(input)) {
    rar::McqInstance m = rar::mcq_from_json(row);
    index_of[m.id] = instances.size();
    instances.push_back(std::move(m));
  }

  std::map<int, std::vector<std::optional<std::string>>> runs;
  for (const json& row : rar::read_jsonl(responses_path)) {
    const std::string id = row.at("id").get<std::string>();
    const int run = row.at("run").get<int>();
    auto it = index_of.find(id);
    if (it == index_of.end()) {
      throw rar::ValidationError("responses reference unknown instance \"" + id + "\"");
    }
    auto& slots = runs[run];
    slots.resize(instances.size());
    slots[it->second] = row.at("response").get<std::string>();
  }
  std::vector<std::vector<std::string>> responses_per_run;
  for (const auto& [run, slots] : runs) {
    std::vector<std::string> full(instances.size());
    for (std::size_t i = 0; i < instances.size(); ++i) {
      if (slots.size() <= i || !slots[i]) {
        throw rar::ValidationError("run " + std::to_string(run) + " is missing a response for \"" +
                                   instances[i].id + "\"");
      }
      full[i] = *slots[i];
    }
    responses_per_run.push_back(std::move(full));
  }

  rar::McqAccuracy acc = rar::mcq_accuracy(instances, responses_per_run,
                                           backend.empty() ? nullptr : ctx.gateway.get(),
                                           backend);
  json report{{"n_instances", instances.size()},
              {"n_runs", responses_per_run.size()},
              {"per_run", acc.per_run},
              {"mean", acc.mean},
              {"stddev", acc.stddev}};
  rar::write_json(out, report);
  emit(report);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gen-pairs
// ---------------------------------------------------------------------------

int cmd_gen_pairs(const std::string& config_path, const std::string& cache_dir,
                  const std::string& input, const std::string& judge, const std::string& out) {
  Context ctx = make_context(config_path, cache_dir);
  const std::string backend = rar::resolve_backend(*ctx.gateway, ctx.config, judge);

  std::vector<json> rows;
  std::size_t failed = 0;
  json failures = json::array();
  for (const json& row : rar::read_jsonl(input)) {
    const std::string id = row.value("id", "");
    try {
      rar::PreferencePair pair =
          rar::generate_pair(*ctx.gateway, backend, id, row.at("prompt").get<std::string>(),
                             row.at("ideal_completion").get<std::string>());
      rows.push_back(rar::to_json(pair));
    } catch (const rar::JudgeFailure& e) {
      if (ctx.config.failure_policy == rar::FailurePolicy::Abort) throw;
      ++failed;
      failures.push_back(json{{"id", id}, {"error", e.what()}});
    }
  }
  rar::write_jsonl(out, rows);
  emit(json{{"n_pairs", rows.size()}, {"n_failed", failed}, {"failures", failures}});
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bench-alignment
// ---------------------------------------------------------------------------

int cmd_bench_alignment(const std::string& config_path, const std::string& cache_dir,
                        const std::string& pairs_path, const std::string& method_name,
                        const std::string& judge, const std::string& rubrics_path,
                        const std::string& out, const std::string& ties, int max_in_flight) {
  Context ctx = make_context(config_path, cache_dir);
  const std::string backend = rar::resolve_backend(*ctx.gateway, ctx.config, judge);
  const rar::RewardMethod method = rar::reward_method_from_string(method_name);

  std::vector<rar::PreferencePair> pairs;
  for (const json& row : rar::read_jsonl(pairs_path)) {
    pairs.push_back(rar::pair_from_json(row));
  }

  std::vector<rar::Rubric> rubrics;
  if (!rubrics_path.empty()) {
    std::vector<rar::Rubric> loaded;
    std::map<std::string, std::size_t> by_id;
    for (const json& row : rar::read_jsonl(rubrics_path)) {
      rar::Rubric r = rar::rubric_from_json(row);
      by_id[r.prompt_id] = loaded.size();
      loaded.push_back(std::move(r));
    }
    bool all_ids = !pairs.empty();
    for (const rar::PreferencePair& p : pairs) {
      if (p.id.empty() || by_id.count(p.id) == 0) {
        all_ids = false;
        break;
      }
    }
    if (all_ids) {
      for (const rar::PreferencePair& p : pairs) rubrics.push_back(loaded[by_id[p.id]]);
    } else {
      if (loaded.size() != pairs.size()) {
        throw rar::ValidationError("bench-alignment: rubric count (" +
                                   std::to_string(loaded.size()) + ") must match pair count (" +
                                   std::to_string(pairs.size()) + ") when ids do not align");
      }
      rubrics = std::move(loaded);
    }
  }

  rar::AlignmentOptions options;
  options.rubric_list_style = ctx.config.rubric_list_style;
  options.max_in_flight = max_in_flight > 0 ? max_in_flight : ctx.config.max_in_flight;
  if (ties == "half") options.ties_half_credit = true;

  rar::AlignmentReport report =
      rar::alignment_accuracy(*ctx.gateway, pairs, backend, method, rubrics, options);
  rar::write_json(out, rar::to_json(report));
  emit(rar::to_json(report));
  return kExitOk;
}

// ---------------------------------------------------------------------------
// cache
// ---------------------------------------------------------------------------

std::filesystem::path cache_dir_or_fail(const Context& ctx, const std::string& dir_flag) {
  if (!dir_flag.empty()) return dir_flag;
  if (auto env_cache = rar::env_value("RAR_CACHE_DIR")) return *env_cache;
  if (ctx.config.cache_dir) return resolve_against(ctx.config.base_dir, *ctx.config.cache_dir);
  throw rar::ConfigError("cache: no directory given (use --dir, RAR_CACHE_DIR, or cache_dir)");
}

int cmd_cache_stats(const std::string& config_path, const std::string& dir_flag) {
  Context ctx;
  if (!config_path.empty()) ctx.config = rar::load_config(config_path);
  rar::FileCache cache(cache_dir_or_fail(ctx, dir_flag));
  auto stats = cache.stats();
  emit(json{{"dir", cache.dir().string()}, {"entries", stats.entries}, {"bytes", stats.bytes}});
  return kExitOk;
}

int cmd_cache_clear(const std::string& config_path, const std::string& dir_flag) {
  Context ctx;
  if (!config_path.empty()) ctx.config = rar::load_config(config_path);
  rar::FileCache cache(cache_dir_or_fail(ctx, dir_flag));
  const std::size_t removed = cache.clear();
  emit(json{{"dir", cache.dir().string()}, {"removed", removed}});
  return kExitOk;
}

const char* error_type(const std::exception& e) {
  if (dynamic_cast<const rar::JudgeFailure*>(&e)) return "judge-failure";
  if (dynamic_cast<const rar::ConfigError*>(&e)) return "config";
  if (dynamic_cast<const rar::ValidationError*>(&e)) return "validation";
  if (dynamic_cast<const rar::ContractError*>(&e)) return "contract";
  if (dynamic_cast<const rar::TemplateError*>(&e)) return "template";
  if (dynamic_cast<const rar::ParseError*>(&e)) return "parse";
  if (dynamic_cast<const rar::IoError*>(&e)) return "io";
  if (dynamic_cast<const rar::Error*>(&e)) return "error";
  return "internal";
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const rar::JudgeFailure*>(&e)) return kExitJudgeFailure;
  if (dynamic_cast<const rar::Error*>(&e)) return kExitUserError;
  return kExitInternal;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Checklist-rubric reward toolkit: synthesis, judging, scoring, and a toy "
               "group-relative training simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string cache_dir;
  app.add_option("--config", config_path, "Run configuration JSON");
  app.add_option("--cache-dir", cache_dir, "Response cache directory (overrides config)");

  // synthesize
  auto* synthesize = app.add_subcommand("synthesize", "Generate prompt-specific rubrics");
  std::string syn_input, syn_judge, syn_out, syn_report;
  int syn_mif = 0;
  synthesize
      ->add_option("--input", syn_input, "Tasks JSONL {id, question, reference_answer?, domain}")
      ->required();
  synthesize->add_option("--judge", syn_judge, "Generator backend")->required();
  synthesize->add_option("--out", syn_out, "Output rubrics JSONL")->required();
  synthesize->add_option("--report", syn_report, "Validation report JSON");
  synthesize->add_option("--max-in-flight", syn_mif, "Concurrent generations");

  // score
  auto* score = app.add_subcommand("score", "Score (prompt, response) items under a method");
  std::string sc_method, sc_input, sc_rubrics, sc_judge, sc_out, sc_policy;
  int sc_mif = 0;
  score
      ->add_option("--method", sc_method,
                   "simple-likert | reference-likert | predefined-rar | rar-explicit | "
                   "rar-implicit | rlvr")
      ->required();
  score->add_option("--input", sc_input, "Items JSONL")->required();
  score->add_option("--rubrics", sc_rubrics, "Rubrics JSONL keyed by prompt_id");
  score->add_option("--judge", sc_judge, "Judge backend");
  score->add_option("--out", sc_out, "Output records JSONL")->required();
  score->add_option("--max-in-flight", sc_mif, "Concurrent items");
  score->add_option("--failure-policy", sc_policy, "drop | abort");

  // sim-grpo
  auto* sim = app.add_subcommand("sim-grpo", "Run the toy group-relative training loop");
  std::string sim_config, sim_pools, sim_out, sim_policy_out;
  long long sim_seed = -1;
  sim->add_option("--config", sim_config, "Simulation config JSON")->required();
  sim->add_option("--pools", sim_pools, "Pools JSONL (overrides config)");
  sim->add_option("--out", sim_out, "Training log JSONL")->required();
  sim->add_option("--policy-out", sim_policy_out, "Final policy snapshot JSON");
  sim->add_option("--seed", sim_seed, "Seed override");

  // eval-extract
  auto* evale = app.add_subcommand("eval-extract", "Grade boxed answers with verifier fallback");
  std::string ev_input, ev_responses, ev_judge, ev_out;
  evale->add_option("--input", ev_input, "MCQ instances JSONL")->required();
  evale->add_option("--responses", ev_responses, "Responses JSONL {id, run, response}")
      ->required();
  evale->add_option("--judge", ev_judge, "Verifier backend for unboxed responses");
  evale->add_option("--out", ev_out, "Accuracy report JSON")->required();

  // gen-pairs
  auto* gen = app.add_subcommand("gen-pairs", "Generate perturbed preference pairs");
  std::string gp_input, gp_judge, gp_out;
  gen->add_option("--input", gp_input, "Prompts JSONL {id, prompt, ideal_completion}")
      ->required();
  gen->add_option("--judge", gp_judge, "Perturbation backend")->required();
  gen->add_option("--out", gp_out, "Output pairs JSONL")->required();

  // bench-alignment
  auto* bench = app.add_subcommand("bench-alignment", "Pairwise judge-alignment accuracy");
  std::string ba_pairs, ba_method, ba_judge, ba_rubrics, ba_out, ba_ties;
  int ba_mif = 0;
  bench->add_option("--pairs", ba_pairs, "Pairs JSONL")->required();
  bench->add_option("--method", ba_method, "rar-implicit | simple-likert")->required();
  bench->add_option("--judge", ba_judge, "Judge backend")->required();
  bench->add_option("--rubrics", ba_rubrics, "Rubrics JSONL (required for rar-implicit)");
  bench->add_option("--out", ba_out, "Report JSON")->required();
  bench->add_option("--ties", ba_ties, "zero | half (tie credit)");
  bench->add_option("--max-in-flight", ba_mif, "Concurrent judgments");

  // cache
  auto* cache = app.add_subcommand("cache", "Inspect or clear the response cache");
  cache->require_subcommand(1);
  std::string cache_dir_flag;
  auto* cache_stats = cache->add_subcommand("stats", "Entry count and size");
  auto* cache_clear = cache->add_subcommand("clear", "Remove all entries");
  cache_stats->add_option("--dir", cache_dir_flag, "Cache directory");
  cache_clear->add_option("--dir", cache_dir_flag, "Cache directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    if (rc != 0) {
      std::cerr << json{{"error", {{"type", "usage"}, {"message", e.what()}}}}.dump() << "\n";
      return kExitUserError;
    }
    return kExitOk;  // --help / --version
  }

  try {
    if (synthesize->parsed()) {
      return cmd_synthesize(config_path, cache_dir, syn_input, syn_judge, syn_out, syn_report,
                            syn_mif);
    }
    if (score->parsed()) {
      return cmd_score(config_path, cache_dir, sc_method, sc_input, sc_rubrics, sc_judge, sc_out,
                       sc_mif, sc_policy);
    }
    if (sim->parsed()) {
      return cmd_sim_grpo(config_path, cache_dir, sim_config, sim_pools, sim_out, sim_policy_out,
                          sim_seed);
    }
    if (evale->parsed()) {
      return cmd_eval_extract(config_path, cache_dir, ev_input, ev_responses, ev_judge, ev_out);
    }
    if (gen->parsed()) {
      return cmd_gen_pairs(config_path, cache_dir, gp_input, gp_judge, gp_out);
    }
    if (bench->parsed()) {
      return cmd_bench_alignment(config_path, cache_dir, ba_pairs, ba_method, ba_judge,
                                 ba_rubrics, ba_out, ba_ties, ba_mif);
    }
    if (cache_stats->parsed()) return cmd_cache_stats(config_path, cache_dir_flag);
    if (cache_clear->parsed()) return cmd_cache_clear(config_path, cache_dir_flag);
    throw rar::ContractError("no subcommand dispatched");
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"type", error_type(e)}, {"message", e.what()}}}}.dump()
              << "\n";
    return exit_code_for(e);
  }
}
