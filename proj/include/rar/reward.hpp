#pragma once

#include <atomic>
#include <cctype>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rar/digest.hpp"
#include "rar/error.hpp"
#include "rar/judge.hpp"
#include "rar/rubric.hpp"
#include "rar/templates.hpp"

namespace rar {

// One (prompt, response) pair plus whatever the chosen method needs.
struct ScoringItem {
  std::string prompt_id;
  std::optional<std::string> response_id;
  std::string prompt;
  std::string response;
  std::optional<std::string> reference;
  std::optional<Rubric> rubric;
  std::optional<std::string> ground_truth;
};

enum class Aggregation { Explicit, Implicit };

struct MethodConfig {
  RewardMethod method = RewardMethod::SimpleLikert;
  std::string judge;
  Aggregation aggregation = Aggregation::Explicit;
  RubricListStyle rubric_list_style = RubricListStyle::Categories;
  LikertNorm likert_norm = LikertNorm::FullRange;

  void validate() const {
    const bool explicit_method =
        method == RewardMethod::PredefinedRaR || method == RewardMethod::RaRExplicit;
    if (explicit_method && aggregation != Aggregation::Explicit) {
      throw ValidationError("method " + std::string(to_string(method)) +
                            " requires explicit aggregation");
    }
    if (method == RewardMethod::RaRImplicit && aggregation != Aggregation::Implicit) {
      throw ValidationError("rar-implicit requires implicit aggregation");
    }
    if (method != RewardMethod::Rlvr && judge.empty()) {
      throw ValidationError("method " + std::string(to_string(method)) +
                            " requires a judge backend");
    }
  }
};

// Canonical aggregation for a method; spares callers from spelling both.
inline MethodConfig make_method_config(RewardMethod method, std::string judge) {
  MethodConfig config;
  config.method = method;
  config.judge = std::move(judge);
  config.aggregation =
      method == RewardMethod::RaRImplicit ? Aggregation::Implicit : Aggregation::Explicit;
  return config;
}

// The four fixed generic criteria used by the predefined-rubric method,
// weighted uniformly.
inline Rubric predefined_rubric() {
  Rubric r;
  r.prompt_id = "predefined";
  const std::pair<const char*, const char*> entries[] = {
      {"Correct Information",
       "The response contains correct information without factual errors, inaccuracies, or "
       "hallucinations that could mislead the user."},
      {"Complete Answer",
       "The response fully answers all essential parts of the question and provides sufficient "
       "detail where needed."},
      {"Concise Wording",
       "The response is concise and to the point, avoiding unnecessary verbosity or repetition."},
      {"Practical Helpfulness",
       "The response effectively meets the user's practical needs, provides actionable "
       "information, and is genuinely helpful for their situation."},
  };
  for (const auto& [title, description] : entries) {
    Criterion c;
    c.title = title;
    c.description = description;
    c.category = Category::Essential;
    c.aggregation_weight = 1.0;
    r.items.push_back(std::move(c));
  }
  return r;
}

// Trim, strip one \boxed{...} wrapper, lowercase. Sufficient for the
// multiple-choice exact-match use; test-case execution is out of scope.
inline std::string normalize_rlvr_answer(const std::string& text) {
  std::size_t b = 0, e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  std::string s = text.substr(b, e - b);
  const std::string open = "\\boxed{";
  if (s.size() > open.size() && s.rfind(open, 0) == 0 && s.back() == '}') {
    s = s.substr(open.size(), s.size() - open.size() - 1);
    return normalize_rlvr_answer(s);
  }
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

namespace detail {

inline std::string default_response_id(const std::string& response) {
  return sha256_hex(response).substr(0, 12);
}

inline const Rubric& require_rubric(const ScoringItem& item, RewardMethod method) {
  if (!item.rubric) {
    throw ValidationError(std::string(to_string(method)) + ": item \"" + item.prompt_id +
                          "\" has no rubric");
  }
  return *item.rubric;
}

}  // namespace detail

// Scores one item under one method. Likert-style methods judge once and
// normalize the rating; explicit methods judge each criterion independently
// and aggregate; RLVR needs no judge at all.
inline RewardRecord score(JudgeGateway& gateway, const ScoringItem& item,
                          const MethodConfig& config) {
  config.validate();
  RewardRecord record;
  record.prompt_id = item.prompt_id;
  record.response_id = item.response_id ? *item.response_id
                                        : detail::default_response_id(item.response);
  record.method = config.method;

  auto likert = [&](TemplateId template_id, Bindings bindings) {
    JudgmentResult result = gateway.judge_likert(config.judge, template_id, bindings);
    record.score = normalize_likert(*result.rating, config.likert_norm);
    record.raw_judge_output = result.raw_text;
  };

  auto explicit_rubric = [&](const Rubric& rubric) {
    std::vector<CriterionVerdict> verdicts;
    verdicts.reserve(rubric.items.size());
    for (std::size_t j = 0; j < rubric.items.size(); ++j) {
      JudgeRequest request{TemplateId::CriterionBinary,
                           Bindings{{"prompt", item.prompt},
                                    {"response", item.response},
                                    {"criterion", rubric.items[j].description}}};
      RawJudgment raw = gateway.complete_checked(
          config.judge, request, default_response_check(TemplateId::CriterionBinary));
      // Raw text kept per criterion so verdicts stay auditable.
      verdicts.push_back({j, parse_satisfied(raw.text), raw.text});
    }
    record.score = explicit_reward(rubric, verdicts);
    record.verdicts = std::move(verdicts);
  };

  switch (config.method) {
    case RewardMethod::SimpleLikert:
      likert(TemplateId::SimpleLikert,
             Bindings{{"prompt", item.prompt}, {"response", item.response}});
      break;
    case RewardMethod::ReferenceLikert: {
      if (!item.reference) {
        throw ValidationError("reference-likert: item \"" + item.prompt_id +
                              "\" has no reference");
      }
      likert(TemplateId::ReferenceLikert, Bindings{{"prompt", item.prompt},
                                                   {"reference", *item.reference},
                                                   {"response", item.response}});
      break;
    }
    case RewardMethod::RaRImplicit: {
      const Rubric& rubric = detail::require_rubric(item, config.method);
      likert(TemplateId::ImplicitRubricLikert,
             Bindings{{"prompt", item.prompt},
                      {"response", item.response},
                      {"rubric_list_string",
                       format_rubric_list(rubric, config.rubric_list_style)}});
      break;
    }
    case RewardMethod::PredefinedRaR:
      explicit_rubric(predefined_rubric());
      break;
    case RewardMethod::RaRExplicit:
      explicit_rubric(detail::require_rubric(item, config.method));
      break;
    case RewardMethod::Rlvr: {
      if (!item.ground_truth) {
        throw ValidationError("rlvr: item \"" + item.prompt_id + "\" has no ground_truth");
      }
      record.score = rlvr_reward(normalize_rlvr_answer(item.response) ==
                                 normalize_rlvr_answer(*item.ground_truth));
      break;
    }
  }
  return record;
}

// ---------------------------------------------------------------------------
// Dataset scoring
// ---------------------------------------------------------------------------

inline ScoringItem scoring_item_from_json(const json& j) {
  ScoringItem item;
  item.prompt_id = j.at("prompt_id").get<std::string>();
  if (j.contains("response_id") && !j["response_id"].is_null()) {
    item.response_id = j["response_id"].get<std::string>();
  }
  item.prompt = j.at("prompt").get<std::string>();
  item.response = j.at("response").get<std::string>();
  if (j.contains("reference") && !j["reference"].is_null()) {
    item.reference = j["reference"].get<std::string>();
  }
  if (j.contains("rubric") && !j["rubric"].is_null()) {
    item.rubric = rubric_from_json(j["rubric"]);
  }
  if (j.contains("ground_truth") && !j["ground_truth"].is_null()) {
    item.ground_truth = j["ground_truth"].get<std::string>();
  }
  return item;
}

struct DatasetScoreResult {
  // Aligned with the input; empty slots are per-item failures under the drop
  // policy.
  std::vector<std::optional<RewardRecord>> records;
  json summary;
};

// Scores a dataset with bounded item-level concurrency. Output order follows
// input order regardless of completion order; re-runs with an unchanged
// config are served from cache.
inline DatasetScoreResult score_dataset(JudgeGateway& gateway,
                                        const std::vector<ScoringItem>& items,
                                        const MethodConfig& config, int max_in_flight,
                                        FailurePolicy failure_policy = FailurePolicy::Drop) {
  config.validate();
  if (max_in_flight < 1) throw ContractError("score_dataset: max_in_flight must be >= 1");

  const GatewayStats before = gateway.stats();
  std::vector<std::optional<RewardRecord>> records(items.size());
  std::vector<std::string> errors(items.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= items.size()) return;
      try {
        records[i] = score(gateway, items[i], config);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const std::size_t n_workers =
      std::min<std::size_t>(static_cast<std::size_t>(max_in_flight), items.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(n_workers);
    for (std::size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
  }

  std::size_t n_failed = 0;
  double total = 0.0;
  json failures = json::array();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (records[i]) {
      total += records[i]->score;
    } else {
      ++n_failed;
      failures.push_back(json{{"prompt_id", items[i].prompt_id}, {"error", errors[i]}});
      if (failure_policy == FailurePolicy::Abort) {
        throw JudgeFailure("score_dataset: item \"" + items[i].prompt_id +
                           "\" failed under abort policy: " + errors[i]);
      }
    }
  }
  const std::size_t n_scored = items.size() - n_failed;
  const GatewayStats after = gateway.stats();
  DatasetScoreResult result;
  result.records = std::move(records);
  result.summary = json{{"method", to_string(config.method)},
                        {"n_items", items.size()},
                        {"n_scored", n_scored},
                        {"n_failed", n_failed},
                        {"mean_score", n_scored > 0 ? json(total / n_scored) : json(nullptr)},
                        {"backend_calls", after.backend_calls - before.backend_calls},
                        {"cache_hits", after.cache_hits - before.cache_hits},
                        {"failures", std::move(failures)}};
  return result;
}

}  // namespace rar
