#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rar/error.hpp"

namespace rar {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Checklist data model
// ---------------------------------------------------------------------------

enum class Category { Essential, Important, Optional, Pitfall };

inline const char* to_string(Category c) {
  switch (c) {
    case Category::Essential: return "Essential";
    case Category::Important: return "Important";
    case Category::Optional: return "Optional";
    case Category::Pitfall: return "Pitfall";
  }
  throw ContractError("invalid Category value");
}

inline Category category_from_string(const std::string& s) {
  if (s == "Essential") return Category::Essential;
  if (s == "Important") return Category::Important;
  if (s == "Optional") return Category::Optional;
  if (s == "Pitfall") return Category::Pitfall;
  throw ValidationError("unknown category: \"" + s + "\"");
}

// Default categorical weight scheme used for explicit aggregation.
inline double category_weight(Category c) {
  switch (c) {
    case Category::Essential: return 1.0;
    case Category::Important: return 0.7;
    case Category::Optional: return 0.3;
    case Category::Pitfall: return 0.8;
  }
  throw ContractError("invalid Category value");
}

// One checklist item. `generator_weight` is the integer emitted at synthesis
// time (1..5, or -1/-2 for pitfalls); `aggregation_weight` is what the
// weighted sum actually uses and always comes from the categorical map for
// synthesized rubrics. Pitfalls are positively phrased: satisfied is good, an
// unsatisfied pitfall lowers the normalized score through the denominator
// only, with no extra subtraction.
struct Criterion {
  std::string title;
  std::string description;
  Category category = Category::Essential;
  std::optional<int> generator_weight;
  double aggregation_weight = 1.0;
};

// The description prefix convention ("Essential Criteria: ..."). Enforced at
// the synthesis/parsing boundary; fixed rubrics such as the predefined set
// carry plain descriptions.
inline bool description_matches_category(const Criterion& c) {
  const std::string prefix = std::string(to_string(c.category)) + " Criteria:";
  return c.description.rfind(prefix, 0) == 0;
}

inline std::optional<Category> category_from_description(const std::string& description) {
  for (Category c : {Category::Essential, Category::Important, Category::Optional,
                     Category::Pitfall}) {
    const std::string prefix = std::string(to_string(c)) + " Criteria:";
    if (description.rfind(prefix, 0) == 0) return c;
  }
  return std::nullopt;
}

struct Rubric {
  std::string prompt_id;
  std::vector<Criterion> items;
};

// Binary satisfaction verdict for one rubric item.
struct CriterionVerdict {
  std::size_t criterion_index = 0;
  bool satisfied = false;
  std::optional<std::string> rationale;
};

enum class RewardMethod {
  SimpleLikert,
  ReferenceLikert,
  PredefinedRaR,
  RaRExplicit,
  RaRImplicit,
  Rlvr,
};

inline const char* to_string(RewardMethod m) {
  switch (m) {
    case RewardMethod::SimpleLikert: return "simple-likert";
    case RewardMethod::ReferenceLikert: return "reference-likert";
    case RewardMethod::PredefinedRaR: return "predefined-rar";
    case RewardMethod::RaRExplicit: return "rar-explicit";
    case RewardMethod::RaRImplicit: return "rar-implicit";
    case RewardMethod::Rlvr: return "rlvr";
  }
  throw ContractError("invalid RewardMethod value");
}

inline RewardMethod reward_method_from_string(const std::string& s) {
  if (s == "simple-likert") return RewardMethod::SimpleLikert;
  if (s == "reference-likert") return RewardMethod::ReferenceLikert;
  if (s == "predefined-rar") return RewardMethod::PredefinedRaR;
  if (s == "rar-explicit") return RewardMethod::RaRExplicit;
  if (s == "rar-implicit") return RewardMethod::RaRImplicit;
  if (s == "rlvr") return RewardMethod::Rlvr;
  throw ValidationError("unknown reward method: \"" + s + "\"");
}

// Scalar reward for one (prompt, response, method) triple.
struct RewardRecord {
  std::string prompt_id;
  std::string response_id;
  RewardMethod method = RewardMethod::SimpleLikert;
  double score = 0.0;
  std::optional<std::string> raw_judge_output;
  std::optional<std::vector<CriterionVerdict>> verdicts;
};

// ---------------------------------------------------------------------------
// Aggregation math
// ---------------------------------------------------------------------------

// Normalized weighted sum over binary verdicts. `verdicts` must cover every
// rubric item exactly once, in any order.
inline double explicit_reward(const Rubric& rubric,
                              const std::vector<CriterionVerdict>& verdicts) {
  const std::size_t k = rubric.items.size();
  if (k == 0) throw ContractError("explicit_reward: rubric has no items");
  if (verdicts.size() != k) {
    throw ContractError("explicit_reward: expected " + std::to_string(k) +
                        " verdicts, got " + std::to_string(verdicts.size()));
  }
  std::vector<bool> seen(k, false);
  double numerator = 0.0;
  double denominator = 0.0;
  for (const CriterionVerdict& v : verdicts) {
    if (v.criterion_index >= k) {
      throw ContractError("explicit_reward: verdict index " +
                          std::to_string(v.criterion_index) + " out of bounds");
    }
    if (seen[v.criterion_index]) {
      throw ContractError("explicit_reward: duplicate verdict for index " +
                          std::to_string(v.criterion_index));
    }
    seen[v.criterion_index] = true;
    const double w = rubric.items[v.criterion_index].aggregation_weight;
    if (!(w > 0.0)) {
      throw ValidationError("explicit_reward: aggregation_weight must be > 0 at index " +
                            std::to_string(v.criterion_index));
    }
    denominator += w;
    if (v.satisfied) numerator += w;
  }
  if (!(denominator > 0.0)) {
    throw ValidationError("explicit_reward: total weight is zero");
  }
  return numerator / denominator;
}

// The single-criterion exact-match special case.
inline double rlvr_reward(bool matched) { return matched ? 1.0 : 0.0; }

enum class LikertNorm {
  // (s - 1) / 9: both scale endpoints hit 0 and 1.
  FullRange,
  // s / 10: the alternative reading.
  TenthScale,
};

inline double normalize_likert(int rating, LikertNorm norm = LikertNorm::FullRange) {
  if (rating < 1 || rating > 10) {
    throw ValidationError("normalize_likert: rating " + std::to_string(rating) +
                          " outside 1..10");
  }
  return norm == LikertNorm::FullRange ? (rating - 1) / 9.0 : rating / 10.0;
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

inline json to_json(const Criterion& c) {
  json j{{"title", c.title},
         {"description", c.description},
         {"category", to_string(c.category)},
         {"aggregation_weight", c.aggregation_weight}};
  if (c.generator_weight) j["generator_weight"] = *c.generator_weight;
  return j;
}

inline Criterion criterion_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("criterion: expected a JSON object");
  Criterion c;
  try {
    c.title = j.at("title").get<std::string>();
    c.description = j.at("description").get<std::string>();
    c.category = category_from_string(j.at("category").get<std::string>());
    c.aggregation_weight = j.at("aggregation_weight").get<double>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("criterion: ") + e.what());
  }
  if (j.contains("generator_weight")) {
    if (!j["generator_weight"].is_number_integer()) {
      throw ValidationError("criterion: generator_weight must be an integer");
    }
    c.generator_weight = j["generator_weight"].get<int>();
  }
  if (!(c.aggregation_weight > 0.0)) {
    throw ValidationError("criterion: aggregation_weight must be > 0");
  }
  return c;
}

inline json to_json(const Rubric& r) {
  json items = json::array();
  for (const Criterion& c : r.items) items.push_back(to_json(c));
  return json{{"prompt_id", r.prompt_id}, {"items", std::move(items)}};
}

inline Rubric rubric_from_json(const json& j) {
  if (!j.is_object() || !j.contains("prompt_id") || !j.contains("items")) {
    throw ValidationError("rubric: expected {prompt_id, items}");
  }
  Rubric r;
  r.prompt_id = j.at("prompt_id").get<std::string>();
  if (!j.at("items").is_array() || j.at("items").empty()) {
    throw ValidationError("rubric: items must be a non-empty array");
  }
  for (const json& item : j.at("items")) r.items.push_back(criterion_from_json(item));
  return r;
}

inline json to_json(const CriterionVerdict& v) {
  json j{{"criterion_index", v.criterion_index}, {"satisfied", v.satisfied}};
  if (v.rationale) j["rationale"] = *v.rationale;
  return j;
}

inline json to_json(const RewardRecord& r) {
  json j{{"prompt_id", r.prompt_id},
         {"response_id", r.response_id},
         {"method", to_string(r.method)},
         {"score", r.score}};
  if (r.raw_judge_output) j["raw_judge_output"] = *r.raw_judge_output;
  if (r.verdicts) {
    json verdicts = json::array();
    for (const CriterionVerdict& v : *r.verdicts) verdicts.push_back(to_json(v));
    j["verdicts"] = std::move(verdicts);
  }
  return j;
}

}  // namespace rar
