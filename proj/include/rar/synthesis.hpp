#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rar/error.hpp"
#include "rar/judge.hpp"
#include "rar/rubric.hpp"
#include "rar/templates.hpp"

namespace rar {

enum class SynthesisDomain { Medicine, Science };

inline const char* to_string(SynthesisDomain d) {
  return d == SynthesisDomain::Medicine ? "medicine" : "science";
}

inline SynthesisDomain synthesis_domain_from_string(const std::string& s) {
  if (s == "medicine") return SynthesisDomain::Medicine;
  if (s == "science") return SynthesisDomain::Science;
  throw ValidationError("unknown synthesis domain: \"" + s + "\"");
}

struct SynthesisTask {
  std::string id;
  std::string question;
  std::optional<std::string> reference_answer;
  SynthesisDomain domain = SynthesisDomain::Medicine;
  std::string generator_backend;
};

// The raw three-key shape a generator must emit per item.
struct GeneratedRubricItem {
  std::string title;
  std::string description;
  int weight = 0;
};

// ---------------------------------------------------------------------------
// Parsing and validation of generator output
// ---------------------------------------------------------------------------

// Accepts fenced or unfenced JSON arrays of {title, description, weight}
// objects, preserving order. Any deviation from the three-key schema is a
// parse error naming the offending item.
inline std::vector<GeneratedRubricItem> parse_rubric_json(const std::string& raw) {
  const json arr = parse_fenced_json(raw, '[', ']');
  if (arr.empty()) throw ParseError("rubric array is empty", raw);
  std::vector<GeneratedRubricItem> items;
  items.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& obj = arr[i];
    const std::string at = "item " + std::to_string(i) + ": ";
    if (!obj.is_object()) throw ParseError(at + "expected a JSON object", raw);
    for (const auto& [key, value] : obj.items()) {
      (void)value;
      if (key != "title" && key != "description" && key != "weight") {
        throw ParseError(at + "unexpected key \"" + key + "\"", raw);
      }
    }
    if (!obj.contains("title") || !obj.contains("description") || !obj.contains("weight")) {
      throw ParseError(at + "missing one of title/description/weight", raw);
    }
    if (!obj["title"].is_string()) throw ParseError(at + "title must be a string", raw);
    if (!obj["description"].is_string()) {
      throw ParseError(at + "description must be a string", raw);
    }
    if (!obj["weight"].is_number_integer()) {
      throw ParseError(at + "weight must be an integer", raw);
    }
    items.push_back({obj["title"].get<std::string>(), obj["description"].get<std::string>(),
                     obj["weight"].get<int>()});
  }
  return items;
}

struct ValidationIssue {
  // -1 for rubric-level rules (e.g. item count).
  int item_index = -1;
  std::string rule;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> violations;
  std::vector<ValidationIssue> warnings;
  bool ok() const { return violations.empty(); }

  std::string describe() const {
    std::string out;
    for (const ValidationIssue& v : violations) {
      if (!out.empty()) out += "; ";
      out += v.rule + (v.item_index >= 0 ? " [item " + std::to_string(v.item_index) + "]" : "") +
             ": " + v.message;
    }
    return out;
  }
};

inline json to_json(const ValidationIssue& v) {
  return json{{"item_index", v.item_index}, {"rule", v.rule}, {"message", v.message}};
}

inline json to_json(const ValidationReport& r) {
  json violations = json::array();
  for (const auto& v : r.violations) violations.push_back(to_json(v));
  json warnings = json::array();
  for (const auto& w : r.warnings) warnings.push_back(to_json(w));
  return json{{"ok", r.ok()}, {"violations", violations}, {"warnings", warnings}};
}

inline std::size_t word_count(const std::string& s) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : s) {
    const bool space = c == ' ' || c == '\t';
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

inline constexpr std::size_t kMinRubricItems = 7;
inline constexpr std::size_t kMaxRubricItems = 20;

// Hard rules: item count, recognized category prefix, per-category weight
// range. Title length (2-4 words) only warns; generators drift on it too
// often to make it fatal.
inline ValidationReport validate_items(const std::vector<GeneratedRubricItem>& items) {
  ValidationReport report;
  if (items.size() < kMinRubricItems || items.size() > kMaxRubricItems) {
    report.violations.push_back(
        {-1, "item-count",
         "expected between " + std::to_string(kMinRubricItems) + " and " +
             std::to_string(kMaxRubricItems) + " items, got " + std::to_string(items.size())});
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    const GeneratedRubricItem& item = items[i];
    const int index = static_cast<int>(i);
    const std::optional<Category> category = category_from_description(item.description);
    if (!category) {
      report.violations.push_back(
          {index, "category-prefix",
           "description does not begin with a recognized category prefix"});
      continue;
    }
    if (*category == Category::Pitfall) {
      if (item.weight != -1 && item.weight != -2) {
        report.violations.push_back(
            {index, "weight-range",
             "Pitfall weight must be -1 or -2, got " + std::to_string(item.weight)});
      }
    } else if (item.weight < 1 || item.weight > 5) {
      report.violations.push_back(
          {index, "weight-range",
           std::string(to_string(*category)) + " weight must be in 1..5, got " +
               std::to_string(item.weight)});
    }
    const std::size_t words = word_count(item.title);
    if (words < 2 || words > 4) {
      report.warnings.push_back(
          {index, "title-length", "title should be 2-4 words, got " + std::to_string(words)});
    }
  }
  return report;
}

// Validated generator items become a Rubric: the category comes from each
// description prefix, the aggregation weight from the categorical map, and
// the generator's integer is kept alongside.
inline Rubric to_rubric(const std::string& prompt_id,
                        const std::vector<GeneratedRubricItem>& items) {
  Rubric rubric;
  rubric.prompt_id = prompt_id;
  for (const GeneratedRubricItem& item : items) {
    const std::optional<Category> category = category_from_description(item.description);
    if (!category) {
      throw ValidationError("to_rubric: unvalidated item without category prefix: \"" +
                            item.title + "\"");
    }
    Criterion c;
    c.title = item.title;
    c.description = item.description;
    c.category = *category;
    c.generator_weight = item.weight;
    c.aggregation_weight = category_weight(*category);
    rubric.items.push_back(std::move(c));
  }
  return rubric;
}

inline Bindings synthesis_bindings(const SynthesisTask& task) {
  Bindings b{{"domain", to_string(task.domain)}, {"question", task.question}};
  if (task.reference_answer) b["reference_answer"] = *task.reference_answer;
  return b;
}

// Full response check: schema plus rubric-level validation; any failure
// triggers a re-ask through the gateway's retry budget.
inline void check_synthesis_response(const std::string& raw) {
  const std::vector<GeneratedRubricItem> items = parse_rubric_json(raw);
  const ValidationReport report = validate_items(items);
  if (!report.ok()) throw ParseError("rubric validation failed: " + report.describe(), raw);
}

inline Rubric synthesize(JudgeGateway& gateway, const SynthesisTask& task) {
  if (task.question.empty()) throw ValidationError("synthesize: question must not be empty");
  JudgeRequest request{TemplateId::RubricSynthesis, synthesis_bindings(task)};
  RawJudgment raw = gateway.complete_checked(task.generator_backend, request,
                                             check_synthesis_response);
  return to_rubric(task.id, parse_rubric_json(raw.text));
}

// ---------------------------------------------------------------------------
// Batch pipeline
// ---------------------------------------------------------------------------

struct SynthesisRunResult {
  std::vector<std::optional<Rubric>> rubrics;  // aligned with tasks
  json report;
};

inline SynthesisTask synthesis_task_from_json(const json& j, const std::string& backend) {
  SynthesisTask task;
  task.id = j.at("id").get<std::string>();
  task.question = j.at("question").get<std::string>();
  if (task.question.empty()) throw ValidationError("task " + task.id + ": question is empty");
  if (j.contains("reference_answer") && !j["reference_answer"].is_null()) {
    task.reference_answer = j["reference_answer"].get<std::string>();
  }
  task.domain = synthesis_domain_from_string(j.at("domain").get<std::string>());
  task.generator_backend = backend;
  return task;
}

inline SynthesisRunResult run_synthesis(JudgeGateway& gateway,
                                        const std::vector<SynthesisTask>& tasks,
                                        int max_in_flight) {
  if (tasks.empty()) {
    return {{}, json{{"n_tasks", 0}, {"n_ok", 0}, {"n_failed", 0}, {"failures", json::array()}}};
  }
  const std::string backend = tasks.front().generator_backend;
  std::vector<JudgeRequest> requests;
  requests.reserve(tasks.size());
  for (const SynthesisTask& task : tasks) {
    if (task.generator_backend != backend) {
      throw ContractError("run_synthesis: all tasks must use the same generator backend");
    }
    requests.push_back({TemplateId::RubricSynthesis, synthesis_bindings(task)});
  }
  auto outcomes = gateway.batch_judge(backend, requests, max_in_flight,
                                      check_synthesis_response);
  SynthesisRunResult result;
  result.rubrics.resize(tasks.size());
  json failures = json::array();
  std::size_t n_ok = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (outcomes[i].ok) {
      result.rubrics[i] = to_rubric(tasks[i].id, parse_rubric_json(outcomes[i].judgment.text));
      ++n_ok;
    } else {
      failures.push_back(json{{"id", tasks[i].id}, {"error", outcomes[i].error}});
    }
  }
  result.report = json{{"n_tasks", tasks.size()},
                       {"n_ok", n_ok},
                       {"n_failed", tasks.size() - n_ok},
                       {"failures", std::move(failures)}};
  return result;
}

}  // namespace rar
