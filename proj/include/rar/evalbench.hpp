#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "rar/error.hpp"
#include "rar/judge.hpp"
#include "rar/reward.hpp"
#include "rar/rubric.hpp"
#include "rar/templates.hpp"

namespace rar {

// ---------------------------------------------------------------------------
// Multiple-choice extraction
// ---------------------------------------------------------------------------

struct McqInstance {
  std::string id;
  std::string question;
  std::array<std::string, 4> choices;  // indexed A..D
  char correct_label = 'A';
  std::string correct_text;

  void validate() const {
    if (correct_label < 'A' || correct_label > 'D') {
      throw ValidationError("mcq " + id + ": correct_label must be A..D");
    }
    if (correct_text != choices[static_cast<std::size_t>(correct_label - 'A')]) {
      throw ValidationError("mcq " + id + ": correct_text does not match the labeled choice");
    }
  }
};

inline McqInstance mcq_from_json(const json& j) {
  McqInstance m;
  m.id = j.at("id").get<std::string>();
  m.question = j.at("question").get<std::string>();
  const json& choices = j.at("choices");
  if (!choices.is_array() || choices.size() != 4) {
    throw ValidationError("mcq " + m.id + ": choices must be an array of 4 options");
  }
  for (std::size_t i = 0; i < 4; ++i) m.choices[i] = choices[i].get<std::string>();
  const std::string label = j.at("correct_label").get<std::string>();
  if (label.size() != 1) throw ValidationError("mcq " + m.id + ": correct_label must be A..D");
  m.correct_label = label[0];
  m.correct_text = m.choices[static_cast<std::size_t>(m.correct_label - 'A')];
  m.validate();
  return m;
}

inline json to_json(const McqInstance& m) {
  return json{{"id", m.id},
              {"question", m.question},
              {"choices", m.choices},
              {"correct_label", std::string(1, m.correct_label)}};
}

// Maps original labels (by index 0..3 = A..D) to permuted labels.
struct LabelMap {
  std::array<char, 4> to_new{{'A', 'B', 'C', 'D'}};

  char map(char original) const { return to_new[static_cast<std::size_t>(original - 'A')]; }

  LabelMap inverse() const {
    LabelMap inv;
    for (std::size_t i = 0; i < 4; ++i) {
      inv.to_new[static_cast<std::size_t>(to_new[i] - 'A')] = static_cast<char>('A' + i);
    }
    return inv;
  }

  bool identity() const { return to_new == std::array<char, 4>{{'A', 'B', 'C', 'D'}}; }
};

struct PermutedMcq {
  McqInstance instance;
  LabelMap label_map;
};

// perm[i] = original choice index placed at slot i.
inline PermutedMcq permute_with(const McqInstance& instance,
                                const std::array<std::size_t, 4>& perm) {
  PermutedMcq out;
  out.instance = instance;
  for (std::size_t slot = 0; slot < 4; ++slot) {
    out.instance.choices[slot] = instance.choices[perm[slot]];
    out.label_map.to_new[perm[slot]] = static_cast<char>('A' + slot);
  }
  out.instance.correct_label = out.label_map.map(instance.correct_label);
  out.instance.correct_text = instance.correct_text;
  out.instance.validate();
  return out;
}

inline PermutedMcq permute_choices(const McqInstance& instance, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::array<std::size_t, 4> perm{{0, 1, 2, 3}};
  for (std::size_t i = 3; i > 0; --i) {
    std::swap(perm[i], perm[rng() % (i + 1)]);
  }
  return permute_with(instance, perm);
}

// Last \boxed{...} whose contents, after shedding surrounding whitespace and
// punctuation, are a single letter A..D.
inline std::optional<char> extract_boxed(const std::string& response) {
  const std::string open = "\\boxed{";
  std::size_t search_from = 0;
  std::size_t last = std::string::npos;
  while (true) {
    const std::size_t at = response.find(open, search_from);
    if (at == std::string::npos) break;
    last = at;
    search_from = at + 1;
  }
  if (last == std::string::npos) return std::nullopt;

  // Matching close brace, tolerating nested braces.
  int depth = 1;
  std::size_t i = last + open.size();
  std::size_t end = std::string::npos;
  for (; i < response.size(); ++i) {
    if (response[i] == '{') ++depth;
    if (response[i] == '}' && --depth == 0) {
      end = i;
      break;
    }
  }
  if (end == std::string::npos) return std::nullopt;

  std::string inner = response.substr(last + open.size(), end - (last + open.size()));
  std::size_t b = 0, e = inner.size();
  while (b < e && !std::isalnum(static_cast<unsigned char>(inner[b]))) ++b;
  while (e > b && !std::isalnum(static_cast<unsigned char>(inner[e - 1]))) --e;
  if (e - b != 1) return std::nullopt;
  const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(inner[b])));
  if (c < 'A' || c > 'D') return std::nullopt;
  return c;
}

// The GPQA verifier fallback for responses with no parsable boxed answer.
// Exhausted retries count as incorrect rather than dropping the item.
inline bool verify_fallback(JudgeGateway& gateway, const std::string& backend,
                            const std::string& response, char correct_label,
                            const std::string& correct_text) {
  JudgeRequest request{TemplateId::GpqaVerifier,
                       Bindings{{"correct_answer", std::string(1, correct_label)},
                                {"correct_answer_text", correct_text},
                                {"response_text", response}}};
  try {
    RawJudgment raw = gateway.complete_checked(backend, request,
                                               default_response_check(TemplateId::GpqaVerifier));
    return parse_yes_no(raw.text);
  } catch (const JudgeFailure&) {
    return false;
  }
}

// Extraction-first grading; nullopt verifier means extraction-only.
inline bool response_correct(const McqInstance& instance, const std::string& response,
                             JudgeGateway* gateway = nullptr,
                             const std::string& backend = {}) {
  if (std::optional<char> label = extract_boxed(response)) {
    return *label == instance.correct_label;
  }
  if (gateway == nullptr || backend.empty()) return false;
  return verify_fallback(*gateway, backend, response, instance.correct_label,
                         instance.correct_text);
}

struct McqAccuracy {
  std::vector<double> per_run;
  double mean = 0.0;
  double stddev = 0.0;  // population convention
};

inline McqAccuracy mcq_accuracy(const std::vector<McqInstance>& instances,
                                const std::vector<std::vector<std::string>>& responses_per_run,
                                JudgeGateway* gateway = nullptr,
                                const std::string& backend = {}) {
  McqAccuracy out;
  for (const auto& run : responses_per_run) {
    if (run.size() != instances.size()) {
      throw ContractError("mcq_accuracy: run has " + std::to_string(run.size()) +
                          " responses for " + std::to_string(instances.size()) + " instances");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      if (response_correct(instances[i], run[i], gateway, backend)) ++correct;
    }
    out.per_run.push_back(instances.empty() ? 0.0
                                            : static_cast<double>(correct) / instances.size());
  }
  if (out.per_run.empty()) return out;
  for (double a : out.per_run) out.mean += a;
  out.mean /= static_cast<double>(out.per_run.size());
  double var = 0.0;
  for (double a : out.per_run) var += (a - out.mean) * (a - out.mean);
  out.stddev = std::sqrt(var / static_cast<double>(out.per_run.size()));
  return out;
}

// ---------------------------------------------------------------------------
// Preference pairs
// ---------------------------------------------------------------------------

struct PerturbationMeta {
  std::string reasoning;
  std::vector<std::string> chunks_added;
  std::vector<std::string> chunks_removed;
};

struct PreferencePair {
  std::string id;
  std::string prompt;
  std::string chosen;
  std::string rejected;
  PerturbationMeta meta;
};

inline json to_json(const PreferencePair& p) {
  return json{{"id", p.id},
              {"prompt", p.prompt},
              {"chosen", p.chosen},
              {"rejected", p.rejected},
              {"meta",
               json{{"reasoning", p.meta.reasoning},
                    {"chunks_added", p.meta.chunks_added},
                    {"chunks_removed", p.meta.chunks_removed}}}};
}

inline PreferencePair pair_from_json(const json& j) {
  PreferencePair p;
  p.id = j.value("id", "");
  p.prompt = j.at("prompt").get<std::string>();
  p.chosen = j.at("chosen").get<std::string>();
  p.rejected = j.at("rejected").get<std::string>();
  if (p.chosen == p.rejected) throw ValidationError("pair " + p.id + ": chosen equals rejected");
  if (j.contains("meta")) {
    const json& m = j["meta"];
    p.meta.reasoning = m.value("reasoning", "");
    if (m.contains("chunks_added")) {
      for (const json& c : m["chunks_added"]) p.meta.chunks_added.push_back(c.get<std::string>());
    }
    if (m.contains("chunks_removed")) {
      for (const json& c : m["chunks_removed"]) {
        p.meta.chunks_removed.push_back(c.get<std::string>());
      }
    }
  }
  return p;
}

namespace detail {

struct PerturbationSections {
  std::string reasoning;
  std::string perturbed_completion;
  std::string chunks_added;
  std::string chunks_removed;
};

inline std::string trim_copy(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::string lower_copy(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace detail

// Splits a perturbation-template reply into its four bracketed sections.
// Headers are matched case-insensitively at line starts; every section must
// be present.
inline detail::PerturbationSections parse_perturbation_sections(const std::string& raw) {
  struct Marker {
    const char* header;
    std::size_t at = std::string::npos;
    std::size_t content_start = 0;
  };
  std::array<Marker, 4> markers{{{"[reasoning]:"},
                                 {"[perturbed_completion]:"},
                                 {"[chunks_added]:"},
                                 {"[chunks_removed]:"}}};
  const std::string lowered = detail::lower_copy(raw);
  for (Marker& m : markers) {
    std::size_t pos = 0;
    while (pos != std::string::npos) {
      pos = lowered.find(m.header, pos);
      if (pos == std::string::npos) break;
      if (pos == 0 || lowered[pos - 1] == '\n') {
        m.at = pos;
        m.content_start = pos + std::string(m.header).size();
        break;
      }
      ++pos;
    }
    if (m.at == std::string::npos) {
      throw ParseError(std::string("missing section ") + m.header, raw);
    }
  }
  auto section_end = [&](std::size_t from) {
    std::size_t end = raw.size();
    for (const Marker& m : markers) {
      if (m.at > from && m.at < end) end = m.at;
    }
    return end;
  };
  auto content = [&](const Marker& m) {
    return detail::trim_copy(raw.substr(m.content_start, section_end(m.at) - m.content_start));
  };
  return {content(markers[0]), content(markers[1]), content(markers[2]), content(markers[3])};
}

// Section lines become chunk lists; leading "- " bullets and "(none)"
// placeholders are shed.
inline std::vector<std::string> parse_chunk_list(const std::string& section) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= section.size()) {
    std::size_t eol = section.find('\n', pos);
    if (eol == std::string::npos) eol = section.size();
    std::string line = detail::trim_copy(section.substr(pos, eol - pos));
    pos = eol + 1;
    if (line.rfind("- ", 0) == 0) line = detail::trim_copy(line.substr(2));
    if (line.empty() || line == "(none)" || line == "-") continue;
    out.push_back(line);
    if (eol == section.size()) break;
  }
  return out;
}

// Generates a (chosen, rejected) pair by asking the backend to degrade the
// ideal completion. Degenerate outputs (perturbed equals ideal) are re-asked.
inline PreferencePair generate_pair(JudgeGateway& gateway, const std::string& backend,
                                    const std::string& id, const std::string& prompt,
                                    const std::string& ideal_completion) {
  if (ideal_completion.empty()) {
    throw ValidationError("generate_pair: ideal_completion must not be empty");
  }
  JudgeRequest request{TemplateId::Perturbation,
                       Bindings{{"prompt", prompt}, {"ideal_completion", ideal_completion}}};
  const std::string ideal_trimmed = detail::trim_copy(ideal_completion);
  auto check = [&ideal_trimmed](const std::string& raw) {
    const auto sections = parse_perturbation_sections(raw);
    if (sections.perturbed_completion == ideal_trimmed) {
      throw ParseError("perturbed completion equals the ideal completion", raw);
    }
  };
  RawJudgment raw = gateway.complete_checked(backend, request, check);
  const auto sections = parse_perturbation_sections(raw.text);
  PreferencePair pair;
  pair.id = id;
  pair.prompt = prompt;
  pair.chosen = ideal_completion;
  pair.rejected = sections.perturbed_completion;
  pair.meta.reasoning = sections.reasoning;
  pair.meta.chunks_added = parse_chunk_list(sections.chunks_added);
  pair.meta.chunks_removed = parse_chunk_list(sections.chunks_removed);
  return pair;
}

// ---------------------------------------------------------------------------
// Judge-alignment benchmark
// ---------------------------------------------------------------------------

struct AlignmentReport {
  RewardMethod method = RewardMethod::RaRImplicit;
  std::string judge;
  std::size_t n_pairs = 0;
  std::size_t n_correct = 0;
  std::size_t n_ties = 0;
  std::size_t n_incorrect = 0;
  std::size_t n_dropped = 0;
  double accuracy = 0.0;
};

inline json to_json(const AlignmentReport& r) {
  return json{{"method", to_string(r.method)}, {"judge", r.judge},
              {"n_pairs", r.n_pairs},          {"n_correct", r.n_correct},
              {"n_ties", r.n_ties},            {"n_incorrect", r.n_incorrect},
              {"n_dropped", r.n_dropped},      {"accuracy", r.accuracy}};
}

struct AlignmentOptions {
  // Ties count as incorrect by default; the alternative credits them 0.5.
  bool ties_half_credit = false;
  RubricListStyle rubric_list_style = RubricListStyle::Categories;
  int max_in_flight = 4;
};

// Rates chosen and rejected independently with the method's template; a pair
// is correct iff the chosen response is rated strictly higher.
inline AlignmentReport alignment_accuracy(JudgeGateway& gateway,
                                          const std::vector<PreferencePair>& pairs,
                                          const std::string& backend, RewardMethod method,
                                          const std::vector<Rubric>& rubrics = {},
                                          const AlignmentOptions& options = {}) {
  if (method != RewardMethod::RaRImplicit && method != RewardMethod::SimpleLikert) {
    throw ContractError("alignment_accuracy: method must be rar-implicit or simple-likert");
  }
  if (method == RewardMethod::RaRImplicit && rubrics.size() != pairs.size()) {
    throw ContractError("alignment_accuracy: rar-implicit needs one rubric per pair");
  }

  std::vector<JudgeRequest> requests;
  requests.reserve(pairs.size() * 2);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (const std::string* response : {&pairs[i].chosen, &pairs[i].rejected}) {
      Bindings b{{"prompt", pairs[i].prompt}, {"response", *response}};
      if (method == RewardMethod::RaRImplicit) {
        b["rubric_list_string"] = format_rubric_list(rubrics[i], options.rubric_list_style);
        requests.push_back({TemplateId::ImplicitRubricLikert, std::move(b)});
      } else {
        requests.push_back({TemplateId::SimpleLikert, std::move(b)});
      }
    }
  }
  auto outcomes = gateway.batch_judge(backend, requests, options.max_in_flight);

  AlignmentReport report;
  report.method = method;
  report.judge = backend;
  report.n_pairs = pairs.size();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& chosen = outcomes[2 * i];
    const auto& rejected = outcomes[2 * i + 1];
    if (!chosen.ok || !rejected.ok) {
      ++report.n_dropped;
      continue;
    }
    const int rating_chosen = parse_rating(chosen.judgment.text);
    const int rating_rejected = parse_rating(rejected.judgment.text);
    if (rating_chosen > rating_rejected) {
      ++report.n_correct;
    } else if (rating_chosen == rating_rejected) {
      ++report.n_ties;
    } else {
      ++report.n_incorrect;
    }
  }
  if (report.n_pairs > 0) {
    double credit = static_cast<double>(report.n_correct);
    if (options.ties_half_credit) credit += 0.5 * static_cast<double>(report.n_ties);
    report.accuracy = credit / static_cast<double>(report.n_pairs);
  }
  return report;
}

}  // namespace rar
