#pragma once

#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

#include "rar/cache.hpp"
#include "rar/digest.hpp"
#include "rar/error.hpp"
#include "rar/rubric.hpp"
#include "rar/templates.hpp"

namespace rar {

// ---------------------------------------------------------------------------
// Backend descriptor
// ---------------------------------------------------------------------------

enum class BackendKind { Remote, MockKeyword, MockScripted };

inline const char* to_string(BackendKind k) {
  switch (k) {
    case BackendKind::Remote: return "remote";
    case BackendKind::MockKeyword: return "mock-keyword";
    case BackendKind::MockScripted: return "mock-scripted";
  }
  throw ContractError("invalid BackendKind value");
}

inline BackendKind backend_kind_from_string(const std::string& s) {
  if (s == "remote") return BackendKind::Remote;
  if (s == "mock-keyword") return BackendKind::MockKeyword;
  if (s == "mock-scripted") return BackendKind::MockScripted;
  throw ValidationError("unknown backend kind: \"" + s + "\"");
}

struct JudgeBackendSpec {
  std::string name;
  BackendKind kind = BackendKind::MockKeyword;
  std::optional<std::string> endpoint;
  std::optional<std::string> model_id;
  double temperature = 0.0;
  int max_attempts = 3;
  std::optional<std::string> script_path;

  void validate() const {
    if (name.empty()) throw ValidationError("backend: name must not be empty");
    if (kind == BackendKind::Remote && (!endpoint || !model_id)) {
      throw ValidationError("backend \"" + name + "\": remote requires endpoint and model_id");
    }
    if (temperature < 0.0) {
      throw ValidationError("backend \"" + name + "\": temperature must be >= 0");
    }
    if (max_attempts < 1) {
      throw ValidationError("backend \"" + name + "\": max_attempts must be >= 1");
    }
  }
};

struct JudgeRequest {
  TemplateId template_id = TemplateId::SimpleLikert;
  Bindings bindings;
};

// Digest of everything that influences the judgment; identical keys must mean
// interchangeable responses.
inline std::string cache_key(const JudgeBackendSpec& spec, const JudgeRequest& req) {
  json material{
      {"backend", spec.name},
      {"model_id", spec.model_id ? json(*spec.model_id) : json(nullptr)},
      {"template_id", to_string(req.template_id)},
      {"temperature", spec.temperature},
      {"bindings", json(req.bindings)},
  };
  return sha256_hex(material.dump());
}

struct JudgmentResult {
  std::optional<int> rating;
  std::optional<bool> binary;
  std::string raw_text;
  int attempts_used = 0;
};

// ---------------------------------------------------------------------------
// Structured output parsing
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t skip_ws(const std::string& s, std::size_t i) {
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r' || s[i] == '\n')) ++i;
  return i;
}

// Index one past the close delimiter matching the one at `open`.
inline std::size_t match_delims(const std::string& s, std::size_t open, char open_c,
                                char close_c) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == open_c) {
      ++depth;
    } else if (c == close_c) {
      if (--depth == 0) return i + 1;
    }
  }
  throw ParseError("unbalanced JSON delimiters in judge output", s);
}

}  // namespace detail

// Accepts exactly: optional ``` / ```json fence, one JSON value delimited by
// open_c/close_c, an optional closing fence, and nothing else but whitespace.
inline json parse_fenced_json(const std::string& raw, char open_c, char close_c) {
  std::size_t i = detail::skip_ws(raw, 0);
  bool fenced = false;
  if (raw.compare(i, 7, "```json") == 0) {
    i += 7;
    fenced = true;
  } else if (raw.compare(i, 3, "```") == 0) {
    i += 3;
    fenced = true;
  }
  i = detail::skip_ws(raw, i);
  if (i >= raw.size() || raw[i] != open_c) {
    throw ParseError(std::string("no JSON ") + (open_c == '{' ? "object" : "array") +
                         " found in judge output",
                     raw);
  }
  const std::size_t end = detail::match_delims(raw, i, open_c, close_c);
  json value;
  try {
    value = json::parse(raw.substr(i, end - i));
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed JSON in judge output: ") + e.what(), raw);
  }
  std::size_t j = detail::skip_ws(raw, end);
  if (fenced && raw.compare(j, 3, "```") == 0) j = detail::skip_ws(raw, j + 3);
  if (j != raw.size()) {
    throw ParseError("trailing content after JSON value", raw);
  }
  return value;
}

inline json parse_single_json_object(const std::string& raw) {
  return parse_fenced_json(raw, '{', '}');
}

inline int parse_rating(const std::string& raw) {
  const json obj = parse_single_json_object(raw);
  if (!obj.contains("rating")) throw ParseError("missing \"rating\" key", raw);
  const json& v = obj["rating"];
  if (!v.is_number_integer()) throw ParseError("\"rating\" is not an integer", raw);
  const std::int64_t rating = v.get<std::int64_t>();
  if (rating < 1 || rating > 10) {
    throw ParseError("\"rating\" " + std::to_string(rating) + " outside 1..10", raw);
  }
  return static_cast<int>(rating);
}

inline bool parse_satisfied(const std::string& raw) {
  const json obj = parse_single_json_object(raw);
  if (!obj.contains("satisfied")) throw ParseError("missing \"satisfied\" key", raw);
  const json& v = obj["satisfied"];
  if (!v.is_boolean()) throw ParseError("\"satisfied\" is not a boolean", raw);
  return v.get<bool>();
}

// Strict verifier reply: exactly "Yes" or "No" after trimming whitespace.
inline bool parse_yes_no(const std::string& raw) {
  std::size_t b = detail::skip_ws(raw, 0);
  std::size_t e = raw.size();
  while (e > b && (raw[e - 1] == ' ' || raw[e - 1] == '\t' || raw[e - 1] == '\r' ||
                   raw[e - 1] == '\n')) {
    --e;
  }
  const std::string body = raw.substr(b, e - b);
  if (body == "Yes") return true;
  if (body == "No") return false;
  throw ParseError("expected exactly \"Yes\" or \"No\"", raw);
}

// ---------------------------------------------------------------------------
// Transports
// ---------------------------------------------------------------------------

// One raw model call. Throws rar::Error on transport failure.
class JudgeTransport {
 public:
  virtual ~JudgeTransport() = default;
  virtual std::string complete(const RenderedPrompt& prompt) = 0;
};

// Replays canned responses in order. Thread-safe.
class ScriptedTransport : public JudgeTransport {
 public:
  explicit ScriptedTransport(std::vector<std::string> responses)
      : responses_(responses.begin(), responses.end()) {}

  std::string complete(const RenderedPrompt&) override {
    std::lock_guard<std::mutex> lock(mu_);
    if (responses_.empty()) throw Error("scripted transport: no responses left");
    std::string out = std::move(responses_.front());
    responses_.pop_front();
    return out;
  }

  std::size_t remaining() const {
    std::lock_guard<std::mutex> lock(mu_);
    return responses_.size();
  }

 private:
  mutable std::mutex mu_;
  std::deque<std::string> responses_;
};

namespace mock {

inline std::string to_lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline bool contains_ci(const std::string& haystack, const std::string& needle) {
  return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

// Double-quoted spans of a criterion description; the keyword mock's unit of
// evidence.
inline std::vector<std::string> quoted_keywords(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (true) {
    const std::size_t open = text.find('"', i);
    if (open == std::string::npos) break;
    const std::size_t close = text.find('"', open + 1);
    if (close == std::string::npos) break;
    if (close > open + 1) out.push_back(text.substr(open + 1, close - open - 1));
    i = close + 1;
  }
  return out;
}

// Deterministic stand-in for a per-criterion judge: a criterion holds its
// evidence as quoted keywords; "does not mention"/"avoids" phrasing flips the
// direction, matching the positively-phrased pitfall convention.
inline bool keyword_satisfied(const std::string& criterion, const std::string& response) {
  const std::vector<std::string> keywords = quoted_keywords(criterion);
  if (keywords.empty()) return false;
  bool all_present = true;
  for (const std::string& k : keywords) {
    if (!contains_ci(response, k)) {
      all_present = false;
      break;
    }
  }
  const bool negated =
      contains_ci(criterion, "does not") || contains_ci(criterion, "avoids");
  return negated ? !all_present : all_present;
}

inline std::string extract_block(const std::string& text, const std::string& open_tag,
                                 const std::string& close_tag) {
  const std::size_t b = text.find(open_tag);
  if (b == std::string::npos) return {};
  const std::size_t start = b + open_tag.size();
  const std::size_t e = text.find(close_tag, start);
  if (e == std::string::npos) return {};
  std::string out = text.substr(start, e - start);
  if (!out.empty() && out.front() == '\n') out.erase(out.begin());
  if (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

}  // namespace mock

// Fully offline judge. Reads the rendered prompt back, applies the quoted-
// keyword rule, and answers in the same JSON shapes a remote judge would use.
// Rubric-free Likert templates get a constant rating, which makes this mock
// deliberately non-discriminating without rubric guidance.
class KeywordTransport : public JudgeTransport {
 public:
  explicit KeywordTransport(int constant_rating = 5) : constant_rating_(constant_rating) {}

  std::string complete(const RenderedPrompt& prompt) override {
    const std::string& user = prompt.user;
    if (user.find("<criterion>") != std::string::npos) {
      const std::string response = mock::extract_block(user, "<response>", "</response>");
      const std::string criterion = mock::extract_block(user, "<criterion>", "</criterion>");
      return fenced_json("satisfied", mock::keyword_satisfied(criterion, response) ? "true" : "false");
    }
    if (user.find("<rubrics>") != std::string::npos) {
      return fenced_json("rating", std::to_string(implicit_rating(user)));
    }
    if (user.find("## Ground truth answer##") != std::string::npos) {
      return verifier_answer(user) ? "Yes" : "No";
    }
    if (user.find("[ideal_completion]:") != std::string::npos) {
      return perturbation_answer(user);
    }
    if (user.find("expert rubric writer") != std::string::npos) {
      throw Error("keyword mock cannot synthesize rubrics; use a scripted backend");
    }
    // Simple/Reference Likert: no rubric to lean on, answer a constant.
    return fenced_json("rating", std::to_string(constant_rating_));
  }

 private:
  static std::string fenced_json(const std::string& key, const std::string& value) {
    return "```json\n{\n  \"" + key + "\": " + value + "\n}```";
  }

  // Weighted satisfied fraction over the "- [Tag] description" rubric lines,
  // mapped onto the 1..10 scale.
  int implicit_rating(const std::string& user) const {
    const std::string rubrics = mock::extract_block(user, "<rubrics>", "</rubrics>");
    const std::string response = mock::extract_block(user, "<response>", "</response>");
    double num = 0.0, den = 0.0;
    std::size_t pos = 0;
    while (pos < rubrics.size()) {
      std::size_t eol = rubrics.find('\n', pos);
      if (eol == std::string::npos) eol = rubrics.size();
      const std::string line = rubrics.substr(pos, eol - pos);
      pos = eol + 1;
      if (line.rfind("- [", 0) != 0) continue;
      const std::size_t tag_end = line.find("] ", 3);
      if (tag_end == std::string::npos) continue;
      const std::string tag = line.substr(3, tag_end - 3);
      const std::string description = line.substr(tag_end + 2);
      double weight = 0.0;
      if (tag.rfind("weight=", 0) == 0) {
        weight = std::strtod(tag.c_str() + 7, nullptr);
      } else {
        weight = category_weight(category_from_string(tag));
      }
      if (!(weight > 0.0)) continue;
      den += weight;
      if (mock::keyword_satisfied(description, response)) num += weight;
    }
    if (den <= 0.0) return 1;
    const double score = num / den;
    return 1 + static_cast<int>(std::lround(9.0 * score));
  }

  bool verifier_answer(const std::string& user) const {
    const std::string truth_open = "## Ground truth answer## Option ";
    const std::size_t t = user.find(truth_open);
    if (t == std::string::npos) return false;
    const std::size_t letter_at = t + truth_open.size();
    const std::size_t or_at = user.find(" or ", letter_at);
    const std::size_t eol = user.find('\n', letter_at);
    if (or_at == std::string::npos || or_at > eol) return false;
    const std::string letter = user.substr(letter_at, or_at - letter_at);
    const std::string text = user.substr(or_at + 4, eol - (or_at + 4));
    const std::string resp_open = "## Model Response ##: ";
    const std::size_t r = user.find(resp_open);
    if (r == std::string::npos) return false;
    const std::size_t resp_start = r + resp_open.size();
    std::size_t resp_end = user.find("\n\nA response is considered correct", resp_start);
    if (resp_end == std::string::npos) resp_end = user.size();
    const std::string response = user.substr(resp_start, resp_end - resp_start);
    if (!text.empty() && mock::contains_ci(response, text)) return true;
    // Letter as a standalone token: "(B)", "\boxed{B}", or word-delimited B.
    if (letter.size() == 1) {
      const char l = letter[0];
      for (std::size_t i = 0; i < response.size(); ++i) {
        if (std::toupper(static_cast<unsigned char>(response[i])) != l) continue;
        const bool left_ok = i == 0 || !std::isalnum(static_cast<unsigned char>(response[i - 1]));
        const bool right_ok =
            i + 1 >= response.size() || !std::isalnum(static_cast<unsigned char>(response[i + 1]));
        if (left_ok && right_ok) return true;
      }
    }
    return false;
  }

  // Deterministic degradation: keep the ideal text and append a vague,
  // specificity-destroying sentence.
  std::string perturbation_answer(const std::string& user) const {
    const std::string open = "[ideal_completion]: ";
    const std::size_t b = user.find(open);
    std::size_t e = user.find("\n\nTask Instructions:", b);
    if (e == std::string::npos) e = user.size();
    const std::string ideal = user.substr(b + open.size(), e - (b + open.size()));
    const std::string added =
        "That said, the specifics rarely matter much; most people can simply use their own judgment.";
    std::string out;
    out += "[reasoning]:\nReplace specific guidance with a vague generalization to reduce specificity.\n\n";
    out += "[perturbed_completion]:\n" + ideal + " " + added + "\n\n";
    out += "[chunks_added]:\n- " + added + "\n\n";
    out += "[chunks_removed]:\n- (none)";
    return out;
  }

  int constant_rating_;
};

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

enum class FailurePolicy { Abort, Drop };

inline const char* to_string(FailurePolicy p) {
  return p == FailurePolicy::Abort ? "abort" : "drop";
}

inline FailurePolicy failure_policy_from_string(const std::string& s) {
  if (s == "abort") return FailurePolicy::Abort;
  if (s == "drop") return FailurePolicy::Drop;
  throw ValidationError("unknown failure policy: \"" + s + "\"");
}

struct GatewayOptions {
  std::optional<std::filesystem::path> cache_dir;
  int backoff_base_ms = 250;
};

struct RawJudgment {
  std::string text;
  int attempts_used = 0;
  bool from_cache = false;
};

struct GatewayStats {
  std::uint64_t backend_calls = 0;
  std::uint64_t cache_hits = 0;
};

// Retries a response check; throwing ParseError re-asks the backend.
using ResponseCheck = std::function<void(const std::string&)>;

// What a well-formed response looks like per template, for callers that do
// not supply their own check. Synthesis and perturbation outputs need
// context-dependent validation and are left to their modules.
inline ResponseCheck default_response_check(TemplateId id) {
  switch (id) {
    case TemplateId::ImplicitRubricLikert:
    case TemplateId::SimpleLikert:
    case TemplateId::ReferenceLikert:
      return [](const std::string& text) { (void)parse_rating(text); };
    case TemplateId::CriterionBinary:
      return [](const std::string& text) { (void)parse_satisfied(text); };
    case TemplateId::GpqaVerifier:
      return [](const std::string& text) { (void)parse_yes_no(text); };
    case TemplateId::RubricSynthesis:
    case TemplateId::Perturbation:
      return {};
  }
  return {};
}

// Dispatches rendered prompts to named backends with retries, two-level
// caching (in-memory plus optional content-addressed files), single-flight
// deduplication, and bounded-concurrency batching. Safe for concurrent use.
class JudgeGateway {
 public:
  explicit JudgeGateway(GatewayOptions options = {}) : options_(std::move(options)) {
    if (options_.cache_dir) file_cache_.emplace(*options_.cache_dir);
  }

  void register_backend(JudgeBackendSpec spec, std::shared_ptr<JudgeTransport> transport) {
    spec.validate();
    if (!transport) throw ContractError("register_backend: null transport");
    const std::string name = spec.name;
    std::lock_guard<std::mutex> lock(mu_);
    backends_[name] = Backend{std::move(spec), std::move(transport)};
  }

  JudgeBackendSpec backend(const std::string& name) const {
    std::lock_guard<std::mutex> lock(mu_);
    return find_backend(name).spec;
  }

  bool has_backend(const std::string& name) const {
    std::lock_guard<std::mutex> lock(mu_);
    return backends_.count(name) > 0;
  }

  GatewayStats stats() const {
    return {backend_calls_.load(), cache_hits_.load()};
  }

  // Core path: render, consult caches, dispatch with retries, check, store.
  RawJudgment complete_checked(const std::string& backend_name, const JudgeRequest& request,
                               const ResponseCheck& check = {}) {
    Backend backend;
    {
      std::lock_guard<std::mutex> lock(mu_);
      backend = find_backend(backend_name);
    }
    const std::string key = cache_key(backend.spec, request);

    if (auto hit = cache_lookup(key)) return *hit;

    std::shared_future<RawJudgment> flight;
    bool leader = false;
    {
      std::lock_guard<std::mutex> lock(inflight_mu_);
      auto it = inflight_.find(key);
      if (it == inflight_.end()) {
        std::promise<RawJudgment> promise;
        flight = promise.get_future().share();
        inflight_.emplace(key, flight);
        promises_.emplace(key, std::move(promise));
        leader = true;
      } else {
        flight = it->second;
      }
    }
    if (!leader) return flight.get();

    try {
      RawJudgment result = dispatch_with_retries(backend, request, check);
      cache_store(key, backend, request, result);
      settle(key, result, nullptr);
      return result;
    } catch (...) {
      settle(key, {}, std::current_exception());
      throw;
    }
  }

  // Likert-template judgment with rating parsing.
  JudgmentResult judge_likert(const std::string& backend_name, TemplateId template_id,
                              const Bindings& bindings) {
    if (template_id != TemplateId::ImplicitRubricLikert &&
        template_id != TemplateId::SimpleLikert && template_id != TemplateId::ReferenceLikert) {
      throw ContractError("judge_likert: template must be a Likert template");
    }
    JudgeRequest request{template_id, bindings};
    RawJudgment raw = complete_checked(backend_name, request,
                                       [](const std::string& text) { (void)parse_rating(text); });
    JudgmentResult result;
    result.rating = parse_rating(raw.text);
    result.raw_text = raw.text;
    result.attempts_used = raw.attempts_used;
    return result;
  }

  // Binary verdict for exactly one criterion.
  bool judge_criterion(const std::string& backend_name, const std::string& prompt,
                       const std::string& response, const Criterion& criterion) {
    JudgeRequest request{TemplateId::CriterionBinary,
                         Bindings{{"prompt", prompt},
                                  {"response", response},
                                  {"criterion", criterion.description}}};
    RawJudgment raw = complete_checked(backend_name, request, [](const std::string& text) {
      (void)parse_satisfied(text);
    });
    return parse_satisfied(raw.text);
  }

  struct BatchOutcome {
    bool ok = false;
    RawJudgment judgment;
    std::string error;
  };

  // Fan-out with at most max_in_flight requests outstanding; results are
  // positionally aligned with the inputs and per-request failures do not
  // abort the batch.
  std::vector<BatchOutcome> batch_judge(const std::string& backend_name,
                                        const std::vector<JudgeRequest>& requests,
                                        int max_in_flight, const ResponseCheck& check = {}) {
    if (max_in_flight < 1) throw ContractError("batch_judge: max_in_flight must be >= 1");
    std::vector<BatchOutcome> outcomes(requests.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= requests.size()) return;
        try {
          const ResponseCheck effective =
              check ? check : default_response_check(requests[i].template_id);
          outcomes[i].judgment = complete_checked(backend_name, requests[i], effective);
          outcomes[i].ok = true;
        } catch (const std::exception& e) {
          outcomes[i].error = e.what();
        }
      }
    };
    const std::size_t n_workers =
        std::min<std::size_t>(static_cast<std::size_t>(max_in_flight), requests.size());
    if (n_workers <= 1) {
      worker();
    } else {
      std::vector<std::thread> threads;
      threads.reserve(n_workers);
      for (std::size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);
      for (std::thread& t : threads) t.join();
    }
    return outcomes;
  }

 private:
  struct Backend {
    JudgeBackendSpec spec;
    std::shared_ptr<JudgeTransport> transport;
  };

  const Backend& find_backend(const std::string& name) const {
    auto it = backends_.find(name);
    if (it == backends_.end()) {
      throw ConfigError("unknown judge backend: \"" + name + "\"");
    }
    return it->second;
  }

  std::optional<RawJudgment> cache_lookup(const std::string& key) {
    {
      std::lock_guard<std::mutex> lock(memory_mu_);
      auto it = memory_.find(key);
      if (it != memory_.end()) {
        cache_hits_.fetch_add(1);
        RawJudgment out = it->second;
        out.from_cache = true;
        return out;
      }
    }
    if (file_cache_) {
      if (auto entry = file_cache_->get(key)) {
        cache_hits_.fetch_add(1);
        RawJudgment out;
        out.text = entry->response;
        out.attempts_used = entry->metadata.value("attempts_used", 1);
        out.from_cache = true;
        {
          std::lock_guard<std::mutex> lock(memory_mu_);
          memory_.emplace(key, out);
        }
        return out;
      }
    }
    return std::nullopt;
  }

  void cache_store(const std::string& key, const Backend& backend, const JudgeRequest& request,
                   const RawJudgment& result) {
    {
      std::lock_guard<std::mutex> lock(memory_mu_);
      memory_[key] = result;
    }
    if (file_cache_) {
      FileCache::Entry entry;
      entry.response = result.text;
      entry.metadata = json{{"backend", backend.spec.name},
                            {"kind", to_string(backend.spec.kind)},
                            {"model_id", backend.spec.model_id ? json(*backend.spec.model_id)
                                                               : json(nullptr)},
                            {"template_id", to_string(request.template_id)},
                            {"temperature", backend.spec.temperature},
                            {"bindings", json(request.bindings)},
                            {"attempts_used", result.attempts_used}};
      file_cache_->put(key, entry);
    }
  }

  RawJudgment dispatch_with_retries(const Backend& backend, const JudgeRequest& request,
                                    const ResponseCheck& check) {
    const RenderedPrompt prompt = render_template(request.template_id, request.bindings);
    std::string last_error;
    for (int attempt = 1; attempt <= backend.spec.max_attempts; ++attempt) {
      std::string text;
      try {
        backend_calls_.fetch_add(1);
        text = backend.transport->complete(prompt);
      } catch (const std::exception& e) {
        last_error = std::string("transport: ") + e.what();
        if (attempt < backend.spec.max_attempts && options_.backoff_base_ms > 0) {
          const auto delay =
              std::chrono::milliseconds(options_.backoff_base_ms) * (1 << (attempt - 1));
          std::this_thread::sleep_for(delay);
        }
        continue;
      }
      try {
        if (check) check(text);
        return RawJudgment{std::move(text), attempt, false};
      } catch (const ParseError& e) {
        last_error = std::string("parse: ") + e.what();
      }
    }
    throw JudgeFailure("backend \"" + backend.spec.name + "\" failed after " +
                       std::to_string(backend.spec.max_attempts) + " attempts (" +
                       to_string(request.template_id) + "): " + last_error);
  }

  void settle(const std::string& key, RawJudgment result, std::exception_ptr error) {
    std::promise<RawJudgment> promise;
    {
      std::lock_guard<std::mutex> lock(inflight_mu_);
      auto it = promises_.find(key);
      promise = std::move(it->second);
      promises_.erase(it);
      inflight_.erase(key);
    }
    if (error) {
      promise.set_exception(error);
    } else {
      promise.set_value(std::move(result));
    }
  }

  GatewayOptions options_;
  std::optional<FileCache> file_cache_;

  mutable std::mutex mu_;
  std::unordered_map<std::string, Backend> backends_;

  std::mutex memory_mu_;
  std::unordered_map<std::string, RawJudgment> memory_;

  std::mutex inflight_mu_;
  std::unordered_map<std::string, std::shared_future<RawJudgment>> inflight_;
  std::unordered_map<std::string, std::promise<RawJudgment>> promises_;

  std::atomic<std::uint64_t> backend_calls_{0};
  std::atomic<std::uint64_t> cache_hits_{0};
};

}  // namespace rar
