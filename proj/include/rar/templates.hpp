#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rar/error.hpp"
#include "rar/rubric.hpp"

namespace rar {

// Placeholder -> value map. Ordered so cache keys serialize canonically.
using Bindings = std::map<std::string, std::string>;

enum class TemplateId {
  ImplicitRubricLikert,
  SimpleLikert,
  ReferenceLikert,
  CriterionBinary,
  GpqaVerifier,
  RubricSynthesis,
  Perturbation,
};

inline const char* to_string(TemplateId id) {
  switch (id) {
    case TemplateId::ImplicitRubricLikert: return "implicit-rubric-likert";
    case TemplateId::SimpleLikert: return "simple-likert";
    case TemplateId::ReferenceLikert: return "reference-likert";
    case TemplateId::CriterionBinary: return "criterion-binary";
    case TemplateId::GpqaVerifier: return "gpqa-verifier";
    case TemplateId::RubricSynthesis: return "rubric-synthesis";
    case TemplateId::Perturbation: return "perturbation";
  }
  throw ContractError("invalid TemplateId value");
}

inline TemplateId template_id_from_string(const std::string& s) {
  for (TemplateId id : {TemplateId::ImplicitRubricLikert, TemplateId::SimpleLikert,
                        TemplateId::ReferenceLikert, TemplateId::CriterionBinary,
                        TemplateId::GpqaVerifier, TemplateId::RubricSynthesis,
                        TemplateId::Perturbation}) {
    if (s == to_string(id)) return id;
  }
  throw ValidationError("unknown template id: \"" + s + "\"");
}

// A prompt ready for a chat-completions backend. `system` may be empty for
// single-message templates.
struct RenderedPrompt {
  std::string system;
  std::string user;
};

// ---------------------------------------------------------------------------
// Template texts
// ---------------------------------------------------------------------------

namespace templates {

inline constexpr std::string_view kRatingJsonInstructions =
    R"TPL(Start your response with a valid JSON object that starts with "```json" and ends with "```".
The JSON object should contain a single key "rating" and the value should be an integer between 1 and 10.)TPL";

inline constexpr std::string_view kImplicitRubricLikertSystem =
    R"TPL(You are an expert evaluator. Given a user prompt, a generated response, and a list of quality rubrics, please rate the overall quality of the response on a scale of 1 to 10 based on how well it satisfies the rubrics.

Consider all rubrics holistically when determining your score. A response that violates multiple rubrics should receive a lower score, while a response that satisfies all rubrics should receive a higher score.

Start your response with a valid JSON object that starts with "```json" and ends with "```".
The JSON object should contain a single key "rating" and the value should be an integer between 1 and 10.

Example response:
```json
{
  "rating": 7
}```)TPL";

inline constexpr std::string_view kImplicitRubricLikertUser =
    R"TPL(Given the following prompt, response, and rubrics, please rate the overall quality of the response on a scale of 1 to 10 based on how well it satisfies the rubrics.

<prompt>
{prompt}
</prompt>

<response>
{response}
</response>

<rubrics>
{rubric_list_string}
</rubrics>

Your JSON Evaluation:)TPL";

inline constexpr std::string_view kSimpleLikertSystem =
    R"TPL(You are an expert evaluator. Given a user prompt and a generated response, please rate the overall quality of the response on a scale of 1 to 10, where 1 is very poor and 10 is excellent.

Start your response with a valid JSON object that starts with "```json" and ends with "```".
The JSON object should contain a single key "rating" and the value should be an integer between 1 and 10.

Example response:
```json
{
  "rating": 8
}```)TPL";

inline constexpr std::string_view kSimpleLikertUser =
    R"TPL(Given the following prompt, and response, please rate the overall quality of the response on a scale of 1 to 10.

<prompt>
{prompt}
</prompt>

<response>
{response}
</response>

Your JSON Evaluation:)TPL";

inline constexpr std::string_view kReferenceLikertSystem =
    R"TPL(You are an expert evaluator. Given a user prompt, a reference response, and a generated response, please rate the overall quality of the generated response on a scale of 1 to 10 based on how well it compares to the reference response.

Consider factors such as accuracy, completeness, coherence, and helpfulness when comparing to the reference. The reference response represents a high-quality answer that you should use as a benchmark.

Start your response with a valid JSON object that starts with "```json" and ends with "```".
The JSON object should contain a single key "rating" and the value should be an integer between 1 and 10.

Example response:
```json
{
  "rating": 8
}```)TPL";

inline constexpr std::string_view kReferenceLikertUser =
    R"TPL(Given the following prompt, reference response, and generated response, please rate the overall quality of the generated response on a scale of 1 to 10 based on how well it compares to the reference.

<prompt>
{prompt}
</prompt>

<reference_response>
{reference}
</reference_response>

<generated_response>
{response}
</generated_response>

Your JSON Evaluation:)TPL";

// Per-criterion yes/no prompt used by explicit aggregation. Mirrors the
// structure and JSON-fence convention of the Likert templates.
inline constexpr std::string_view kCriterionBinarySystem =
    R"TPL(You are an expert evaluator. Given a user prompt, a generated response, and a single evaluation criterion, please judge whether the response satisfies the criterion.

Evaluate only the stated criterion; ignore any other aspect of response quality.

Start your response with a valid JSON object that starts with "```json" and ends with "```".
The JSON object should contain a single key "satisfied" and the value should be either true or false.

Example response:
```json
{
  "satisfied": true
}```)TPL";

inline constexpr std::string_view kCriterionBinaryUser =
    R"TPL(Given the following prompt, response, and criterion, does the response satisfy the criterion?

<prompt>
{prompt}
</prompt>

<response>
{response}
</response>

<criterion>
{criterion}
</criterion>

Your JSON Evaluation:)TPL";

inline constexpr std::string_view kGpqaVerifierUser =
    R"TPL(Determine whether the following model response matches the ground truth answer.

## Ground truth answer## Option {correct_answer} or {correct_answer_text}
## Model Response ##: {response_text}

A response is considered correct if it's final answer is the correct option letter (A, B, C, or D), or has the correct answer text.

Please respond with only "Yes" or "No" (without quotes). Do not include a rationale.)TPL";

inline constexpr std::string_view kPerturbationUser =
    R"TPL(You are tasked with creating perturbed versions of health-related responses to generate training data for evaluating model robustness. Given an original health prompt and an ideal completion, you must generate a perturbed version that is strictly worse than the ideal response but still plausible.

Input Format:

[prompt]: {prompt}

[ideal_completion]: {ideal_completion}

Task Instructions:
For the perturbed version, follow this exact process:

[reasoning]:
Explain your strategy for making the response worse. Consider these perturbation approaches:

- Medical Accuracy: Introduce subtle medical inaccuracies or outdated information
- Completeness: Remove crucial information or context
- Clarity: Make explanations less clear or more confusing
- Safety: Reduce appropriate medical disclaimers or caveats
- Specificity: Replace specific advice with vague generalizations
- Structure: Disorganize the logical flow of information
- Tone: Make the response less empathetic or more dismissive

[perturbed_completion]:
Create the modified response based on your reasoning strategy.

[chunks_added]:
List any new text segments you added (even if they're incorrect or unhelpful)

[chunks_removed]:
List any text segments you removed from the ideal response

Quality Guidelines:

- Ensure Degradation: Each perturbed response must be objectively worse than the ideal response
- Maintain Plausibility: The perturbed responses should still seem like reasonable attempts (not obviously nonsensical)
- Vary Approaches: Use different perturbation strategies for each version
- Track Changes Precisely: Be specific about what text was added or removed
- Health Context Sensitivity: Be mindful that health misinformation can be harmful - focus on subtle degradations rather than dangerous advice

Example Perturbation Strategies:

- Remove important safety warnings or medical disclaimers
- Add outdated medical information that was once accepted but is now known to be incorrect
- Remove specific dosage information or timing details
- Add overly general statements that replace specific guidance
- Remove context about when to seek professional medical help
- Add confusing or contradictory information
- Remove step-by-step instructions and replace with vague advice
- Add unnecessarily complex medical jargon without explanation)TPL";

inline constexpr std::string_view kSynthesisMedicineHead =
    R"TPL(You are an expert rubric writer. Your job is to generate a self-contained set of evaluation criteria ("rubrics") for judging how good a response is to a given question. Rubrics can cover aspects of a response such as, but not limited to, factual correctness, ideal-response characteristics, style, completeness, helpfulness, harmlessness, patient-centeredness, depth of reasoning, contextual relevance, and empathy. Each item must be self-contained -- non expert readers should not need to infer anything or consult external information. Begin each description with its category: "Essential Criteria: ...", "Important Criteria: ...", "Optional Criteria: ...", or "Pitfall Criteria: Does not mention ...".

Inputs:
- question: The full question text.
)TPL";

inline constexpr std::string_view kSynthesisMedicineReferenceInput =
    R"TPL(- reference_answer: The ideal answer, including any specific facts, explanations, or advice.
)TPL";

inline constexpr std::string_view kSynthesisMedicineBody =
    R"TPL(
Total items:
- Choose 7-20 rubric items based on the complexity of the question.

Each rubric item:
- title (2-4 words).
- description: One sentence starting with its category prefix that explicitly states exactly what to look for. For example:
  - Essential Criteria: Identifies non-contrast helical CT scan as the most sensitive modality for ureteric stones.
  - Pitfall Criteria: Does not mention identifying (B) as the correct answer.
  - Important Criteria: Explains that non-contrast helical CT detects stones of varying sizes and compositions.
  - Optional Criteria: States "The final answer is (B)" or similar answer choice formatting.
- weight: For Essential/Important/Optional, use 1-5 (5 = most important); for Pitfall, use -1 or -2.

Category guidance:
- Essential: Critical facts or safety checks; if missing, the response is invalid (weight 5).
- Important: Key reasoning, completeness, or clarity; strongly affects quality (weight 3-4).
- Optional: Helpful style or extra depth; nice to have but not deal-breaking (weight 1-2).
- Pitfall: Common mistakes or omissions specific to this prompt - identify things a respondent often forgets or misstates. Each Pitfall description must begin with "Pitfall Criteria: Does not mention ..." or "Pitfall Criteria: Recommends ..." and use weight -1 or -2.

To ensure self-contained guidance:
- When referring to answer choices, explicitly say "Identifies (A)", "Identifies (B)", etc., rather than vague phrasing.
- If the format requires a conclusion like "The final answer is (B)", include a rubric item such as:
  - Essential Criteria: Includes a clear statement "The final answer is (B)".
- If reasoning should precede the answer, include a rubric like:
  - Important Criteria: Presents the explanation before stating the final answer.
- If brevity is valued, include a rubric like:
  - Optional Criteria: Remains concise and avoids unnecessary detail.
- If the question context demands mention of specific findings, include that explicitly (e.g., "Essential Criteria: Mentions that CT does not require contrast").

Output:
Provide a JSON array of rubric objects. Each object must contain exactly three keys - title, description, and weight. Do not copy large blocks of the question or reference_answer into the text. Each description must begin with its category prefix, and no extra keys are allowed.

)TPL";

inline constexpr std::string_view kSynthesisScienceHead =
    R"TPL(You are an expert rubric writer for science questions in the domains of Biology, Physics, and Chemistry. Your job is to generate a self-contained set of evaluation criteria ("rubrics") for judging how good a response is to a given question in one of these domains. Rubrics can cover aspects such as factual correctness, depth of reasoning, clarity, completeness, style, helpfulness, and common pitfalls. Each rubric item must be fully self-contained so that non-expert readers need not consult any external information.

Inputs:
- question: The full question text.
)TPL";

inline constexpr std::string_view kSynthesisScienceReferenceInput =
    R"TPL(- reference_answer: The ideal answer, including any key facts or explanations.
)TPL";

inline constexpr std::string_view kSynthesisScienceBody =
    R"TPL(
Total items:
- Choose 7-20 rubric items based on question complexity.

Each rubric item must include exactly three keys:
1. title (2-4 words)
2. description: One sentence beginning with its category prefix, explicitly stating what to look for. For example:
   - Essential Criteria: States that in the described closed system, the total mechanical energy (kinetic plus potential) before the event equals the total mechanical energy after the event.
   - Important Criteria: Breaks down numerical energy values for each stage, demonstrating that initial kinetic energy plus initial potential energy equals final kinetic energy plus final potential energy.
   - Optional Criteria: Provides a concrete example, such as a pendulum converting between kinetic and potential energy, to illustrate how energy shifts within the system.
   - Pitfall Criteria: Does not mention that frictional or air-resistance losses are assumed negligible when applying conservation of mechanical energy.
3. weight: For Essential/Important/Optional, use 1-5 (5 = most important); for Pitfall, use -1 or -2.

Category guidance:
- Essential: Critical facts or safety checks; omission invalidates the response.
- Important: Key reasoning or completeness; strongly affects quality.
- Optional: Nice-to-have style or extra depth.
- Pitfall: Common mistakes or omissions; highlight things often missed.

Format notes:
- When referring to answer choices, explicitly say "Identifies (A)", "Identifies (B)", etc.
- If a clear conclusion is required (e.g. "The final answer is (B)"), include an Essential Criteria for it.
- If reasoning should precede the final answer, include an Important Criteria to that effect.
- If brevity is valued, include an Optional Criteria about conciseness.

Output:
Provide a JSON array of rubric objects. Each object must contain exactly three keys - title, description, and weight. Do not copy large blocks of the question or reference_answer into the text. Each description must begin with its category prefix, and no extra keys are allowed.

)TPL";

inline constexpr std::string_view kSynthesisClosingWithReference =
    R"TPL(Now, given the question and reference_answer, generate the rubric as described. The reference answer is an ideal response but not necessarily exhaustive; use it only as guidance.

question:
{question}

reference_answer:
{reference_answer})TPL";

inline constexpr std::string_view kSynthesisClosingNoReference =
    R"TPL(Now, given the question, generate the rubric as described.

question:
{question})TPL";

}  // namespace templates

// Rubric synthesis has one template per domain; the no-reference variant drops
// the reference input stanza and the closing sentence about the reference.
inline std::string synthesis_template_text(const std::string& domain, bool with_reference) {
  std::string out;
  if (domain == "medicine") {
    out += templates::kSynthesisMedicineHead;
    if (with_reference) out += templates::kSynthesisMedicineReferenceInput;
    out += templates::kSynthesisMedicineBody;
  } else if (domain == "science") {
    out += templates::kSynthesisScienceHead;
    if (with_reference) out += templates::kSynthesisScienceReferenceInput;
    out += templates::kSynthesisScienceBody;
  } else {
    throw TemplateError("rubric-synthesis: unknown domain \"" + domain +
                        "\" (expected \"medicine\" or \"science\")");
  }
  out += with_reference ? templates::kSynthesisClosingWithReference
                        : templates::kSynthesisClosingNoReference;
  return out;
}

namespace detail {

struct TemplateShape {
  std::string system;
  std::string user;
  std::vector<std::string> required;
  std::vector<std::string> optional;
};

inline TemplateShape template_shape(TemplateId id, const Bindings& bindings) {
  using namespace templates;
  switch (id) {
    case TemplateId::ImplicitRubricLikert:
      return {std::string(kImplicitRubricLikertSystem), std::string(kImplicitRubricLikertUser),
              {"prompt", "response", "rubric_list_string"}, {}};
    case TemplateId::SimpleLikert:
      return {std::string(kSimpleLikertSystem), std::string(kSimpleLikertUser),
              {"prompt", "response"}, {}};
    case TemplateId::ReferenceLikert:
      return {std::string(kReferenceLikertSystem), std::string(kReferenceLikertUser),
              {"prompt", "reference", "response"}, {}};
    case TemplateId::CriterionBinary:
      return {std::string(kCriterionBinarySystem), std::string(kCriterionBinaryUser),
              {"prompt", "response", "criterion"}, {}};
    case TemplateId::GpqaVerifier:
      return {"", std::string(kGpqaVerifierUser),
              {"correct_answer", "correct_answer_text", "response_text"}, {}};
    case TemplateId::Perturbation:
      return {"", std::string(kPerturbationUser), {"prompt", "ideal_completion"}, {}};
    case TemplateId::RubricSynthesis: {
      const bool with_reference = bindings.count("reference_answer") > 0;
      auto domain_it = bindings.find("domain");
      const std::string domain = domain_it == bindings.end() ? "" : domain_it->second;
      TemplateShape shape{"", "", {"domain", "question"}, {"reference_answer"}};
      if (!domain.empty()) shape.user = synthesis_template_text(domain, with_reference);
      return shape;
    }
  }
  throw ContractError("invalid TemplateId value");
}

// Single pass over the template text; substituted values are never rescanned.
inline std::string substitute(std::string_view text, const Bindings& bindings) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      const std::size_t close = text.find('}', i + 1);
      if (close != std::string_view::npos) {
        const std::string name(text.substr(i + 1, close - i - 1));
        auto it = bindings.find(name);
        if (it != bindings.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += text[i++];
  }
  return out;
}

}  // namespace detail

// Renders a prompt template with placeholder substitution. Throws
// TemplateError naming the placeholder when a required binding is missing, and
// rejects bindings the template does not declare.
inline RenderedPrompt render_template(TemplateId id, const Bindings& bindings) {
  const detail::TemplateShape shape = detail::template_shape(id, bindings);
  for (const std::string& name : shape.required) {
    if (bindings.find(name) == bindings.end()) {
      throw TemplateError(std::string(to_string(id)) + ": missing binding {" + name + "}");
    }
  }
  for (const auto& [name, value] : bindings) {
    const bool known =
        std::find(shape.required.begin(), shape.required.end(), name) != shape.required.end() ||
        std::find(shape.optional.begin(), shape.optional.end(), name) != shape.optional.end();
    if (!known) {
      throw TemplateError(std::string(to_string(id)) + ": unknown binding {" + name + "}");
    }
  }
  if (id == TemplateId::ImplicitRubricLikert && bindings.at("rubric_list_string").empty()) {
    throw TemplateError("implicit-rubric-likert: rubric_list_string must not be empty");
  }
  if (id == TemplateId::RubricSynthesis && bindings.at("domain").empty()) {
    throw TemplateError("rubric-synthesis: domain must not be empty");
  }
  // The synthesis binding "domain" selects the text and must not be spliced in.
  Bindings effective = bindings;
  if (id == TemplateId::RubricSynthesis) effective.erase("domain");
  return {detail::substitute(shape.system, effective), detail::substitute(shape.user, effective)};
}

// How rubric items are listed inside {rubric_list_string}. Category tags are
// the default; numeric tags expose the aggregation weights instead.
enum class RubricListStyle { Categories, NumericWeights };

inline std::string format_rubric_list(const Rubric& rubric,
                                      RubricListStyle style = RubricListStyle::Categories) {
  std::string out;
  for (std::size_t i = 0; i < rubric.items.size(); ++i) {
    const Criterion& c = rubric.items[i];
    if (i > 0) out += '\n';
    out += "- [";
    if (style == RubricListStyle::Categories) {
      out += to_string(c.category);
    } else {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "weight=%g", c.aggregation_weight);
      out += buf;
    }
    out += "] ";
    out += c.description;
  }
  return out;
}

}  // namespace rar
