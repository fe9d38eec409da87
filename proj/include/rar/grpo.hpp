#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "rar/error.hpp"
#include "rar/judge.hpp"
#include "rar/reward.hpp"
#include "rar/rubric.hpp"

namespace rar {

// One training prompt: a finite response pool standing in for the generation
// space, plus whatever the reward method needs.
struct PromptCase {
  std::string prompt_id;
  std::string prompt;
  std::vector<std::string> pool;
  std::optional<Rubric> rubric;
  std::optional<std::string> reference;
  std::optional<std::string> ground_truth;
};

inline PromptCase prompt_case_from_json(const json& j) {
  PromptCase c;
  c.prompt_id = j.at("prompt_id").get<std::string>();
  c.prompt = j.at("prompt").get<std::string>();
  for (const json& r : j.at("pool")) c.pool.push_back(r.get<std::string>());
  if (c.pool.empty()) throw ValidationError("case " + c.prompt_id + ": pool is empty");
  if (j.contains("rubric") && !j["rubric"].is_null()) c.rubric = rubric_from_json(j["rubric"]);
  if (j.contains("reference") && !j["reference"].is_null()) {
    c.reference = j["reference"].get<std::string>();
  }
  if (j.contains("ground_truth") && !j["ground_truth"].is_null()) {
    c.ground_truth = j["ground_truth"].get<std::string>();
  }
  return c;
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

// Categorical policy over each prompt's response pool.
class ToyPolicy {
 public:
  void add_prompt(const std::string& prompt_id, std::vector<double> logits) {
    if (logits.empty()) throw ContractError("policy: empty logits for " + prompt_id);
    logits_[prompt_id] = std::move(logits);
  }

  bool has_prompt(const std::string& prompt_id) const { return logits_.count(prompt_id) > 0; }

  const std::vector<double>& logits(const std::string& prompt_id) const {
    auto it = logits_.find(prompt_id);
    if (it == logits_.end()) throw ContractError("policy: unknown prompt_id " + prompt_id);
    return it->second;
  }

  std::vector<double> probabilities(const std::string& prompt_id) const {
    return softmax(logits(prompt_id));
  }

  std::size_t argmax(const std::string& prompt_id) const {
    const std::vector<double>& l = logits(prompt_id);
    return static_cast<std::size_t>(std::max_element(l.begin(), l.end()) - l.begin());
  }

  void nudge(const std::string& prompt_id, const std::vector<double>& delta) {
    auto it = logits_.find(prompt_id);
    if (it == logits_.end()) throw ContractError("policy: unknown prompt_id " + prompt_id);
    if (delta.size() != it->second.size()) {
      throw ContractError("policy: delta size mismatch for " + prompt_id);
    }
    for (std::size_t i = 0; i < delta.size(); ++i) it->second[i] += delta[i];
  }

  json snapshot() const {
    json logits = json::object();
    for (const auto& [id, l] : logits_) logits[id] = l;
    return json{{"logits", std::move(logits)}};
  }

 private:
  std::map<std::string, std::vector<double>> logits_;
};

namespace detail {

// Uniform double in [0, 1) from the raw engine output; pinned so sampling is
// reproducible across platforms.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace detail

// k independent draws from softmax(logits) via inverse CDF.
inline std::vector<std::size_t> sample_group(const ToyPolicy& policy,
                                             const std::string& prompt_id, int k,
                                             std::mt19937_64& rng) {
  if (k < 1) throw ContractError("sample_group: k must be >= 1");
  const std::vector<double> p = policy.probabilities(prompt_id);
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int draw = 0; draw < k; ++draw) {
    const double u = detail::uniform01(rng);
    double cum = 0.0;
    std::size_t pick = p.size() - 1;
    for (std::size_t i = 0; i < p.size(); ++i) {
      cum += p[i];
      if (u < cum) {
        pick = i;
        break;
      }
    }
    out.push_back(pick);
  }
  return out;
}

// Group-relative advantages: mean-centered, normalized by the (population)
// standard deviation plus a floor. A constant group maps to exact zeros.
inline std::vector<double> group_advantages(const std::vector<double>& rewards, double epsilon,
                                            bool use_sample_std = false) {
  const std::size_t k = rewards.size();
  if (k < 2) throw ContractError("group_advantages: need at least 2 rewards");
  const auto [lo, hi] = std::minmax_element(rewards.begin(), rewards.end());
  if (*lo == *hi) return std::vector<double>(k, 0.0);
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(k);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(use_sample_std ? k - 1 : k);
  const double denom = std::sqrt(var) + epsilon;
  std::vector<double> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = (rewards[i] - mean) / denom;
  return out;
}

struct TrainingGroup {
  std::string prompt_id;
  std::vector<std::size_t> responses;
  std::vector<double> rewards;
  std::vector<double> advantages;
};

// Score-function update with the group baseline: for the surrogate
// J = sum_i a_i * log pi(y_i), the exact gradient on logit j is
// sum_i a_i * (1[y_i = j] - pi_j). Probabilities are taken at the policy
// state seen when each group is applied.
inline void policy_update(ToyPolicy& policy, const std::vector<TrainingGroup>& groups,
                          double learning_rate) {
  for (const TrainingGroup& g : groups) {
    if (g.responses.size() != g.advantages.size()) {
      throw ContractError("policy_update: group size mismatch for " + g.prompt_id);
    }
    const std::vector<double> p = policy.probabilities(g.prompt_id);
    std::vector<double> delta(p.size(), 0.0);
    double advantage_total = 0.0;
    for (std::size_t i = 0; i < g.responses.size(); ++i) {
      const std::size_t y = g.responses[i];
      if (y >= p.size()) throw ContractError("policy_update: response index out of range");
      delta[y] += learning_rate * g.advantages[i];
      advantage_total += g.advantages[i];
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      delta[j] -= learning_rate * advantage_total * p[j];
    }
    policy.nudge(g.prompt_id, delta);
  }
}

struct SimConfig {
  int k = 8;
  int steps = 300;
  double learning_rate = 0.1;
  int batch_prompts = 0;  // <= 0 trains on every prompt each step
  std::uint64_t seed = 0;
  double epsilon = 1e-8;
  bool use_sample_std = false;
  double init_logit_scale = 0.5;

  void validate() const {
    if (k < 2) throw ValidationError("sim: k must be >= 2");
    if (steps < 0) throw ValidationError("sim: steps must be >= 0");
    if (!(learning_rate > 0.0)) throw ValidationError("sim: learning_rate must be > 0");
    if (epsilon < 0.0) throw ValidationError("sim: epsilon must be >= 0");
    if (init_logit_scale < 0.0) throw ValidationError("sim: init_logit_scale must be >= 0");
  }
};

inline SimConfig sim_config_from_json(const json& j) {
  SimConfig c;
  c.k = j.value("k", c.k);
  c.steps = j.value("steps", c.steps);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_prompts = j.value("batch_prompts", c.batch_prompts);
  c.seed = j.value("seed", c.seed);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.use_sample_std = j.value("use_sample_std", c.use_sample_std);
  c.init_logit_scale = j.value("init_logit_scale", c.init_logit_scale);
  c.validate();
  return c;
}

struct TrainingLog {
  std::vector<json> entries;
  json policy_snapshot;
};

// Seeded initialization; a small random spread keeps the initial argmax
// seed-dependent so null-update runs are distinguishable from converged ones.
inline ToyPolicy init_policy(const std::vector<PromptCase>& cases, std::uint64_t seed,
                             double scale) {
  ToyPolicy policy;
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL);
  for (const PromptCase& c : cases) {
    std::vector<double> logits(c.pool.size());
    for (double& l : logits) l = (2.0 * detail::uniform01(rng) - 1.0) * scale;
    policy.add_prompt(c.prompt_id, std::move(logits));
  }
  return policy;
}

// The full loop: sample a group per prompt, score it, normalize within the
// group, update. Judge failures follow the given policy; training defaults
// to abort because silently neutral rewards would bias the run.
inline TrainingLog run_training(JudgeGateway& gateway, const SimConfig& config,
                                const std::vector<PromptCase>& cases,
                                const MethodConfig& method,
                                FailurePolicy failure_policy = FailurePolicy::Abort) {
  config.validate();
  method.validate();
  for (const PromptCase& c : cases) {
    if (c.pool.empty()) throw ValidationError("case " + c.prompt_id + ": pool is empty");
  }

  ToyPolicy policy = init_policy(cases, config.seed, config.init_logit_scale);
  std::mt19937_64 rng(config.seed ^ 0x5DEECE66DULL);
  TrainingLog log;

  const std::size_t n = cases.size();
  const std::size_t batch =
      config.batch_prompts <= 0 ? n : std::min<std::size_t>(config.batch_prompts, n);

  for (int step = 1; step <= config.steps; ++step) {
    std::vector<std::size_t> selected;
    for (std::size_t b = 0; b < batch; ++b) {
      selected.push_back((static_cast<std::size_t>(step - 1) * batch + b) % n);
    }

    std::vector<TrainingGroup> groups;
    std::vector<json> pending;
    for (std::size_t ci : selected) {
      const PromptCase& c = cases[ci];
      TrainingGroup g;
      g.prompt_id = c.prompt_id;
      g.responses = sample_group(policy, c.prompt_id, config.k, rng);
      bool failed = false;
      for (std::size_t idx : g.responses) {
        ScoringItem item;
        item.prompt_id = c.prompt_id;
        item.prompt = c.prompt;
        item.response = c.pool[idx];
        item.rubric = c.rubric;
        item.reference = c.reference;
        item.ground_truth = c.ground_truth;
        try {
          g.rewards.push_back(score(gateway, item, method).score);
        } catch (const std::exception& e) {
          if (failure_policy == FailurePolicy::Abort) {
            throw JudgeFailure("training step " + std::to_string(step) + ", prompt " +
                               c.prompt_id + ": " + e.what());
          }
          failed = true;
          break;
        }
      }
      if (failed) continue;  // drop policy: skip this prompt's group this step
      g.advantages = group_advantages(g.rewards, config.epsilon, config.use_sample_std);

      double mean_reward = 0.0;
      for (double r : g.rewards) mean_reward += r;
      mean_reward /= static_cast<double>(g.rewards.size());
      double advantage_sum = 0.0;
      for (double a : g.advantages) advantage_sum += a;

      pending.push_back(json{{"step", step},
                             {"prompt_id", c.prompt_id},
                             {"mean_reward", mean_reward},
                             {"advantage_sum", advantage_sum},
                             {"method", to_string(method.method)}});
      groups.push_back(std::move(g));
    }

    policy_update(policy, groups, config.learning_rate);
    for (std::size_t gi = 0; gi < pending.size(); ++gi) {
      pending[gi]["argmax_index"] = policy.argmax(groups[gi].prompt_id);
      log.entries.push_back(std::move(pending[gi]));
    }
  }

  log.policy_snapshot = policy.snapshot();
  return log;
}

}  // namespace rar
