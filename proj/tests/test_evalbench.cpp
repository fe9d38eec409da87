#include <catch2/catch_amalgamated.hpp>

#include <memory>

#include "rar/evalbench.hpp"

using namespace rar;

namespace {

std::unique_ptr<JudgeGateway> gateway_with(std::shared_ptr<JudgeTransport> transport,
                                           BackendKind kind, int max_attempts = 3) {
  GatewayOptions options;
  options.backoff_base_ms = 0;
  auto gw = std::make_unique<JudgeGateway>(options);
  JudgeBackendSpec spec;
  spec.name = "judge";
  spec.kind = kind;
  spec.max_attempts = max_attempts;
  gw->register_backend(spec, std::move(transport));
  return gw;
}

McqInstance capital_instance() {
  McqInstance m;
  m.id = "q1";
  m.question = "What is the capital of France?";
  m.choices = {"Lyon", "Paris", "Marseille", "Nice"};
  m.correct_label = 'B';
  m.correct_text = "Paris";
  m.validate();
  return m;
}

PreferencePair make_pair(int i, const std::string& chosen_kw) {
  PreferencePair p;
  p.id = "pair" + std::to_string(i);
  p.prompt = "Question " + std::to_string(i) + "?";
  p.chosen = "Answer mentioning " + chosen_kw + " fully.";
  p.rejected = "Answer number " + std::to_string(i) + " missing the key fact.";
  return p;
}

}  // namespace

TEST_CASE("permute_choices") {
  const McqInstance base = capital_instance();

  SECTION("identity permutation changes nothing") {
    PermutedMcq p = permute_with(base, {0, 1, 2, 3});
    CHECK(p.instance.choices == base.choices);
    CHECK(p.instance.correct_label == 'B');
    CHECK(p.label_map.identity());
  }
  SECTION("correct text survives any permutation") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      PermutedMcq p = permute_choices(base, seed);
      CHECK(p.instance.correct_text == "Paris");
      const std::size_t idx = static_cast<std::size_t>(p.instance.correct_label - 'A');
      CHECK(p.instance.choices[idx] == "Paris");
      CHECK(p.label_map.map('B') == p.instance.correct_label);
    }
  }
  SECTION("applying the recovery permutation restores the original") {
    PermutedMcq p = permute_choices(base, 1234);
    // Original choice t now sits at slot map(t); reading slots in that order
    // undoes the shuffle.
    std::array<std::size_t, 4> back{};
    for (std::size_t t = 0; t < 4; ++t) {
      back[t] = static_cast<std::size_t>(p.label_map.map(static_cast<char>('A' + t)) - 'A');
    }
    PermutedMcq q = permute_with(p.instance, back);
    CHECK(q.instance.choices == base.choices);
    CHECK(q.instance.correct_label == base.correct_label);
    // And the inverse label map undoes the forward one.
    const LabelMap inverse = p.label_map.inverse();
    for (char label : {'A', 'B', 'C', 'D'}) {
      CHECK(inverse.map(p.label_map.map(label)) == label);
    }
  }
  SECTION("deterministic under seed") {
    PermutedMcq a = permute_choices(base, 77);
    PermutedMcq b = permute_choices(base, 77);
    CHECK(a.instance.choices == b.instance.choices);
    CHECK(a.instance.correct_label == b.instance.correct_label);
  }
}

TEST_CASE("extract_boxed") {
  CHECK(extract_boxed("After reasoning, \\boxed{A}") == 'A');
  CHECK(extract_boxed("\\boxed{ b }") == 'B');
  CHECK(extract_boxed("the answer is A") == std::nullopt);
  CHECK(extract_boxed("\\boxed{C} first, later \\boxed{D}") == 'D');
  CHECK(extract_boxed("\\boxed{(C)}") == 'C');
  CHECK(extract_boxed("\\boxed{B.}") == 'B');
  CHECK(extract_boxed("\\boxed{E}") == std::nullopt);
  CHECK(extract_boxed("\\boxed{AB}") == std::nullopt);
  CHECK(extract_boxed("\\boxed{}") == std::nullopt);
  CHECK(extract_boxed("\\boxed{A") == std::nullopt);  // unterminated
  CHECK(extract_boxed("") == std::nullopt);

  SECTION("wrap-identity property for all labels") {
    for (char label : {'A', 'B', 'C', 'D'}) {
      const std::string text =
          "Some reasoning first. \\boxed{" + std::string(1, label) + "} trailing words.";
      CHECK(extract_boxed(text) == label);
    }
  }
}

TEST_CASE("verify_fallback") {
  SECTION("passthrough yes and no") {
    auto gw = gateway_with(std::make_shared<ScriptedTransport>(std::vector<std::string>{"Yes"}),
                           BackendKind::MockScripted);
    CHECK(verify_fallback(*gw, "judge", "resp-a", 'B', "Paris"));
    auto gw2 = gateway_with(std::make_shared<ScriptedTransport>(std::vector<std::string>{"No"}),
                            BackendKind::MockScripted);
    CHECK_FALSE(verify_fallback(*gw2, "judge", "resp-b", 'B', "Paris"));
  }
  SECTION("loose wording is retried until strict") {
    auto gw = gateway_with(
        std::make_shared<ScriptedTransport>(std::vector<std::string>{"Yes.", "Yes"}),
        BackendKind::MockScripted);
    CHECK(verify_fallback(*gw, "judge", "resp-c", 'B', "Paris"));
  }
  SECTION("exhausted retries count as incorrect") {
    auto gw = gateway_with(std::make_shared<ScriptedTransport>(std::vector<std::string>{
                               "maybe", "dunno", "perhaps"}),
                           BackendKind::MockScripted, 3);
    CHECK_FALSE(verify_fallback(*gw, "judge", "resp-d", 'B', "Paris"));
  }
  SECTION("keyword mock checks letter or text") {
    auto gw = gateway_with(std::make_shared<KeywordTransport>(), BackendKind::MockKeyword);
    CHECK(verify_fallback(*gw, "judge", "I would pick Paris for this.", 'B', "Paris"));
    CHECK(verify_fallback(*gw, "judge", "The answer is (B).", 'B', "Paris"));
    CHECK_FALSE(verify_fallback(*gw, "judge", "I would pick Lyon.", 'B', "Paris"));
    CHECK_FALSE(verify_fallback(*gw, "judge", "Brilliant but wrong.", 'B', "Paris"));
  }
}

TEST_CASE("mcq_accuracy") {
  const McqInstance m = capital_instance();
  SECTION("perfect runs") {
    auto acc = mcq_accuracy({m}, {{"\\boxed{B}"}, {"\\boxed{B}"}, {"\\boxed{B}"}, {"\\boxed{B}"}});
    CHECK(acc.mean == 1.0);
    CHECK(acc.stddev == 0.0);
  }
  SECTION("alternating runs give 0.5 +/- 0.5") {
    auto acc = mcq_accuracy({m}, {{"\\boxed{B}"}, {"\\boxed{A}"}, {"\\boxed{B}"}, {"\\boxed{A}"}});
    REQUIRE(acc.per_run == std::vector<double>{1.0, 0.0, 1.0, 0.0});
    CHECK(acc.mean == Catch::Approx(0.5).margin(1e-12));
    CHECK(acc.stddev == Catch::Approx(0.5).margin(1e-12));
  }
  SECTION("count mismatch is an error") {
    CHECK_THROWS_AS(mcq_accuracy({m}, {{}}), ContractError);
  }
  SECTION("permutation invariance with remapped responses") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      PermutedMcq p = permute_choices(m, seed);
      const std::string original_response = "Thus \\boxed{B}.";
      const std::string remapped =
          "Thus \\boxed{" + std::string(1, p.label_map.map('B')) + "}.";
      CHECK(response_correct(m, original_response) ==
            response_correct(p.instance, remapped));
    }
  }
}

TEST_CASE("perturbation section parsing") {
  const std::string good =
      "[reasoning]:\nVague it up.\n\n[perturbed_completion]:\nRest a bit.\n\n"
      "[chunks_added]:\n- vague sentence\n\n[chunks_removed]:\n- ice timing\n- compression";
  auto sections = parse_perturbation_sections(good);
  CHECK(sections.reasoning == "Vague it up.");
  CHECK(sections.perturbed_completion == "Rest a bit.");
  CHECK(parse_chunk_list(sections.chunks_added) == std::vector<std::string>{"vague sentence"});
  CHECK(parse_chunk_list(sections.chunks_removed) ==
        std::vector<std::string>{"ice timing", "compression"});

  SECTION("headers are case-insensitive and may carry inline content") {
    auto s = parse_perturbation_sections(
        "[Reasoning]: inline text\n[PERTURBED_COMPLETION]: worse\n"
        "[chunks_added]: (none)\n[chunks_removed]: (none)");
    CHECK(s.reasoning == "inline text");
    CHECK(s.perturbed_completion == "worse");
    CHECK(parse_chunk_list(s.chunks_added).empty());
  }
  SECTION("missing sections name the header") {
    try {
      parse_perturbation_sections("[reasoning]: x\n[perturbed_completion]: y\n[chunks_added]: z");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("[chunks_removed]:") != std::string::npos);
    }
  }
}

TEST_CASE("generate_pair") {
  const std::string ideal = "Rest, ice, compression, elevation.";
  SECTION("well-formed output becomes a pair") {
    const std::string scripted =
        "[reasoning]:\nRemove specifics.\n\n[perturbed_completion]:\nJust rest somehow.\n\n"
        "[chunks_added]:\n- somehow\n\n[chunks_removed]:\n- ice\n- compression";
    auto gw = gateway_with(std::make_shared<ScriptedTransport>(std::vector<std::string>{scripted}),
                           BackendKind::MockScripted);
    PreferencePair pair = generate_pair(*gw, "judge", "h1", "Sprain care?", ideal);
    CHECK(pair.chosen == ideal);
    CHECK(pair.rejected == "Just rest somehow.");
    CHECK(pair.meta.chunks_removed.size() == 2);
    CHECK(pair.chosen != pair.rejected);
  }
  SECTION("identical perturbation is rejected then retried") {
    const std::string degenerate =
        "[reasoning]:\nnothing\n\n[perturbed_completion]:\n" + ideal +
        "\n\n[chunks_added]:\n(none)\n\n[chunks_removed]:\n(none)";
    const std::string fixed =
        "[reasoning]:\nworse now\n\n[perturbed_completion]:\nRest only.\n\n"
        "[chunks_added]:\n(none)\n\n[chunks_removed]:\n- ice";
    auto gw = gateway_with(
        std::make_shared<ScriptedTransport>(std::vector<std::string>{degenerate, fixed}),
        BackendKind::MockScripted);
    PreferencePair pair = generate_pair(*gw, "judge", "h2", "Sprain care?", ideal);
    CHECK(pair.rejected == "Rest only.");
  }
  SECTION("keyword mock produces a deterministic degradation") {
    auto gw = gateway_with(std::make_shared<KeywordTransport>(), BackendKind::MockKeyword);
    PreferencePair a = generate_pair(*gw, "judge", "h3", "Sprain care?", ideal);
    CHECK(a.chosen == ideal);
    CHECK(a.rejected != ideal);
    CHECK_FALSE(a.meta.chunks_added.empty());
  }
  SECTION("empty ideal is rejected") {
    auto gw = gateway_with(std::make_shared<KeywordTransport>(), BackendKind::MockKeyword);
    CHECK_THROWS_AS(generate_pair(*gw, "judge", "h4", "P", ""), ValidationError);
  }
}

TEST_CASE("alignment_accuracy with scripted ratings") {
  std::vector<PreferencePair> pairs{make_pair(0, "alpha"), make_pair(1, "beta")};
  AlignmentOptions options;
  options.max_in_flight = 1;  // keep scripted responses aligned with request order

  SECTION("strictly higher chosen rating counts as correct") {
    auto gw = gateway_with(std::make_shared<ScriptedTransport>(std::vector<std::string>{
                               "{\"rating\": 8}", "{\"rating\": 5}",   // pair 0: correct
                               "{\"rating\": 6}", "{\"rating\": 6}"}), // pair 1: tie
                           BackendKind::MockScripted);
    AlignmentReport report =
        alignment_accuracy(*gw, pairs, "judge", RewardMethod::SimpleLikert, {}, options);
    CHECK(report.n_pairs == 2);
    CHECK(report.n_correct == 1);
    CHECK(report.n_ties == 1);
    CHECK(report.n_incorrect == 0);
    CHECK(report.accuracy == Catch::Approx(0.5).margin(1e-12));
  }
  SECTION("half-credit tie policy") {
    auto gw = gateway_with(std::make_shared<ScriptedTransport>(std::vector<std::string>{
                               "{\"rating\": 8}", "{\"rating\": 5}",
                               "{\"rating\": 6}", "{\"rating\": 6}"}),
                           BackendKind::MockScripted);
    AlignmentOptions half = options;
    half.ties_half_credit = true;
    AlignmentReport report =
        alignment_accuracy(*gw, pairs, "judge", RewardMethod::SimpleLikert, {}, half);
    CHECK(report.accuracy == Catch::Approx(0.75).margin(1e-12));
  }
  SECTION("judge failures are dropped and recorded") {
    auto gw = gateway_with(std::make_shared<ScriptedTransport>(std::vector<std::string>{
                               "{\"rating\": 8}", "junk",
                               "{\"rating\": 7}", "{\"rating\": 4}"}),
                           BackendKind::MockScripted, 1);
    AlignmentReport report =
        alignment_accuracy(*gw, pairs, "judge", RewardMethod::SimpleLikert, {}, options);
    CHECK(report.n_dropped == 1);
    CHECK(report.n_correct == 1);
    CHECK(report.n_correct + report.n_ties + report.n_incorrect + report.n_dropped ==
          report.n_pairs);
  }
  SECTION("rar-implicit requires rubrics") {
    auto gw = gateway_with(std::make_shared<KeywordTransport>(), BackendKind::MockKeyword);
    CHECK_THROWS_AS(
        alignment_accuracy(*gw, pairs, "judge", RewardMethod::RaRImplicit, {}, options),
        ContractError);
  }
}

TEST_CASE("rubric-aware and rubric-free mocks reproduce the benchmark ordering") {
  // Chosen responses satisfy their rubric keyword; rejected ones do not.
  std::vector<PreferencePair> pairs;
  std::vector<Rubric> rubrics;
  for (int i = 0; i < 20; ++i) {
    const std::string kw = "fact" + std::to_string(i);
    pairs.push_back(make_pair(i, kw));
    Rubric r;
    r.prompt_id = pairs.back().id;
    r.items.push_back({"Key Fact", "Essential Criteria: Mentions \"" + kw + "\".",
                       Category::Essential, std::nullopt, 1.0});
    rubrics.push_back(std::move(r));
  }

  auto gw = gateway_with(std::make_shared<KeywordTransport>(), BackendKind::MockKeyword);
  AlignmentReport with_rubrics =
      alignment_accuracy(*gw, pairs, "judge", RewardMethod::RaRImplicit, rubrics);
  AlignmentReport without =
      alignment_accuracy(*gw, pairs, "judge", RewardMethod::SimpleLikert);
  CHECK(with_rubrics.accuracy == 1.0);
  CHECK(without.accuracy == 0.0);
  CHECK(without.n_ties == pairs.size());

  SECTION("pair swap flips accuracy when there are no ties") {
    std::vector<PreferencePair> swapped = pairs;
    for (PreferencePair& p : swapped) std::swap(p.chosen, p.rejected);
    AlignmentReport flipped =
        alignment_accuracy(*gw, swapped, "judge", RewardMethod::RaRImplicit, rubrics);
    CHECK(with_rubrics.n_ties == 0);
    CHECK(flipped.accuracy == Catch::Approx(1.0 - with_rubrics.accuracy).margin(1e-12));
  }
}
