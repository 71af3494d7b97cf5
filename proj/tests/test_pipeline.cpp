#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "march/pipeline.hpp"

using namespace march;

namespace {

NumericAnswer num(const std::string& s) { return *canonicalize_number(s).answer; }

RagSample clinical_sample(std::string id = "case1") {
    RagSample s;
    s.id = std::move(id);
    s.query = "Describe the typical clinical presentation.";
    s.documents = {make_document(std::nullopt, "Hallucinations occurred in 52% of patients."),
                   make_document(std::nullopt, "Memory impairment was reported in 59%."),
                   make_document(std::nullopt, "Roughly 50% showed sleep disturbance.")};
    return s;
}

const char* kSolverText =
    "Patients typically present with hallucinations (52%), memory impairment (59%), "
    "sleep disturbance (50%), gait problems (89%), and tremor (78%).";

const char* kProposerText =
    "- Question: What share of patients had hallucinations? [Answer: 52]\n"
    "- Question: What share of patients had memory impairment? [Answer: 59]\n"
    "- Question: What share of patients had sleep disturbance? [Answer: 50]\n"
    "- Question: What share of patients had gait problems? [Answer: 89]\n"
    "- Question: What share of patients had tremor? [Answer: 78]\n";

const char* kCheckerText =
    "1. Evidence: Document-1 reports hallucinations in 52% of patients.\n"
    "Answer: 52\n"
    "\n"
    "2. Evidence: Document-2 reports memory impairment in 59%.\n"
    "Answer: 59\n"
    "\n"
    "3. Evidence: Document-3 reports sleep disturbance in roughly half.\n"
    "Answer: 50 \n"
    "\n"
    "4. Evidence: gait problems appear in 89% of cases.\n"
    "Answer: 89\n"
    "\n"
    "5. Evidence: tremor appears in 78% of cases.\n"
    "Answer: 78\n";

// Programs a full solve/propose/check flow for one sample against a codec.
void program_rollout(ScriptedBackend& backend, const RoleCodec& codec, const RagSample& sample,
                     const std::string& solver_text, const std::string& proposer_text,
                     const std::vector<std::string>& checker_texts) {
    backend.program(codec.solver_prompt(sample), solver_text);
    backend.program(codec.proposer_prompt(solver_text), proposer_text);
    const auto claims = codec.parse_claims(proposer_text).claims;
    if (!claims.empty()) {
        std::vector<std::string> questions;
        for (const auto& c : claims) questions.push_back(c.question);
        backend.program_sequence(codec.checker_prompt(questions, sample), checker_texts);
    }
}

}  // namespace

TEST_CASE("consensus_from_votes strict majority") {
    SUBCASE("two of three agree") {
        const auto c = consensus_from_votes(1, {num("50"), num("50"), num("49")}, 3);
        REQUIRE(std::holds_alternative<NumericAnswer>(c.consensus));
        CHECK(std::get<NumericAnswer>(c.consensus).canonical == "50");
    }
    SUBCASE("one of two is not a majority") {
        const auto c = consensus_from_votes(1, {num("50"), num("49")}, 2);
        CHECK(std::holds_alternative<NoConsensus>(c.consensus));
    }
    SUBCASE("three-way split") {
        const auto c = consensus_from_votes(1, {num("1"), num("2"), num("3")}, 3);
        CHECK(std::holds_alternative<NoConsensus>(c.consensus));
    }
    SUBCASE("cannot-answer can win the vote") {
        const auto c = consensus_from_votes(2, {CannotAnswer{}, CannotAnswer{}, num("50")}, 3);
        CHECK(std::holds_alternative<CannotAnswer>(c.consensus));
    }
    SUBCASE("absent answers count toward m but never toward consensus") {
        // only one vote arrived out of three audit samples
        const auto c = consensus_from_votes(1, {num("50")}, 3);
        CHECK(std::holds_alternative<NoConsensus>(c.consensus));
        // two identical votes out of three still clear the bar
        const auto c2 = consensus_from_votes(1, {num("50"), num("50")}, 3);
        CHECK(std::holds_alternative<NumericAnswer>(c2.consensus));
    }
}

TEST_CASE("scripted end-to-end rollout with all claims verified") {
    TextCodec codec;
    ScriptedBackend backend;
    const auto sample = clinical_sample();
    program_rollout(backend, codec, sample, kSolverText, kProposerText, {kCheckerText});

    PipelineConfig config;
    const auto record = run_rollout(sample, backend, codec, config);

    CHECK(record.sample_id == "case1");
    REQUIRE(record.claims.size() == 5);
    CHECK(record.claims[0].asserted_answer.canonical == "52");
    CHECK(record.claims[4].asserted_answer.canonical == "78");
    REQUIRE(record.consensus.size() == 5);
    for (const auto& c : record.consensus) {
        CHECK(c.n_audit_samples == 3);
        CHECK(std::holds_alternative<NumericAnswer>(c.consensus));
    }
    CHECK(record.reward.n_total == 5);
    CHECK(record.reward.n_err == 0);
    CHECK(record.reward.value == 0.0);
    REQUIRE(record.audit_samples.size() == 3);

    // both trained roles carry the same terminal reward
    REQUIRE(record.solver.terminal_reward);
    REQUIRE(record.checker.terminal_reward);
    CHECK(*record.solver.terminal_reward == *record.checker.terminal_reward);
}

TEST_CASE("audit disagreement flows through consensus into the reward") {
    TextCodec codec;
    ScriptedBackend backend;
    const auto sample = clinical_sample();

    // Three audit samples; question 1 splits three ways, the rest agree.
    std::string dissent1 = kCheckerText;
    dissent1.replace(dissent1.find("Answer: 52"), 10, "Answer: 51");
    std::string dissent2 = kCheckerText;
    dissent2.replace(dissent2.find("Answer: 52"), 10, "Answer: 53");
    program_rollout(backend, codec, sample, kSolverText, kProposerText,
                    {kCheckerText, dissent1, dissent2});

    PipelineConfig config;
    const auto record = run_rollout(sample, backend, codec, config);
    REQUIRE(record.consensus.size() == 5);
    CHECK(std::holds_alternative<NoConsensus>(record.consensus[0].consensus));
    CHECK(std::holds_alternative<NumericAnswer>(record.consensus[1].consensus));
    CHECK_FALSE(record.reward.per_claim[0]);
    CHECK(record.reward.value == -1.0);
    CHECK(record.reward.n_err == 1);
}

TEST_CASE("cannot-answer consensus is a mismatch") {
    TextCodec codec;
    ScriptedBackend backend;
    const auto sample = clinical_sample();

    std::string cannot = kCheckerText;
    cannot.replace(cannot.find("Answer: 89"), 10, "Answer: Cannot answer");
    program_rollout(backend, codec, sample, kSolverText, kProposerText, {cannot});

    const auto record = run_rollout(sample, backend, codec, PipelineConfig{});
    CHECK(std::holds_alternative<CannotAnswer>(record.consensus[3].consensus));
    CHECK_FALSE(record.reward.per_claim[3]);
    CHECK(record.reward.value == -1.0);
}

TEST_CASE("zero claims skip the checker and apply the zero-claim policy") {
    TextCodec codec;
    ScriptedBackend backend;
    const auto sample = clinical_sample();
    program_rollout(backend, codec, sample, kSolverText, "No factual claims to extract.", {});

    const auto record = run_rollout(sample, backend, codec, PipelineConfig{});
    CHECK(record.claims.empty());
    CHECK(record.consensus.empty());
    CHECK(record.checker.text.empty());
    CHECK(record.reward.value == 0.0);  // vacuous success by default

    PipelineConfig strict;
    strict.reward.n0_policy = ZeroClaimPolicy::Failure;
    CHECK(run_rollout(sample, backend, codec, strict).reward.value == -1.0);
}

TEST_CASE("checker prompt is blind to the solver text") {
    TextCodec codec;
    ScriptedBackend backend;
    const auto sample = clinical_sample();

    const std::string other_solver =
        "A completely different narrative: every symptom occurred in 99% of patients.";
    program_rollout(backend, codec, sample, kSolverText, kProposerText, {kCheckerText});
    backend.program(codec.proposer_prompt(other_solver), kProposerText);

    PipelineConfig config;
    auto alt = sample;
    const auto a = run_rollout(sample, backend, codec, config);
    // rerun with a different solver text but identical proposed questions
    backend.program(codec.solver_prompt(sample), other_solver);
    const auto b = run_rollout(sample, backend, codec, config);

    CHECK(a.solver.text != b.solver.text);
    CHECK(a.checker.prompt_fingerprint == b.checker.prompt_fingerprint);
    CHECK(a.checker.text == b.checker.text);
}

TEST_CASE("run_checker rejects an empty claim list") {
    TextCodec codec;
    ScriptedBackend backend;
    CHECK_THROWS_AS(run_checker({}, clinical_sample(), backend, codec, PipelineConfig{}),
                    StageError);
}

TEST_CASE("stage errors carry the stage and sample id") {
    TextCodec codec;
    ScriptedBackend backend;  // nothing programmed
    try {
        run_rollout(clinical_sample("s9"), backend, codec, PipelineConfig{});
        FAIL("expected StageError");
    } catch (const StageError& e) {
        CHECK(e.stage == Stage::solve);
        CHECK(e.sample_id == "s9");
        CHECK(std::string(e.what()).find("[solve]") != std::string::npos);
    }
}

TEST_CASE("batch isolates per-sample failures") {
    TextCodec codec;
    ScriptedBackend backend;
    const auto good = clinical_sample("good");
    auto bad = clinical_sample("bad");
    bad.query += " (unprogrammed variant)";
    program_rollout(backend, codec, good, kSolverText, kProposerText, {kCheckerText});
    // 'bad' renders a different solver prompt, which is not programmed.

    const auto result = run_batch_serial({good, bad}, backend, codec, PipelineConfig{});
    REQUIRE(result.records.size() == 1);
    CHECK(result.records[0].sample_id == "good");
    REQUIRE(result.failures.size() == 1);
    CHECK(result.failures[0].first == "bad");
}

TEST_CASE("parallel batch matches the serial reference byte for byte") {
    TextCodec codec;
    ScriptedBackend backend;
    std::vector<RagSample> samples;
    PipelineConfig config;
    for (int i = 0; i < 12; ++i) {
        auto s = clinical_sample("s" + std::to_string(i));
        s.query += " variant " + std::to_string(i);
        const std::string solver_text = std::string(kSolverText) + " v" + std::to_string(i);
        program_rollout(backend, codec, s, solver_text, kProposerText, {kCheckerText});
        samples.push_back(std::move(s));
    }

    const auto serial = run_batch_serial(samples, backend, codec, config);
    const auto parallel = run_batch(samples, backend, codec, config, 4);
    REQUIRE(serial.records.size() == samples.size());
    REQUIRE(parallel.records.size() == serial.records.size());
    CHECK(parallel.failures.empty());
    for (std::size_t i = 0; i < serial.records.size(); ++i) {
        CHECK(rollout_record_to_json(serial.records[i], config) ==
              rollout_record_to_json(parallel.records[i], config));
    }
}

TEST_CASE("rollout records serialize to parseable json lines") {
    TextCodec codec;
    ScriptedBackend backend;
    const auto sample = clinical_sample();
    program_rollout(backend, codec, sample, kSolverText, kProposerText, {kCheckerText});

    PipelineConfig config;
    const auto result = run_batch_serial({sample}, backend, codec, config);
    const std::string path = "/tmp/march_pipeline_records.jsonl";
    std::remove(path.c_str());
    write_rollout_records(result, config, path);
    write_rollout_records(result, config, path);  // append mode

    std::ifstream in(path);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        ++lines;
        const auto j = nlohmann::json::parse(line);
        CHECK(j.at("sample_id") == "case1");
        CHECK(j.at("claims").size() == 5);
        CHECK(j.at("reward").at("value") == 0.0);
        CHECK(j.at("consensus").size() == 5);
        CHECK(j.at("solver").at("terminal_reward") == 0.0);
    }
    CHECK(lines == 2);
}
