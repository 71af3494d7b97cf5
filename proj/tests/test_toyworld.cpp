#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "march/toyworld.hpp"

using namespace march;
using namespace march::toy;

namespace {

Difficulty easy() {
    Difficulty d;
    d.n_facts = 3;
    d.n_distractors = 2;
    d.max_value = 999;
    return d;
}

std::vector<uint8_t> all_allowed() { return std::vector<uint8_t>(Vocab::kSize, 1); }

}  // namespace

TEST_CASE("vocab names round-trip through id_of") {
    for (int id = 0; id < Vocab::kSize; ++id) {
        const auto& name = Vocab::name(id);
        CHECK_FALSE(name.empty());
        const auto back = Vocab::id_of(name);
        REQUIRE(back);
        CHECK(*back == id);
    }
    CHECK_FALSE(Vocab::id_of("bogus").has_value());
    CHECK(Vocab::is_digit(0));
    CHECK(Vocab::is_digit(9));
    CHECK_FALSE(Vocab::is_digit(10));
    CHECK(Vocab::is_slot(Vocab::slot_token(0)));
    CHECK(Vocab::is_slot(Vocab::slot_token(15)));
    CHECK(Vocab::slot_index(Vocab::slot_token(7)) == 7);
}

TEST_CASE("render and parse token strings round-trip") {
    std::mt19937_64 rng(13);
    for (int t = 0; t < 100; ++t) {
        std::vector<int> tokens;
        const int n = 1 + static_cast<int>(rng() % 20);
        for (int i = 0; i < n; ++i) tokens.push_back(static_cast<int>(rng() % Vocab::kSize));
        CHECK(parse_tokens(render_tokens(tokens)) == tokens);
    }
    CHECK_THROWS(parse_tokens("not-a-token"));
}

TEST_CASE("digits_of produces decimal expansions") {
    CHECK(digits_of(0) == std::vector<int>{0});
    CHECK(digits_of(7) == std::vector<int>{7});
    CHECK(digits_of(42) == std::vector<int>{4, 2});
    CHECK(digits_of(905) == std::vector<int>{9, 0, 5});
}

TEST_CASE("mix_seed separates streams") {
    CHECK(mix_seed(1, 2) != mix_seed(2, 1));
    CHECK(mix_seed(0, 0) != 0);
    std::set<uint64_t> seen;
    for (uint64_t a = 0; a < 50; ++a) {
        for (uint64_t b = 0; b < 50; ++b) seen.insert(mix_seed(a, b));
    }
    CHECK(seen.size() == 2500);  // no collisions on a small grid
}

TEST_CASE("sample_task is deterministic and respects difficulty") {
    const auto d = easy();
    const auto a = sample_task(7, d);
    const auto b = sample_task(7, d);
    CHECK(a.facts == b.facts);
    CHECK(a.distractors == b.distractors);
    CHECK(a.query_slot == b.query_slot);
    CHECK(a.serialized_docs == b.serialized_docs);
    CHECK(sample_task(8, d).serialized_docs != a.serialized_docs);

    CHECK(a.facts.size() == 3);
    CHECK(a.distractors.size() == 2);
    CHECK(a.facts.count(a.query_slot) == 1);
    for (const auto& [slot, value] : a.facts) {
        CHECK(slot >= 0);
        CHECK(slot < Vocab::kNumSlots);
        CHECK(value >= 0);
        CHECK(value <= d.max_value);
    }
}

TEST_CASE("exact_oracle: facts dominate distractors, absent slots are nullopt") {
    ToyTask task;
    task.facts = {{3, 42}, {5, 7}};
    task.distractors = {{3, 999}, {9, 1}};
    CHECK(exact_oracle(task, 3) == 42);
    CHECK(exact_oracle(task, 5) == 7);
    // distractor-only slots have no true value
    CHECK_FALSE(exact_oracle(task, 9).has_value());
    CHECK_FALSE(exact_oracle(task, 0).has_value());
}

TEST_CASE("toy_task_to_sample mirrors the serialized documents") {
    const auto task = sample_task(7, easy());
    const auto sample = toy_task_to_sample(task, "toy-7");
    CHECK(sample.id == "toy-7");
    CHECK(sample.query == Vocab::name(Vocab::slot_token(task.query_slot)));
    CHECK(sample.documents.size() == task.facts.size() + task.distractors.size());
    // every document block re-parses as <DOC> slot digit+
    for (const auto& doc : sample.documents) {
        const auto tokens = parse_tokens(doc.body);
        REQUIRE(tokens.size() >= 3);
        CHECK(tokens[0] == Vocab::kDoc);
        CHECK(Vocab::is_slot(tokens[1]));
        for (std::size_t i = 2; i < tokens.size(); ++i) CHECK(Vocab::is_digit(tokens[i]));
    }
    CHECK(sample.gold_answer == std::to_string(task.facts.at(task.query_slot)));
}

TEST_CASE("micro claims format/parse round-trip") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<ClaimQA> claims;
        const int n = static_cast<int>(rng() % 6);
        for (int i = 0; i < n; ++i) {
            ClaimQA c;
            c.question = question_for_slot(static_cast<int>(rng() % Vocab::kNumSlots));
            c.asserted_answer =
                *canonicalize_number(std::to_string(rng() % 1000)).answer;
            claims.push_back(std::move(c));
        }
        const auto tokens = format_micro_claims(claims);
        const auto parsed = parse_micro_claims(tokens);
        CHECK(parsed.malformed_lines == 0);
        REQUIRE(parsed.claims.size() == claims.size());
        for (std::size_t i = 0; i < claims.size(); ++i) {
            CHECK(parsed.claims[i].question == claims[i].question);
            CHECK(parsed.claims[i].asserted_answer.canonical ==
                  claims[i].asserted_answer.canonical);
        }
    }
}

TEST_CASE("parse_micro_claims resynchronizes after malformed groups") {
    // good pair, then a <Q> group missing its slot, then another good pair
    std::vector<int> tokens = {Vocab::kQ,  Vocab::slot_token(1), Vocab::kA, 4, 2, Vocab::kSep,
                               Vocab::kQ,  Vocab::kA,            7,         Vocab::kSep,
                               Vocab::kQ,  Vocab::slot_token(2), Vocab::kA, 5, Vocab::kSep};
    const auto parsed = parse_micro_claims(tokens);
    REQUIRE(parsed.claims.size() == 2);
    CHECK(parsed.claims[0].question == question_for_slot(1));
    CHECK(parsed.claims[0].asserted_answer.canonical == "42");
    CHECK(parsed.claims[1].asserted_answer.canonical == "5");
    CHECK(parsed.malformed_lines >= 1);
}

TEST_CASE("parse_micro_answers maps groups to indices in order") {
    // answers: 42, <NUL>, 7
    std::vector<int> tokens = {Vocab::kA, 4, 2,        Vocab::kSep, Vocab::kA, Vocab::kNul,
                               Vocab::kSep, Vocab::kA, 7,           Vocab::kSep};
    const auto answers = parse_micro_answers(tokens, 3);
    REQUIRE(answers.size() == 3);
    CHECK(answers[0].index == 1);
    CHECK(std::get<NumericAnswer>(answers[0].verdict).canonical == "42");
    CHECK(answers[1].index == 2);
    CHECK(std::holds_alternative<CannotAnswer>(answers[1].verdict));
    CHECK(answers[2].index == 3);
    CHECK(std::get<NumericAnswer>(answers[2].verdict).canonical == "7");
}

TEST_CASE("slot_of_question and question_for_slot are inverses") {
    for (int k = 0; k < Vocab::kNumSlots; ++k) {
        CHECK(slot_of_question(question_for_slot(k)) == k);
    }
    CHECK_FALSE(slot_of_question("what is the airspeed?").has_value());
}

TEST_CASE("masked_log_probs normalizes over the allowed set") {
    std::mt19937_64 rng(31);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> logits(Vocab::kSize);
        std::vector<uint8_t> allowed(Vocab::kSize, 0);
        for (auto& l : logits) l = (static_cast<double>(rng() % 2000) - 1000) / 100.0;
        int n_allowed = 0;
        for (auto& a : allowed) {
            a = rng() % 3 == 0 ? 1 : 0;
            n_allowed += a;
        }
        if (n_allowed == 0) allowed[0] = 1;
        const double temp = 0.25 + static_cast<double>(rng() % 300) / 100.0;
        const auto lp = masked_log_probs(logits, allowed, temp);
        double total = 0.0;
        for (int i = 0; i < Vocab::kSize; ++i) {
            if (allowed[i]) {
                total += std::exp(lp[i]);
            } else {
                CHECK(lp[i] == -std::numeric_limits<double>::infinity());
            }
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("masked_log_probs_backward matches finite differences") {
    std::mt19937_64 rng(37);
    std::vector<double> logits(Vocab::kSize);
    for (auto& l : logits) l = (static_cast<double>(rng() % 400) - 200) / 100.0;
    auto allowed = all_allowed();
    allowed[3] = allowed[11] = 0;
    std::vector<double> dlp(Vocab::kSize, 0.0);
    for (int i = 0; i < Vocab::kSize; ++i) {
        if (allowed[i]) dlp[i] = (static_cast<double>(rng() % 200) - 100) / 100.0;
    }
    const double temp = 0.8;
    const auto analytic = masked_log_probs_backward(logits, allowed, temp, dlp);

    const double h = 1e-6;
    for (int j = 0; j < Vocab::kSize; ++j) {
        auto lo = logits, hi = logits;
        hi[j] += h;
        lo[j] -= h;
        const auto lp_hi = masked_log_probs(hi, allowed, temp);
        const auto lp_lo = masked_log_probs(lo, allowed, temp);
        double fd = 0.0;
        for (int i = 0; i < Vocab::kSize; ++i) {
            if (allowed[i]) fd += dlp[i] * (lp_hi[i] - lp_lo[i]) / (2 * h);
        }
        CHECK(analytic[j] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("toy policy gradient matches central finite differences") {
    PolicyConfig config;
    config.context_window = 4;
    config.embed_dim = 4;
    config.hidden_dim = 6;
    ToyPolicy policy(config, 99);
    REQUIRE(policy.param_count() <= 1000);

    std::mt19937_64 rng(41);
    const std::vector<int> context = {Vocab::kSolve, Vocab::slot_token(2), 4, 2};

    // random upstream gradient on (logits, value)
    std::vector<double> dlogits(Vocab::kSize);
    for (auto& d : dlogits) d = (static_cast<double>(rng() % 200) - 100) / 100.0;
    const double dvalue = 0.7;

    std::vector<double> analytic(policy.param_count(), 0.0);
    policy.backward(context, dlogits, dvalue, analytic);

    auto scalar_loss = [&](const ToyPolicy& p) {
        const auto out = p.forward(context);
        double s = dvalue * out.value;
        for (int i = 0; i < Vocab::kSize; ++i) s += dlogits[static_cast<std::size_t>(i)] * out.logits[static_cast<std::size_t>(i)];
        return s;
    };

    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t j = 0; j < policy.param_count(); ++j) {
        ToyPolicy hi = policy, lo = policy;
        hi.params()[j] += h;
        lo.params()[j] -= h;
        const double fd = (scalar_loss(hi) - scalar_loss(lo)) / (2 * h);
        const double denom = std::max({std::abs(fd), std::abs(analytic[j]), 1e-8});
        worst = std::max(worst, std::abs(fd - analytic[j]) / denom);
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("generation is grammar-constrained and always parseable") {
    PolicyConfig config;
    ToyPolicy policy(config, 5);
    const auto task = sample_task(7, easy());

    for (uint64_t seed = 0; seed < 20; ++seed) {
        GrammarSpec proposer_spec;
        proposer_spec.role = Role::Proposer;
        const auto gen = toy_role_generate(policy, Role::Proposer,
                                           proposer_context(solver_context(task)), proposer_spec,
                                           1.0, 48, seed);
        REQUIRE_FALSE(gen.tokens.empty());
        CHECK(gen.tokens.back() == Vocab::kEos);
        std::vector<int> body(gen.tokens.begin(), gen.tokens.end() - 1);
        const auto parsed = parse_micro_claims(body);
        CHECK(parsed.malformed_lines == 0);
        CHECK(parsed.claims.size() <= 8);
    }
}

TEST_CASE("generated logprobs match recomputation under the same masks") {
    PolicyConfig config;
    ToyPolicy policy(config, 5);
    const auto task = sample_task(9, easy());
    GrammarSpec spec;
    spec.role = Role::Solver;
    const auto context = solver_context(task);
    const auto gen = toy_role_generate(policy, Role::Solver, context, spec, 0.9, 16, 123);

    std::vector<int> running = context;
    running.insert(running.begin(), Vocab::role_token(Role::Solver));
    REQUIRE(gen.masks.size() == gen.tokens.size());
    for (std::size_t t = 0; t < gen.tokens.size(); ++t) {
        const auto out = policy.forward(running);
        const auto lp = masked_log_probs(out.logits, gen.masks[t], 0.9);
        CHECK(gen.logprobs[t] == doctest::Approx(lp[static_cast<std::size_t>(gen.tokens[t])])
                                     .epsilon(1e-12));
        running.push_back(gen.tokens[t]);
    }
}

TEST_CASE("temperature zero generation is greedy and deterministic") {
    PolicyConfig config;
    ToyPolicy policy(config, 6);
    const auto task = sample_task(3, easy());
    GrammarSpec spec;
    spec.role = Role::Solver;
    const auto a = toy_role_generate(policy, Role::Solver, solver_context(task), spec, 0.0, 16, 1);
    const auto b = toy_role_generate(policy, Role::Solver, solver_context(task), spec, 0.0, 16, 2);
    CHECK(a.tokens == b.tokens);  // seed is irrelevant at temperature 0
    // greedy choice is the argmax over allowed tokens at every step
    std::vector<int> running = solver_context(task);
    running.insert(running.begin(), Vocab::role_token(Role::Solver));
    for (std::size_t t = 0; t < a.tokens.size(); ++t) {
        const auto out = policy.forward(running);
        int best = -1;
        for (int i = 0; i < Vocab::kSize; ++i) {
            if (!a.masks[t][static_cast<std::size_t>(i)]) continue;
            if (best < 0 || out.logits[static_cast<std::size_t>(i)] >
                                out.logits[static_cast<std::size_t>(best)]) {
                best = i;
            }
        }
        CHECK(a.tokens[t] == best);
        running.push_back(a.tokens[t]);
    }
}

TEST_CASE("proposer grammar enforces min and max pair counts") {
    PolicyConfig config;
    ToyPolicy policy(config, 8);
    GrammarSpec spec;
    spec.role = Role::Proposer;
    spec.min_pairs = 3;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        const auto gen =
            toy_role_generate(policy, Role::Proposer, {Vocab::kEos}, spec, 1.2, 64, seed);
        std::vector<int> body(gen.tokens.begin(), gen.tokens.end() - 1);
        const auto parsed = parse_micro_claims(body);
        CHECK(parsed.claims.size() >= 3);
        CHECK(parsed.claims.size() <= 8);
    }
}

TEST_CASE("checker grammar answers every question then stops") {
    PolicyConfig config;
    ToyPolicy policy(config, 9);
    const auto task = sample_task(4, easy());
    GrammarSpec spec;
    spec.role = Role::Checker;
    spec.n_questions = 3;
    const auto gen = toy_role_generate(policy, Role::Checker,
                                       checker_context(task, {Vocab::slot_token(0),
                                                              Vocab::slot_token(1),
                                                              Vocab::slot_token(2)}),
                                       spec, 1.0, 64, 17);
    CHECK(gen.tokens.back() == Vocab::kEos);
    std::vector<int> body(gen.tokens.begin(), gen.tokens.end() - 1);
    const auto answers = parse_micro_answers(body, 3);
    CHECK(answers.size() == 3);  // every question answered (possibly <NUL>)
}

TEST_CASE("checker grammar with zero questions emits a bare <EOS>") {
    PolicyConfig config;
    ToyPolicy policy(config, 9);
    GrammarSpec spec;
    spec.role = Role::Checker;
    spec.n_questions = 0;
    const auto gen = toy_role_generate(policy, Role::Checker, {Vocab::kEos}, spec, 1.0, 8, 2);
    REQUIRE(gen.tokens.size() == 1);
    CHECK(gen.tokens[0] == Vocab::kEos);
    CHECK(gen.logprobs[0] == 0.0);  // only one allowed token
}

TEST_CASE("toy backend plus toy codec run the shared pipeline end to end") {
    auto policy = std::make_shared<ToyPolicy>(PolicyConfig{}, 7);
    ToyBackend backend(policy, /*min_questions=*/1);
    ToyCodec codec;
    const auto task = sample_task(11, easy());
    const auto sample = toy_task_to_sample(task, "toy-11");

    PipelineConfig config;
    config.sampling.temperature = 1.0;
    config.sampling.seed = 5;
    config.solver_max_tokens = 8;
    config.proposer_max_tokens = 48;
    config.checker_max_tokens = 48;

    const auto record = run_rollout(sample, backend, codec, config);
    CHECK_FALSE(record.claims.empty());
    CHECK(record.consensus.size() == record.claims.size());
    CHECK(record.reward.n_total == record.claims.size());
    REQUIRE(record.solver.terminal_reward);
    CHECK(*record.solver.terminal_reward == record.reward.value);

    // repeat run is bit-identical under the same seed
    const auto again = run_rollout(sample, backend, codec, config);
    CHECK(rollout_record_to_json(again, config) == rollout_record_to_json(record, config));
}
