#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "march/textparse.hpp"

using namespace march;

TEST_CASE("canonicalize_number accepts pure numbers") {
    auto p = canonicalize_number("50");
    REQUIRE(p.answer);
    CHECK(p.answer->canonical == "50");
    CHECK(p.answer->value == doctest::Approx(50.0));

    CHECK(canonicalize_number("50.0").answer->canonical == "50");
    CHECK(canonicalize_number(" 42 ").answer->canonical == "42");
    CHECK(canonicalize_number("-3.50").answer->canonical == "-3.5");
    CHECK(canonicalize_number("+7").answer->canonical == "7");
    CHECK(canonicalize_number("1,234,567").answer->canonical == "1234567");
    CHECK(canonicalize_number("0.25").answer->canonical == "0.25");
    CHECK(canonicalize_number("000").answer->canonical == "0");
    CHECK(canonicalize_number("-0").answer->canonical == "0");
    CHECK(canonicalize_number(".5").answer->canonical == "0.5");
}

TEST_CASE("canonicalize_number rejects with reason categories") {
    CHECK(canonicalize_number("50%").reject == RejectReason::percent);
    CHECK(canonicalize_number("10-20").reject == RejectReason::range);
    CHECK(canonicalize_number("10k").reject == RejectReason::suffix);
    CHECK(canonicalize_number("fifty").reject == RejectReason::words);
    CHECK(canonicalize_number("").reject == RejectReason::malformed);
    CHECK(canonicalize_number("..").reject == RejectReason::malformed);
    CHECK(canonicalize_number("about").reject == RejectReason::malformed);
}

TEST_CASE("canonicalize_number is idempotent") {
    for (const char* raw : {"50", "50.0", "-3.50", "1,234", "0.25", "+7", "000", ".5"}) {
        const auto first = canonicalize_number(raw);
        REQUIRE(first.answer);
        const auto second = canonicalize_number(first.answer->canonical);
        REQUIRE(second.answer);
        CHECK(second.answer->canonical == first.answer->canonical);
    }
}

TEST_CASE("parse_proposed_qa worked example") {
    const auto parsed = parse_proposed_qa(
        "- Question: How many people will take the bar exam in the Beijing area in 2025? "
        "[Answer: 50]");
    REQUIRE(parsed.claims.size() == 1);
    CHECK(parsed.malformed_lines == 0);
    CHECK(parsed.claims[0].question ==
          "How many people will take the bar exam in the Beijing area in 2025?");
    CHECK(parsed.claims[0].asserted_answer.canonical == "50");
}

TEST_CASE("parse_proposed_qa empty and malformed inputs") {
    const auto empty = parse_proposed_qa("");
    CHECK(empty.claims.empty());
    CHECK(empty.malformed_lines == 0);

    const auto bad_rule2 = parse_proposed_qa("- Question: share? [Answer: 10k]");
    CHECK(bad_rule2.claims.empty());
    CHECK(bad_rule2.malformed_lines == 1);

    const auto no_answer = parse_proposed_qa("- Question: how many?");
    CHECK(no_answer.claims.empty());
    CHECK(no_answer.malformed_lines == 1);

    // Non-item lines are ignored silently.
    const auto chatter = parse_proposed_qa("Here are the questions:\n\nThanks!");
    CHECK(chatter.claims.empty());
    CHECK(chatter.malformed_lines == 0);
}

TEST_CASE("parse_proposed_qa preserves order and keeps duplicates") {
    const auto parsed = parse_proposed_qa(
        "- Question: a? [Answer: 1]\n"
        "- Question: b? [Answer: 2]\n"
        "- Question: a? [Answer: 1]\n");
    REQUIRE(parsed.claims.size() == 3);
    CHECK(parsed.claims[0].question == "a?");
    CHECK(parsed.claims[1].question == "b?");
    CHECK(parsed.claims[2].question == "a?");
}

TEST_CASE("proposed qa round-trip: format then parse is identity") {
    std::mt19937 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<ClaimQA> claims;
        const int n = static_cast<int>(rng() % 6);
        for (int i = 0; i < n; ++i) {
            ClaimQA c;
            c.question = "what is quantity " + std::to_string(rng() % 100) + "?";
            const double v = static_cast<double>(static_cast<int>(rng() % 2000) - 1000) / 4.0;
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%g", v);
            c.asserted_answer = *canonicalize_number(buf).answer;
            claims.push_back(std::move(c));
        }
        const auto reparsed = parse_proposed_qa(format_proposed_qa(claims));
        CHECK(reparsed.malformed_lines == 0);
        REQUIRE(reparsed.claims.size() == claims.size());
        for (std::size_t i = 0; i < claims.size(); ++i) {
            CHECK(reparsed.claims[i].question == claims[i].question);
            CHECK(reparsed.claims[i].asserted_answer == claims[i].asserted_answer);
        }
    }
}

TEST_CASE("parse_checker_answers numbered entries") {
    const auto answers = parse_checker_answers(
        "1. Evidence: Document 1 states that 50 people will take the bar exam. [Answer: 50]", 1);
    REQUIRE(answers.size() == 1);
    CHECK(answers[0].index == 1);
    REQUIRE(std::holds_alternative<NumericAnswer>(answers[0].verdict));
    CHECK(std::get<NumericAnswer>(answers[0].verdict).canonical == "50");
    REQUIRE(answers[0].evidence);
    CHECK(answers[0].evidence->find("Document 1") != std::string::npos);
}

TEST_CASE("parse_checker_answers cannot-answer sentinel") {
    const auto answers = parse_checker_answers(
        "2. Evidence: not in the materials. [Answer: Cannot answer]", 2);
    REQUIRE(answers.size() == 1);
    CHECK(answers[0].index == 2);
    CHECK(std::holds_alternative<CannotAnswer>(answers[0].verdict));
}

TEST_CASE("parse_checker_answers multi-line entries with bare answers") {
    const auto answers = parse_checker_answers(
        "1. Evidence: Document-5 states that 52% of patients had hallucinations.\n"
        "Answer: 52\n"
        "\n"
        "2. Evidence: Document-3 mentions 59%.\n"
        "Answer: 59 \n",
        2);
    REQUIRE(answers.size() == 2);
    CHECK(std::get<NumericAnswer>(answers[0].verdict).canonical == "52");
    CHECK(std::get<NumericAnswer>(answers[1].verdict).canonical == "59");
}

TEST_CASE("parse_checker_answers drops out-of-range and missing indices stay absent") {
    const auto answers = parse_checker_answers(
        "1. [Answer: 10]\n"
        "4. [Answer: 99]\n",
        3);
    REQUIRE(answers.size() == 1);
    CHECK(answers[0].index == 1);
    for (const auto& a : answers) {
        CHECK(a.index >= 1);
        CHECK(a.index <= 3);
    }
}

TEST_CASE("parse_checker_answers: unusable answer text leaves the entry absent") {
    const auto answers = parse_checker_answers("1. [Answer: around ten]\n2. [Answer: 7]", 2);
    REQUIRE(answers.size() == 1);
    CHECK(answers[0].index == 2);
}

TEST_CASE("answers_match policies") {
    const auto n50 = *canonicalize_number("50").answer;
    const auto n50f = *canonicalize_number("50.0").answer;
    const auto n50eps = *canonicalize_number("50.0001").answer;
    const auto n49 = *canonicalize_number("49").answer;

    CHECK(answers_match(n50, Verdict{n50}));
    CHECK(answers_match(n50, Verdict{n50f}));  // canonical forms equal
    CHECK_FALSE(answers_match(n50, Verdict{n49}));
    CHECK_FALSE(answers_match(n50, Verdict{CannotAnswer{}}));

    const auto tol = MatchPolicy::relative(1e-3);
    CHECK(answers_match(n50, Verdict{n50eps}, tol));
    CHECK(answers_match(n50eps, Verdict{n50}, tol));  // symmetric
    CHECK_FALSE(answers_match(n50, Verdict{n49}, tol));
}

TEST_CASE("answers_match reflexive under exact policy") {
    std::mt19937 rng(5);
    for (int i = 0; i < 100; ++i) {
        const double v = (static_cast<double>(rng() % 100000) - 50000) / 8.0;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%g", v);
        const auto n = *canonicalize_number(buf).answer;
        CHECK(answers_match(n, Verdict{n}));
    }
}
