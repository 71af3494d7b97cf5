#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace march {

/// A pure decimal value plus the text it was parsed from. canonical is the
/// normalized rendering (no sign on zero, no trailing fraction zeros,
/// thousands separators stripped).
struct NumericAnswer {
    std::string canonical;
    std::string raw;
    double value = 0.0;

    bool operator==(const NumericAnswer& other) const { return canonical == other.canonical; }
};

enum class RejectReason { suffix, range, percent, words, malformed };

struct NumericParse {
    std::optional<NumericAnswer> answer;
    std::optional<RejectReason> reject;
};

/// One atomic proposed claim: question text plus asserted numeric answer.
struct ClaimQA {
    std::string question;
    NumericAnswer asserted_answer;
    std::optional<std::pair<std::size_t, std::size_t>> source_span;  // byte offsets
};

struct CannotAnswer {
    bool operator==(const CannotAnswer&) const { return true; }
};

using Verdict = std::variant<NumericAnswer, CannotAnswer>;

struct CheckedAnswer {
    std::size_t index = 0;  // 1-based question index
    Verdict verdict = CannotAnswer{};
    std::optional<std::string> evidence;
};

struct ProposedParse {
    std::vector<ClaimQA> claims;
    std::size_t malformed_lines = 0;
};

enum class MatchMode { Exact, RelativeTol };

struct MatchPolicy {
    MatchMode mode = MatchMode::Exact;
    double epsilon = 0.0;  // relative tolerance, used only in RelativeTol mode

    static MatchPolicy exact() { return {MatchMode::Exact, 0.0}; }
    static MatchPolicy relative(double eps) { return {MatchMode::RelativeTol, eps}; }
};

/// Accepts optional sign, digits with optional comma thousands separators,
/// optional single decimal point. Rejects percents, ranges, unit suffixes,
/// and number words, with the reason category.
NumericParse canonicalize_number(const std::string& raw);

/// Extracts every line matching `- Question: <q> [Answer: <n>]`. Lines that
/// start a QA item but violate the grammar (e.g. non-numeric answer) count
/// as malformed; everything else is ignored.
ProposedParse parse_proposed_qa(const std::string& proposer_output);

/// Renders claims back into the proposer list grammar (round-trip inverse of
/// parse_proposed_qa on well-formed lists).
std::string format_proposed_qa(const std::vector<ClaimQA>& claims);

/// Extracts numbered checker entries: `N. [Evidence: ...] [Answer: X]`.
/// "Cannot answer" (case-insensitive) maps to CannotAnswer. Entries with
/// index outside [1, n_questions] are dropped; missing indices are simply
/// absent from the result. Bare `Answer: X` without brackets is accepted.
std::vector<CheckedAnswer> parse_checker_answers(const std::string& checker_output,
                                                 std::size_t n_questions);

bool answers_match(const NumericAnswer& asserted, const Verdict& checked,
                   const MatchPolicy& policy = MatchPolicy::exact());

}  // namespace march
