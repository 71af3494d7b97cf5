#include "march/textparse.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>

namespace march {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

bool all_digits(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
        return std::isdigit(c) != 0;
    });
}

// The small set of number words worth naming in reject diagnostics.
bool looks_like_number_word(const std::string& s) {
    static const char* kWords[] = {
        "zero", "one",  "two",  "three", "four",  "five",  "six",   "seven",
        "eight", "nine", "ten",  "twenty", "thirty", "forty", "fifty", "sixty",
        "seventy", "eighty", "ninety", "hundred", "thousand", "million", "billion"};
    const std::string low = lower(s);
    for (const char* w : kWords) {
        if (low.find(w) != std::string::npos) return true;
    }
    return false;
}

}  // namespace

NumericParse canonicalize_number(const std::string& raw) {
    const std::string s = trim(raw);
    if (s.empty()) return {std::nullopt, RejectReason::malformed};
    if (s.find('%') != std::string::npos) return {std::nullopt, RejectReason::percent};

    // Grammar: sign? digits(,ddd)* ('.' digits+)?
    std::size_t i = 0;
    bool negative = false;
    if (s[i] == '+' || s[i] == '-') {
        negative = (s[i] == '-');
        ++i;
    }
    std::string int_part, frac_part;
    bool saw_digit = false;
    while (i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == ',')) {
        if (s[i] != ',') {
            int_part += s[i];
            saw_digit = true;
        }
        ++i;
    }
    if (i < s.size() && s[i] == '.') {
        ++i;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
            frac_part += s[i];
            saw_digit = true;
            ++i;
        }
    }
    if (i < s.size() || !saw_digit) {
        // Trailing material or no digits at all: classify the rejection.
        const std::string rest = s.substr(i);
        if (saw_digit && rest.find('-') != std::string::npos) return {std::nullopt, RejectReason::range};
        if (looks_like_number_word(s)) return {std::nullopt, RejectReason::words};
        if (saw_digit && !rest.empty() && std::isalpha(static_cast<unsigned char>(trim(rest)[0]))) {
            return {std::nullopt, RejectReason::suffix};
        }
        return {std::nullopt, RejectReason::malformed};
    }

    // Normalize: drop leading integer zeros and trailing fraction zeros.
    int_part.erase(0, std::min(int_part.find_first_not_of('0'), int_part.size() - (int_part.empty() ? 0 : 1)));
    if (int_part.empty()) int_part = "0";
    while (!frac_part.empty() && frac_part.back() == '0') frac_part.pop_back();

    std::string canonical;
    if (negative && !(int_part == "0" && frac_part.empty())) canonical += '-';
    canonical += int_part;
    if (!frac_part.empty()) canonical += '.' + frac_part;

    NumericAnswer ans;
    ans.canonical = canonical;
    ans.raw = raw;
    ans.value = std::strtod(canonical.c_str(), nullptr);
    return {ans, std::nullopt};
}

namespace {

struct Line {
    std::string text;
    std::size_t begin = 0;
    std::size_t end = 0;
};

std::vector<Line> split_lines(const std::string& text) {
    std::vector<Line> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string::npos) nl = text.size();
        lines.push_back({text.substr(start, nl - start), start, nl});
        if (nl == text.size()) break;
        start = nl + 1;
    }
    return lines;
}

// Finds `[Answer: X]` in a line, or a bare `Answer: X` tail. Returns the raw
// answer text, or nullopt.
std::optional<std::string> extract_answer_field(const std::string& line) {
    const std::string low = lower(line);
    std::size_t pos = low.find("[answer:");
    if (pos != std::string::npos) {
        const std::size_t close = line.find(']', pos);
        if (close == std::string::npos) return std::nullopt;
        return trim(line.substr(pos + 8, close - pos - 8));
    }
    pos = low.find("answer:");
    if (pos != std::string::npos) {
        return trim(line.substr(pos + 7));
    }
    return std::nullopt;
}

}  // namespace

ProposedParse parse_proposed_qa(const std::string& proposer_output) {
    ProposedParse result;
    for (const auto& line : split_lines(proposer_output)) {
        const std::string t = trim(line.text);
        if (t.empty()) continue;
        if (t.rfind("- Question:", 0) != 0 && t.rfind("-Question:", 0) != 0) continue;

        const std::size_t q_start = t.find(':') + 1;
        const std::string low = lower(t);
        const std::size_t ans_pos = low.find("[answer:");
        if (ans_pos == std::string::npos || ans_pos < q_start) {
            ++result.malformed_lines;
            continue;
        }
        const std::size_t close = t.find(']', ans_pos);
        if (close == std::string::npos) {
            ++result.malformed_lines;
            continue;
        }
        const std::string question = trim(t.substr(q_start, ans_pos - q_start));
        const std::string raw_answer = trim(t.substr(ans_pos + 8, close - ans_pos - 8));
        const NumericParse num = canonicalize_number(raw_answer);
        if (question.empty() || !num.answer) {
            ++result.malformed_lines;
            continue;
        }
        ClaimQA claim;
        claim.question = question;
        claim.asserted_answer = *num.answer;
        claim.source_span = {{line.begin, line.end}};
        result.claims.push_back(std::move(claim));
    }
    return result;
}

std::string format_proposed_qa(const std::vector<ClaimQA>& claims) {
    std::string out;
    for (const auto& c : claims) {
        out += "- Question: " + c.question + " [Answer: " + c.asserted_answer.canonical + "]\n";
    }
    return out;
}

std::vector<CheckedAnswer> parse_checker_answers(const std::string& checker_output,
                                                 std::size_t n_questions) {
    // Entries start at a line beginning with "<digits>." and run until the
    // next such line.
    const auto lines = split_lines(checker_output);
    struct Entry {
        std::size_t index;
        std::vector<std::string> body;
    };
    std::vector<Entry> entries;
    for (const auto& line : lines) {
        const std::string t = trim(line.text);
        std::size_t d = 0;
        while (d < t.size() && std::isdigit(static_cast<unsigned char>(t[d]))) ++d;
        if (d > 0 && d < t.size() && t[d] == '.') {
            entries.push_back({static_cast<std::size_t>(std::stoul(t.substr(0, d))),
                               {trim(t.substr(d + 1))}});
        } else if (!entries.empty()) {
            entries.back().body.push_back(t);
        }
    }

    std::vector<CheckedAnswer> result;
    for (const auto& e : entries) {
        if (e.index < 1 || e.index > n_questions) continue;

        CheckedAnswer checked;
        checked.index = e.index;
        std::string evidence;
        bool found_answer = false;
        for (const auto& body_line : e.body) {
            const std::string low = lower(body_line);
            // Evidence must precede the answer; stop collecting once found.
            if (!found_answer) {
                const std::size_t ev = low.find("evidence:");
                const std::size_t an = low.find("answer:");
                if (ev != std::string::npos && (an == std::string::npos || ev < an)) {
                    const std::size_t cut = (an != std::string::npos)
                                                ? body_line.rfind('[', an)
                                                : std::string::npos;
                    std::string tail = (cut != std::string::npos && cut > ev)
                                           ? body_line.substr(ev + 9, cut - ev - 9)
                                           : body_line.substr(ev + 9);
                    if (!evidence.empty()) evidence += ' ';
                    evidence += trim(tail);
                }
            }
            const auto raw = extract_answer_field(body_line);
            if (raw && !found_answer) {
                found_answer = true;
                if (lower(*raw).find("cannot answer") != std::string::npos) {
                    checked.verdict = CannotAnswer{};
                } else {
                    const NumericParse num = canonicalize_number(*raw);
                    if (!num.answer) {
                        found_answer = false;  // unusable answer, entry stays absent
                        continue;
                    }
                    checked.verdict = *num.answer;
                }
            }
        }
        if (!found_answer) continue;
        if (!evidence.empty()) checked.evidence = evidence;
        // Last occurrence of an index wins if the model repeats itself.
        auto existing = std::find_if(result.begin(), result.end(),
                                     [&](const CheckedAnswer& c) { return c.index == e.index; });
        if (existing != result.end()) {
            *existing = std::move(checked);
        } else {
            result.push_back(std::move(checked));
        }
    }
    return result;
}

bool answers_match(const NumericAnswer& asserted, const Verdict& checked,
                   const MatchPolicy& policy) {
    const auto* num = std::get_if<NumericAnswer>(&checked);
    if (!num) return false;
    if (policy.mode == MatchMode::Exact) return asserted.canonical == num->canonical;
    const double a = asserted.value;
    const double b = num->value;
    const double scale = std::max({std::fabs(a), std::fabs(b), 1.0});
    return std::fabs(a - b) <= policy.epsilon * scale;
}

}  // namespace march
