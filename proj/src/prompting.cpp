#include "march/prompting.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace march {

namespace {

constexpr const char* kSolverTemplate =
    "Instruction:\n"
    "You must respond based strictly on the information in provided passages. "
    "Do not incorporate any external knowledge or infer any details beyond what "
    "is given in the passages.\n"
    "\n"
    "Passages:\n"
    "{{documents}}\n"
    "\n"
    "Query:\n"
    "{{query}}\n"
    "\n"
    "Output:\n";

constexpr const char* kProposerTemplate =
    "You are a data annotation expert. Your task is to analyze a model's "
    "response to a user query. For every critical number found in the model's "
    "response, you must create a question where the answer is precisely and "
    "exactly that number.\n"
    "\n"
    "Rule 1. Clarity and Specificity of Questions: Each question must be clear, "
    "complete, and unambiguous. It must contain enough context from the "
    "response to ensure the number is the only possible correct answer. For "
    "example, if the model's response contains \"In 2025, 50 people will take "
    "the bar exam in Beijing,\" an effective question would be \"How many "
    "people will take the bar exam in the Beijing area in 2025?\", and the "
    "answer is 50. A bad example would be \"How many people will take the bar "
    "exam in 2025?\". This is ambiguous because it lacks the specific region "
    "('Beijing area').\n"
    "\n"
    "Rule 2. Format of the Answer: The answer must be a pure number, either an "
    "integer or a decimal. It must NOT include any other characters or "
    "formats, such as percentage signs (%), 'k' to denote thousands (e.g., "
    "10k), ranges (e.g., 10-20), or words (e.g., fifty).\n"
    "\n"
    "Please provide your output as an unordered list using the following "
    "format for each question-answer pair:\n"
    "- Question: xxx [Answer: n]\n"
    "- Question: xxx [Answer: n]\n"
    "\n"
    "Now, generate questions for the user query and model response below. Do "
    "not output any other content or explanations.\n"
    "{{min_questions_clause}}"
    "\n"
    "Model Response:\n"
    "{{response}}\n";

constexpr const char* kCheckerTemplate =
    "You are a data validation expert. You will be given a set of reference "
    "materials and a list of user questions. Your task is to retrieve "
    "information from the reference materials to answer all questions. Before "
    "providing each answer, you must state the evidence for it.\n"
    "\n"
    "You must adhere strictly to the content of the reference materials and "
    "must not fabricate or infer any information that is not explicitly "
    "mentioned. If the relevant information cannot be found in the materials, "
    "you must state \"Cannot answer\". It is important to note that all "
    "answers are pure numbers. Therefore, your answer must also be a pure "
    "number and must not contain any other content, such as percentage signs "
    "(%), 'k' to denote thousands, ranges, or numbers written as words.\n"
    "\n"
    "Here is an example:\n"
    "Reference Materials:\n"
    "Document 1: ...in 2024, 50 people will take the bar exam in Beijing.\n"
    "Document 2: ...(omitted)\n"
    "\n"
    "- Question 1: How many people will take the bar exam in Beijing in 2024?\n"
    "- Question 2: How many people will take the bar exam in Beijing in 2025?\n"
    "\n"
    "Example Response:\n"
    "1. Evidence: Document 1 states that 50 people will take the bar exam in "
    "Beijing in 2024.\n"
    "[Answer: 50]\n"
    "2. Evidence: The materials do not contain information about the bar exam "
    "in Beijing for 2025, therefore I cannot answer.\n"
    "[Answer: Cannot answer]\n"
    "\n"
    "Now, based on the reference materials below, answer all the following "
    "questions. Strictly adhere to the example format provided.\n"
    "\n"
    "Reference Materials:\n"
    "{{documents}}\n"
    "\n"
    "Questions:\n"
    "{{questions}}\n";

constexpr const char* kBuiltinVersion = "builtin-a1a2a3-v1";

std::string replace_slot(std::string text, const std::string& slot, const std::string& value) {
    const std::string needle = "{{" + slot + "}}";
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        text.replace(pos, needle.size(), value);
        pos += value.size();
    }
    return text;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read template file: " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

// FNV-1a, enough to version a template file in run manifests.
std::string content_version(const std::string& text) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "file-%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

const char* role_name(Role role) {
    switch (role) {
        case Role::Solver: return "solver";
        case Role::Proposer: return "proposer";
        case Role::Checker: return "checker";
        case Role::Judge: return "judge";
    }
    return "unknown";
}

std::string render_documents_block(const std::vector<Document>& documents) {
    std::string out;
    for (std::size_t i = 0; i < documents.size(); ++i) {
        if (i > 0) out += "\n";
        out += "Document-" + std::to_string(i + 1) + "\n";
        if (documents[i].title) out += *documents[i].title + "\n";
        out += documents[i].body + "\n";
    }
    return out;
}

PromptLibrary PromptLibrary::builtin() {
    PromptLibrary lib;
    lib.solver_tmpl_ = kSolverTemplate;
    lib.proposer_tmpl_ = kProposerTemplate;
    lib.checker_tmpl_ = kCheckerTemplate;
    lib.version_ = kBuiltinVersion;
    return lib;
}

PromptLibrary PromptLibrary::from_dir(const std::string& dir) {
    PromptLibrary lib;
    lib.solver_tmpl_ = read_file(dir + "/solver.tmpl");
    lib.proposer_tmpl_ = read_file(dir + "/proposer.tmpl");
    lib.checker_tmpl_ = read_file(dir + "/checker.tmpl");
    lib.version_ = content_version(lib.solver_tmpl_ + lib.proposer_tmpl_ + lib.checker_tmpl_);
    return lib;
}

PromptLibrary PromptLibrary::from_config(const PromptConfig& config) {
    return config.templates_dir ? from_dir(*config.templates_dir) : builtin();
}

RolePrompt PromptLibrary::render_solver(const RagSample& sample) const {
    std::string text = replace_slot(solver_tmpl_, "documents", render_documents_block(sample.documents));
    text = replace_slot(std::move(text), "query", sample.query);
    return {Role::Solver, std::move(text), version_};
}

RolePrompt PromptLibrary::render_proposer(const std::string& response,
                                          std::optional<int> min_questions) const {
    if (response.empty()) throw std::invalid_argument("render_proposer: empty response");
    std::string clause;
    if (min_questions) {
        if (*min_questions < 1) throw std::invalid_argument("min_questions must be >= 1");
        clause = "You must generate no fewer than " + std::to_string(*min_questions) +
                 " question-answer pairs.\n";
    }
    std::string text = replace_slot(proposer_tmpl_, "min_questions_clause", clause);
    text = replace_slot(std::move(text), "response", response);
    return {Role::Proposer, std::move(text), version_};
}

RolePrompt PromptLibrary::render_checker(const std::vector<std::string>& questions,
                                         const RagSample& sample) const {
    if (questions.empty()) throw std::invalid_argument("render_checker: empty question list");
    std::string numbered;
    for (std::size_t i = 0; i < questions.size(); ++i) {
        numbered += "- Question " + std::to_string(i + 1) + ": " + questions[i] + "\n";
    }
    std::string text = replace_slot(checker_tmpl_, "documents", render_documents_block(sample.documents));
    text = replace_slot(std::move(text), "questions", numbered);
    return {Role::Checker, std::move(text), version_};
}

RolePrompt render_solver_prompt(const RagSample& sample, const PromptConfig& config) {
    return PromptLibrary::from_config(config).render_solver(sample);
}

RolePrompt render_proposer_prompt(const std::string& response, const PromptConfig& config) {
    return PromptLibrary::from_config(config).render_proposer(response, config.min_questions);
}

RolePrompt render_checker_prompt(const std::vector<std::string>& questions,
                                 const RagSample& sample, const PromptConfig& config) {
    return PromptLibrary::from_config(config).render_checker(questions, sample);
}

}  // namespace march
