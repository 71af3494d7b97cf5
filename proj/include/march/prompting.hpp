#pragma once

#include <optional>
#include <string>
#include <vector>

#include "march/datamodel.hpp"

namespace march {

enum class Role { Solver, Proposer, Checker, Judge };

const char* role_name(Role role);

struct RolePrompt {
    Role role = Role::Solver;
    std::string text;
    std::string template_version;
};

struct PromptConfig {
    std::optional<int> min_questions;          // k >= 1 when set
    std::optional<std::string> templates_dir;  // overrides the built-in templates
};

/// Holds the three role templates, loaded once. Placeholders use {{slot}}
/// syntax: {{documents}}, {{query}}, {{response}}, {{questions}},
/// {{min_questions_clause}}.
class PromptLibrary {
public:
    static PromptLibrary builtin();
    static PromptLibrary from_dir(const std::string& dir);
    static PromptLibrary from_config(const PromptConfig& config);

    RolePrompt render_solver(const RagSample& sample) const;
    RolePrompt render_proposer(const std::string& response,
                               std::optional<int> min_questions = std::nullopt) const;
    /// Input is (questions, documents) only; the solver response has no path
    /// into this prompt.
    RolePrompt render_checker(const std::vector<std::string>& questions,
                              const RagSample& sample) const;

    const std::string& version() const { return version_; }
    const std::string& solver_template() const { return solver_tmpl_; }
    const std::string& proposer_template() const { return proposer_tmpl_; }
    const std::string& checker_template() const { return checker_tmpl_; }

private:
    std::string solver_tmpl_;
    std::string proposer_tmpl_;
    std::string checker_tmpl_;
    std::string version_;
};

std::string render_documents_block(const std::vector<Document>& documents);

RolePrompt render_solver_prompt(const RagSample& sample, const PromptConfig& config = {});
RolePrompt render_proposer_prompt(const std::string& response, const PromptConfig& config = {});
RolePrompt render_checker_prompt(const std::vector<std::string>& questions,
                                 const RagSample& sample, const PromptConfig& config = {});

}  // namespace march
