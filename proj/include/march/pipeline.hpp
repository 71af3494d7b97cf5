#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "march/llmgateway.hpp"
#include "march/reward.hpp"
#include "march/textparse.hpp"

namespace march {

/// One role-conditioned generation inside a rollout.
struct Trajectory {
    Role role = Role::Solver;
    std::string prompt_fingerprint;
    std::string text;
    std::optional<std::vector<double>> token_logprobs;
    std::optional<double> terminal_reward;
};

/// Maps samples and intermediate texts to role prompts and back. The text
/// codec uses the shipped templates and the list grammar; the toy codec in
/// toyworld speaks the token micro-grammar. checker_prompt takes questions
/// and documents only, so the solver text cannot reach the checker.
class RoleCodec {
public:
    virtual ~RoleCodec() = default;
    virtual RolePrompt solver_prompt(const RagSample& sample) const = 0;
    virtual RolePrompt proposer_prompt(const std::string& solver_text) const = 0;
    virtual RolePrompt checker_prompt(const std::vector<std::string>& questions,
                                      const RagSample& sample) const = 0;
    virtual ProposedParse parse_claims(const std::string& proposer_text) const = 0;
    virtual std::vector<CheckedAnswer> parse_answers(const std::string& checker_text,
                                                     std::size_t n_questions) const = 0;
};

class TextCodec : public RoleCodec {
public:
    explicit TextCodec(PromptConfig config = {});
    RolePrompt solver_prompt(const RagSample& sample) const override;
    RolePrompt proposer_prompt(const std::string& solver_text) const override;
    RolePrompt checker_prompt(const std::vector<std::string>& questions,
                              const RagSample& sample) const override;
    ProposedParse parse_claims(const std::string& proposer_text) const override;
    std::vector<CheckedAnswer> parse_answers(const std::string& checker_text,
                                             std::size_t n_questions) const override;

private:
    PromptLibrary library_;
    std::optional<int> min_questions_;
};

struct RolloutRecord {
    std::string sample_id;
    Trajectory solver;
    Trajectory proposer;
    std::vector<ClaimQA> claims;
    std::size_t malformed_claim_lines = 0;
    Trajectory checker;  // the first audit sample; the one that trains
    std::vector<std::vector<CheckedAnswer>> audit_samples;
    std::vector<AuditConsensus> consensus;
    RewardRecord reward;
};

struct PipelineConfig {
    SamplingConfig sampling;
    int solver_max_tokens = 8192;
    int proposer_max_tokens = 2048;
    int checker_max_tokens = 4096;
    int checker_samples = 3;  // m, odd by default to reduce ties
    RewardConfig reward;
};

enum class Stage { solve, propose, check };

class StageError : public std::runtime_error {
public:
    StageError(Stage stage, std::string sample_id, const std::string& what)
        : std::runtime_error(std::string("[") + stage_name(stage) + "] sample '" + sample_id +
                             "': " + what),
          stage(stage),
          sample_id(std::move(sample_id)) {}
    static const char* stage_name(Stage s);
    Stage stage;
    std::string sample_id;
};

/// Strict-majority (> m/2) vote over one question's verdicts; absent answers
/// count toward m but never toward a consensus.
AuditConsensus consensus_from_votes(std::size_t question_index,
                                    std::vector<Verdict> votes,
                                    std::size_t n_audit_samples);

Trajectory run_solver(const RagSample& sample, Backend& backend, const RoleCodec& codec,
                      const PipelineConfig& config);
std::pair<Trajectory, std::vector<ClaimQA>> run_proposer(const Trajectory& solver_traj,
                                                         Backend& backend,
                                                         const RoleCodec& codec,
                                                         const PipelineConfig& config,
                                                         const std::string& sample_id);
std::pair<Trajectory, std::vector<AuditConsensus>> run_checker(
    const std::vector<ClaimQA>& claims, const RagSample& sample, Backend& backend,
    const RoleCodec& codec, const PipelineConfig& config,
    std::vector<std::vector<CheckedAnswer>>* audit_samples_out = nullptr);

/// Full Phase-1 rollout: solve, propose, check, consensus, reward. Both the
/// solver and checker trajectories carry the same terminal reward.
RolloutRecord run_rollout(const RagSample& sample, Backend& backend, const RoleCodec& codec,
                          const PipelineConfig& config);

struct BatchResult {
    std::vector<RolloutRecord> records;
    std::vector<std::pair<std::string, std::string>> failures;  // (sample_id, error)
};

/// Serial reference path; the parallel path must produce identical results.
BatchResult run_batch_serial(const std::vector<RagSample>& samples, Backend& backend,
                             const RoleCodec& codec, const PipelineConfig& config);

/// OpenMP path over samples. Per-sample failures are isolated. jobs <= 1
/// falls back to the serial path.
BatchResult run_batch(const std::vector<RagSample>& samples, Backend& backend,
                      const RoleCodec& codec, const PipelineConfig& config, int jobs);

std::string rollout_record_to_json(const RolloutRecord& record, const PipelineConfig& config);

/// Appends one JSON line per record to path.
void write_rollout_records(const BatchResult& result, const PipelineConfig& config,
                           const std::string& path);

}  // namespace march
