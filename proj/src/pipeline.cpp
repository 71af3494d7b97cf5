#include "march/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace march {

namespace {

// Stage seeds must be a pure function of (base seed, prompt) so the parallel
// and serial batch paths generate identical rollouts.
uint64_t derive_seed(uint64_t base, const RolePrompt& prompt) {
    uint64_t h = base ^ 0x9e3779b97f4a7c15ull;
    for (unsigned char c : prompt.text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    h ^= static_cast<uint64_t>(prompt.role) + 1;
    return h;
}

SamplingConfig stage_sampling(const SamplingConfig& base, int max_tokens, int n_samples,
                              const RolePrompt& prompt) {
    SamplingConfig cfg = base;
    cfg.max_tokens = max_tokens;
    cfg.n_samples = n_samples;
    if (base.seed) cfg.seed = derive_seed(*base.seed, prompt);
    return cfg;
}

std::string verdict_key(const Verdict& v) {
    if (const auto* num = std::get_if<NumericAnswer>(&v)) return "n:" + num->canonical;
    return "cannot";
}

}  // namespace

const char* StageError::stage_name(Stage s) {
    switch (s) {
        case Stage::solve: return "solve";
        case Stage::propose: return "propose";
        case Stage::check: return "check";
    }
    return "?";
}

TextCodec::TextCodec(PromptConfig config)
    : library_(PromptLibrary::from_config(config)), min_questions_(config.min_questions) {}

RolePrompt TextCodec::solver_prompt(const RagSample& sample) const {
    return library_.render_solver(sample);
}

RolePrompt TextCodec::proposer_prompt(const std::string& solver_text) const {
    return library_.render_proposer(solver_text, min_questions_);
}

RolePrompt TextCodec::checker_prompt(const std::vector<std::string>& questions,
                                     const RagSample& sample) const {
    return library_.render_checker(questions, sample);
}

ProposedParse TextCodec::parse_claims(const std::string& proposer_text) const {
    return parse_proposed_qa(proposer_text);
}

std::vector<CheckedAnswer> TextCodec::parse_answers(const std::string& checker_text,
                                                    std::size_t n_questions) const {
    return parse_checker_answers(checker_text, n_questions);
}

AuditConsensus consensus_from_votes(std::size_t question_index, std::vector<Verdict> votes,
                                    std::size_t n_audit_samples) {
    AuditConsensus result;
    result.question_index = question_index;
    result.n_audit_samples = n_audit_samples;

    std::map<std::string, std::pair<std::size_t, Verdict>> tally;
    for (const auto& v : votes) {
        auto [it, inserted] = tally.emplace(verdict_key(v), std::make_pair(0u, v));
        ++it->second.first;
    }
    result.votes = std::move(votes);
    for (const auto& [key, entry] : tally) {
        if (entry.first * 2 > n_audit_samples) {
            if (std::holds_alternative<NumericAnswer>(entry.second)) {
                result.consensus = std::get<NumericAnswer>(entry.second);
            } else {
                result.consensus = CannotAnswer{};
            }
            return result;
        }
    }
    result.consensus = NoConsensus{};
    return result;
}

Trajectory run_solver(const RagSample& sample, Backend& backend, const RoleCodec& codec,
                      const PipelineConfig& config) {
    const RolePrompt prompt = codec.solver_prompt(sample);
    std::vector<Generation> gens;
    try {
        gens = backend.generate(prompt, stage_sampling(config.sampling, config.solver_max_tokens,
                                                       1, prompt));
    } catch (const std::exception& e) {
        throw StageError(Stage::solve, sample.id, e.what());
    }
    Trajectory traj;
    traj.role = Role::Solver;
    traj.prompt_fingerprint = fingerprint(prompt);
    traj.text = gens.front().text;
    traj.token_logprobs = gens.front().token_logprobs;
    return traj;
}

std::pair<Trajectory, std::vector<ClaimQA>> run_proposer(const Trajectory& solver_traj,
                                                         Backend& backend,
                                                         const RoleCodec& codec,
                                                         const PipelineConfig& config,
                                                         const std::string& sample_id) {
    const RolePrompt prompt = codec.proposer_prompt(solver_traj.text);
    std::vector<Generation> gens;
    try {
        gens = backend.generate(prompt, stage_sampling(config.sampling, config.proposer_max_tokens,
                                                       1, prompt));
    } catch (const std::exception& e) {
        throw StageError(Stage::propose, sample_id, e.what());
    }
    Trajectory traj;
    traj.role = Role::Proposer;
    traj.prompt_fingerprint = fingerprint(prompt);
    traj.text = gens.front().text;
    traj.token_logprobs = gens.front().token_logprobs;
    return {std::move(traj), codec.parse_claims(gens.front().text).claims};
}

std::pair<Trajectory, std::vector<AuditConsensus>> run_checker(
    const std::vector<ClaimQA>& claims, const RagSample& sample, Backend& backend,
    const RoleCodec& codec, const PipelineConfig& config,
    std::vector<std::vector<CheckedAnswer>>* audit_samples_out) {
    if (claims.empty()) throw StageError(Stage::check, sample.id, "no claims to check");
    std::vector<std::string> questions;
    questions.reserve(claims.size());
    for (const auto& c : claims) questions.push_back(c.question);

    const RolePrompt prompt = codec.checker_prompt(questions, sample);
    const auto m = static_cast<std::size_t>(std::max(1, config.checker_samples));
    std::vector<Generation> gens;
    try {
        gens = backend.generate(prompt, stage_sampling(config.sampling, config.checker_max_tokens,
                                                       static_cast<int>(m), prompt));
    } catch (const std::exception& e) {
        throw StageError(Stage::check, sample.id, e.what());
    }

    std::vector<std::vector<CheckedAnswer>> parsed;
    parsed.reserve(m);
    for (const auto& g : gens) parsed.push_back(codec.parse_answers(g.text, claims.size()));
    if (audit_samples_out) *audit_samples_out = parsed;

    std::vector<AuditConsensus> consensus;
    consensus.reserve(claims.size());
    for (std::size_t q = 1; q <= claims.size(); ++q) {
        std::vector<Verdict> votes;
        for (const auto& answers : parsed) {
            auto it = std::find_if(answers.begin(), answers.end(),
                                   [q](const CheckedAnswer& a) { return a.index == q; });
            if (it != answers.end()) votes.push_back(it->verdict);
        }
        consensus.push_back(consensus_from_votes(q, std::move(votes), m));
    }

    Trajectory traj;
    traj.role = Role::Checker;
    traj.prompt_fingerprint = fingerprint(prompt);
    traj.text = gens.front().text;
    traj.token_logprobs = gens.front().token_logprobs;
    return {std::move(traj), std::move(consensus)};
}

RolloutRecord run_rollout(const RagSample& sample, Backend& backend, const RoleCodec& codec,
                          const PipelineConfig& config) {
    RolloutRecord record;
    record.sample_id = sample.id;
    record.solver = run_solver(sample, backend, codec, config);

    const RolePrompt proposer_prompt = codec.proposer_prompt(record.solver.text);
    std::vector<Generation> proposer_gens;
    try {
        proposer_gens = backend.generate(
            proposer_prompt,
            stage_sampling(config.sampling, config.proposer_max_tokens, 1, proposer_prompt));
    } catch (const std::exception& e) {
        throw StageError(Stage::propose, sample.id, e.what());
    }
    record.proposer.role = Role::Proposer;
    record.proposer.prompt_fingerprint = fingerprint(proposer_prompt);
    record.proposer.text = proposer_gens.front().text;
    record.proposer.token_logprobs = proposer_gens.front().token_logprobs;
    const ProposedParse parsed = codec.parse_claims(record.proposer.text);
    record.claims = parsed.claims;
    record.malformed_claim_lines = parsed.malformed_lines;

    if (!record.claims.empty()) {
        auto [checker_traj, consensus] =
            run_checker(record.claims, sample, backend, codec, config, &record.audit_samples);
        record.checker = std::move(checker_traj);
        record.consensus = std::move(consensus);
    } else {
        record.checker.role = Role::Checker;
    }

    record.reward = score_rollout(record.claims, record.consensus, config.reward);
    record.solver.terminal_reward = record.reward.value;
    record.checker.terminal_reward = record.reward.value;
    return record;
}

BatchResult run_batch_serial(const std::vector<RagSample>& samples, Backend& backend,
                             const RoleCodec& codec, const PipelineConfig& config) {
    BatchResult result;
    for (const auto& sample : samples) {
        try {
            result.records.push_back(run_rollout(sample, backend, codec, config));
        } catch (const std::exception& e) {
            result.failures.emplace_back(sample.id, e.what());
        }
    }
    return result;
}

BatchResult run_batch(const std::vector<RagSample>& samples, Backend& backend,
                      const RoleCodec& codec, const PipelineConfig& config, int jobs) {
    if (jobs <= 1) return run_batch_serial(samples, backend, codec, config);

    const auto n = samples.size();
    std::vector<std::optional<RolloutRecord>> slots(n);
    std::vector<std::optional<std::string>> errors(n);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(jobs)
#endif
    for (std::size_t i = 0; i < n; ++i) {
        try {
            slots[i] = run_rollout(samples[i], backend, codec, config);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    }

    BatchResult result;
    for (std::size_t i = 0; i < n; ++i) {
        if (slots[i]) {
            result.records.push_back(std::move(*slots[i]));
        } else {
            result.failures.emplace_back(samples[i].id, errors[i].value_or("unknown error"));
        }
    }
    return result;
}

namespace {

using nlohmann::json;

json verdict_to_json(const Verdict& v) {
    if (const auto* num = std::get_if<NumericAnswer>(&v)) {
        return json{{"kind", "number"}, {"value", num->canonical}};
    }
    return json{{"kind", "cannot_answer"}};
}

json consensus_to_json(const AuditConsensus& c) {
    json out;
    out["question_index"] = c.question_index;
    out["n_audit_samples"] = c.n_audit_samples;
    out["votes"] = json::array();
    for (const auto& v : c.votes) out["votes"].push_back(verdict_to_json(v));
    if (const auto* num = std::get_if<NumericAnswer>(&c.consensus)) {
        out["consensus"] = json{{"kind", "number"}, {"value", num->canonical}};
    } else if (std::holds_alternative<CannotAnswer>(c.consensus)) {
        out["consensus"] = json{{"kind", "cannot_answer"}};
    } else {
        out["consensus"] = json{{"kind", "no_consensus"}};
    }
    return out;
}

json trajectory_to_json(const Trajectory& t) {
    json out;
    out["role"] = role_name(t.role);
    out["prompt_fingerprint"] = t.prompt_fingerprint;
    out["text"] = t.text;
    if (t.terminal_reward) out["terminal_reward"] = *t.terminal_reward;
    return out;
}

}  // namespace

std::string rollout_record_to_json(const RolloutRecord& record, const PipelineConfig& config) {
    json out;
    out["sample_id"] = record.sample_id;
    out["solver"] = trajectory_to_json(record.solver);
    out["proposer"] = trajectory_to_json(record.proposer);
    out["checker"] = trajectory_to_json(record.checker);
    out["claims"] = json::array();
    for (const auto& c : record.claims) {
        out["claims"].push_back(json{{"question", c.question},
                                     {"answer", c.asserted_answer.canonical}});
    }
    out["malformed_claim_lines"] = record.malformed_claim_lines;
    out["consensus"] = json::array();
    for (const auto& c : record.consensus) out["consensus"].push_back(consensus_to_json(c));
    out["reward"] = json{{"function", reward_function_name(record.reward.function)},
                         {"scalar_variant", scalar_variant_name(record.reward.scalar_variant)},
                         {"per_claim", record.reward.per_claim},
                         {"n_total", record.reward.n_total},
                         {"n_err", record.reward.n_err},
                         {"value", record.reward.value}};
    out["config"] = json{{"temperature", config.sampling.temperature},
                         {"top_p", config.sampling.top_p},
                         {"top_k", config.sampling.top_k},
                         {"checker_samples", config.checker_samples}};
    return out.dump();
}

void write_rollout_records(const BatchResult& result, const PipelineConfig& config,
                           const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw std::runtime_error("cannot open rollout sink: " + path);
    for (const auto& record : result.records) {
        out << rollout_record_to_json(record, config) << '\n';
    }
}

}  // namespace march
