#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "march/pipeline.hpp"

namespace march {

/// Per-sample judge outcome: one boolean per generation plus the majority.
struct JudgeVerdict {
    std::string sample_id;
    std::vector<bool> per_generation;
    bool final_verdict = false;  // strict majority; even-split ties are false
    int n_generations = 0;
};

struct EvalReport {
    double consistency_rate = 0.0;  // fraction of samples with final_verdict true
    std::size_t n_samples = 0;
    std::vector<JudgeVerdict> per_sample;
    std::vector<std::pair<std::string, std::string>> failures;  // excluded samples
    std::string config_json;
};

/// Binary consistency verdict for one generation against its sample.
class Judge {
public:
    virtual ~Judge() = default;
    virtual bool judge_one(const RagSample& sample, const std::string& generation) = 0;
    virtual std::string name() const = 0;
};

/// LLM judge: renders the judge template and parses a CONSISTENT /
/// INCONSISTENT verdict token. Unparseable output counts as inconsistent
/// (logged once per run).
class BackendJudge : public Judge {
public:
    explicit BackendJudge(std::shared_ptr<Backend> backend,
                          std::optional<std::string> template_path = std::nullopt);

    RolePrompt prompt_for(const RagSample& sample, const std::string& generation) const;
    /// nullopt when no verdict token is present.
    static std::optional<bool> parse_verdict(const std::string& judge_output);

    bool judge_one(const RagSample& sample, const std::string& generation) override;
    std::string name() const override { return "backend"; }

    static const char* builtin_template();

private:
    std::shared_ptr<Backend> backend_;
    std::string template_;
    std::string template_version_;
    std::atomic<bool> warned_{false};
};

/// Offline fallback: the generation (whitespace stripped) must canonicalize
/// to the same number as the sample's gold answer. Samples without a gold
/// answer judge false.
class ExactMatchJudge : public Judge {
public:
    explicit ExactMatchJudge(MatchPolicy policy = MatchPolicy::exact()) : policy_(policy) {}
    bool judge_one(const RagSample& sample, const std::string& generation) override;
    std::string name() const override { return "exact-match"; }

private:
    MatchPolicy policy_;
};

struct EvalConfig {
    int n_generations = 8;
    std::optional<int> first;  // evaluate only the first N samples
    SamplingConfig sampling;
    int jobs = 1;
    uint64_t seed = 0;
};

/// Strict majority of the verdict votes; even splits resolve to false.
bool majority_verdict(const std::vector<bool>& votes);

/// The n-generation protocol: per sample, n solver generations, one judge
/// verdict each, majority-vote final. Backend failures exclude the sample
/// and are reported. Deterministic under (backends, seed); sample-order
/// independent rate.
EvalReport evaluate(const std::vector<RagSample>& dataset, Backend& subject,
                    const RoleCodec& codec, Judge& judge, const EvalConfig& config = {});

std::string eval_report_to_json(const EvalReport& report);
void write_eval_report(const EvalReport& report, const std::string& path);

}  // namespace march
