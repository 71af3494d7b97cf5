#include "march/evalharness.hpp"

#include "march/toyworld.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace march {

namespace {

const char* kJudgeTemplate =
    R"(You will verify whether a response is consistent with the provided documents.

{{documents}}

Question: {{query}}

Response to verify:
{{response}}
{{gold_clause}}
Read the documents carefully and decide whether every factual statement in the response is supported by the documents. Reply with exactly one word on the final line: CONSISTENT if the response is fully supported by the documents, or INCONSISTENT otherwise.
)";

void replace_slot(std::string& text, const std::string& slot, const std::string& value) {
    const std::string needle = "{{" + slot + "}}";
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        text.replace(pos, needle.size(), value);
        pos += value.size();
    }
}

}  // namespace

const char* BackendJudge::builtin_template() { return kJudgeTemplate; }

BackendJudge::BackendJudge(std::shared_ptr<Backend> backend,
                           std::optional<std::string> template_path)
    : backend_(std::move(backend)) {
    if (template_path) {
        std::ifstream in(*template_path);
        if (!in) throw std::runtime_error("cannot open judge template: " + *template_path);
        std::ostringstream buf;
        buf << in.rdbuf();
        template_ = buf.str();
        template_version_ = "file-judge";
    } else {
        template_ = kJudgeTemplate;
        template_version_ = "builtin-judge-v1";
    }
}

RolePrompt BackendJudge::prompt_for(const RagSample& sample, const std::string& generation) const {
    std::string text = template_;
    replace_slot(text, "documents", render_documents_block(sample.documents));
    replace_slot(text, "query", sample.query);
    replace_slot(text, "response", generation);
    std::string gold_clause;
    if (sample.gold_answer) gold_clause = "\nReference answer: " + *sample.gold_answer + "\n";
    replace_slot(text, "gold_clause", gold_clause);
    return {Role::Judge, text, template_version_};
}

std::optional<bool> BackendJudge::parse_verdict(const std::string& judge_output) {
    // INCONSISTENT contains CONSISTENT, so look for the negative form first.
    const auto neg = judge_output.rfind("INCONSISTENT");
    const auto pos = judge_output.rfind("CONSISTENT");
    if (neg == std::string::npos && pos == std::string::npos) return std::nullopt;
    if (neg == std::string::npos) return true;
    // A bare positive after the last negative wins.
    return pos != std::string::npos && pos > neg + 2;
}

bool BackendJudge::judge_one(const RagSample& sample, const std::string& generation) {
    SamplingConfig sampling;
    sampling.temperature = 0.0;
    sampling.top_p = 1.0;
    sampling.top_k = 0;
    sampling.n_samples = 1;
    sampling.max_tokens = 512;
    const auto generations = backend_->generate(prompt_for(sample, generation), sampling);
    const auto verdict = parse_verdict(generations.at(0).text);
    if (!verdict) {
        if (!warned_.exchange(true)) {
            std::fprintf(stderr,
                         "[judge] verdict token missing in judge output; counting as "
                         "inconsistent (sample '%s')\n",
                         sample.id.c_str());
        }
        return false;
    }
    return *verdict;
}

bool ExactMatchJudge::judge_one(const RagSample& sample, const std::string& generation) {
    if (!sample.gold_answer) return false;
    const auto gold = canonicalize_number(*sample.gold_answer);
    if (!gold.answer) return false;

    // Strip token markup and whitespace so toy outputs like "4 2 <EOS>" and
    // plain "42" both canonicalize.
    std::string cleaned = generation;
    for (const char* marker : {"<EOS>", "<SEP>", "<NUL>"}) {
        std::size_t pos;
        while ((pos = cleaned.find(marker)) != std::string::npos) {
            cleaned.erase(pos, std::string(marker).size());
        }
    }
    cleaned.erase(std::remove_if(cleaned.begin(), cleaned.end(),
                                 [](unsigned char c) { return std::isspace(c); }),
                  cleaned.end());
    const auto got = canonicalize_number(cleaned);
    if (!got.answer) return false;
    return answers_match(*gold.answer, Verdict{*got.answer}, policy_);
}

bool majority_verdict(const std::vector<bool>& votes) {
    const std::size_t trues = static_cast<std::size_t>(
        std::count(votes.begin(), votes.end(), true));
    return 2 * trues > votes.size();
}

EvalReport evaluate(const std::vector<RagSample>& dataset, Backend& subject,
                    const RoleCodec& codec, Judge& judge, const EvalConfig& config) {
    if (config.n_generations < 1) throw std::invalid_argument("n_generations must be >= 1");
    std::size_t limit = dataset.size();
    if (config.first) limit = std::min<std::size_t>(limit, static_cast<std::size_t>(*config.first));

    const int n = static_cast<int>(limit);
    std::vector<std::optional<JudgeVerdict>> verdicts(limit);
    std::vector<std::pair<std::string, std::string>> failures_by_index(limit);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, config.jobs)) \
    if (config.jobs > 1)
#endif
    for (int i = 0; i < n; ++i) {
        const auto& sample = dataset[static_cast<std::size_t>(i)];
        try {
            SamplingConfig sampling = config.sampling;
            sampling.n_samples = config.n_generations;
            sampling.seed = toy::mix_seed(config.seed, static_cast<uint64_t>(i));
            const auto generations = subject.generate(codec.solver_prompt(sample), sampling);

            JudgeVerdict v;
            v.sample_id = sample.id;
            v.n_generations = config.n_generations;
            for (const auto& g : generations) v.per_generation.push_back(judge.judge_one(sample, g.text));
            v.final_verdict = majority_verdict(v.per_generation);
            verdicts[static_cast<std::size_t>(i)] = std::move(v);
        } catch (const std::exception& e) {
            failures_by_index[static_cast<std::size_t>(i)] = {sample.id, e.what()};
        }
    }

    EvalReport report;
    std::size_t consistent = 0;
    for (std::size_t i = 0; i < limit; ++i) {
        if (verdicts[i]) {
            if (verdicts[i]->final_verdict) ++consistent;
            report.per_sample.push_back(std::move(*verdicts[i]));
        } else {
            report.failures.push_back(std::move(failures_by_index[i]));
        }
    }
    report.n_samples = report.per_sample.size();
    report.consistency_rate =
        report.n_samples > 0 ? static_cast<double>(consistent) / report.n_samples : 0.0;

    nlohmann::json cfg;
    cfg["n_generations"] = config.n_generations;
    if (config.first) cfg["first"] = *config.first;
    cfg["temperature"] = config.sampling.temperature;
    cfg["top_p"] = config.sampling.top_p;
    cfg["top_k"] = config.sampling.top_k;
    cfg["max_tokens"] = config.sampling.max_tokens;
    cfg["seed"] = config.seed;
    cfg["jobs"] = config.jobs;
    cfg["judge"] = judge.name();
    cfg["subject"] = subject.name();
    report.config_json = cfg.dump();
    return report;
}

std::string eval_report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["consistency_rate"] = report.consistency_rate;
    j["n_samples"] = report.n_samples;
    j["n_failures"] = report.failures.size();
    j["config"] = nlohmann::json::parse(report.config_json.empty() ? "{}" : report.config_json);
    j["per_sample"] = nlohmann::json::array();
    for (const auto& v : report.per_sample) {
        nlohmann::json s;
        s["id"] = v.sample_id;
        s["per_generation"] = v.per_generation;
        s["final"] = v.final_verdict;
        s["n_generations"] = v.n_generations;
        j["per_sample"].push_back(std::move(s));
    }
    j["failures"] = nlohmann::json::array();
    for (const auto& [id, what] : report.failures) {
        j["failures"].push_back(nlohmann::json{{"id", id}, {"error", what}});
    }
    return j.dump(2);
}

void write_eval_report(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write eval report: " + path);
    out << eval_report_to_json(report) << "\n";
}

}  // namespace march
