// march: operator entry point. Subcommands: stats | rollout | train | eval.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "march/datamodel.hpp"
#include "march/evalharness.hpp"
#include "march/pipeline.hpp"
#include "march/toyworld.hpp"
#include "march/trainer.hpp"

namespace {

constexpr const char* kVersion = "march 0.1.0";

// Exit codes: 0 success, 2 config error, 3 data error, 4 backend error.
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitBackend = 4;

struct BackendFlags {
    std::string kind = "toy";  // toy | scripted | http
    std::string script_path;
    std::string base_url = "http://localhost:8000";
    std::string model;
    std::string checkpoint;  // toy: load parameters from a checkpoint
    uint64_t policy_seed = 7;
    int min_questions = 0;
};

void add_backend_flags(CLI::App* cmd, BackendFlags& flags) {
    cmd->add_option("--backend", flags.kind, "Backend: toy | scripted | http")
        ->check(CLI::IsMember({"toy", "scripted", "http"}));
    cmd->add_option("--script", flags.script_path, "Scripted backend response file (JSON)");
    cmd->add_option("--base-url", flags.base_url, "HTTP backend base URL");
    cmd->add_option("--model", flags.model, "HTTP backend model name");
    cmd->add_option("--checkpoint", flags.checkpoint, "Toy backend: checkpoint to load");
    cmd->add_option("--policy-seed", flags.policy_seed, "Toy backend: policy init seed");
}

struct BackendBundle {
    std::shared_ptr<march::Backend> backend;
    std::unique_ptr<march::RoleCodec> codec;
};

BackendBundle make_backend(const BackendFlags& flags) {
    BackendBundle bundle;
    if (flags.kind == "toy") {
        auto policy_config = march::toy::PolicyConfig{};
        auto policy =
            std::make_shared<march::toy::ToyPolicy>(policy_config, flags.policy_seed);
        if (!flags.checkpoint.empty()) {
            const auto ckpt = march::load_checkpoint(flags.checkpoint);
            policy = std::make_shared<march::toy::ToyPolicy>(ckpt.policy_config,
                                                             flags.policy_seed);
            policy->params() = ckpt.params;
        }
        bundle.backend = std::make_shared<march::toy::ToyBackend>(policy, flags.min_questions);
        bundle.codec = std::make_unique<march::toy::ToyCodec>();
    } else if (flags.kind == "scripted") {
        if (flags.script_path.empty()) {
            throw CLI::ValidationError("--script is required with --backend scripted");
        }
        bundle.backend = march::ScriptedBackend::from_file(flags.script_path);
        march::PromptConfig prompt_config;
        if (flags.min_questions > 0) prompt_config.min_questions = flags.min_questions;
        bundle.codec = std::make_unique<march::TextCodec>(prompt_config);
    } else {
        march::HttpBackendConfig config;
        config.base_url = flags.base_url;
        config.model = flags.model;
        bundle.backend = std::make_shared<march::HttpBackend>(config);
        march::PromptConfig prompt_config;
        if (flags.min_questions > 0) prompt_config.min_questions = flags.min_questions;
        bundle.codec = std::make_unique<march::TextCodec>(prompt_config);
    }
    return bundle;
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const nlohmann::json& config) {
    nlohmann::json manifest;
    manifest["version"] = kVersion;
    manifest["command"] = command;
    manifest["config"] = config;
    std::ofstream out(std::filesystem::path(out_dir) / "manifest.json");
    out << manifest.dump(2) << "\n";
}

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.4g", x);
    return buf;
}

int cmd_stats(const std::string& dataset_path) {
    const auto samples = march::load_dataset(dataset_path);
    const auto stats = march::dataset_stats(samples);
    std::printf("samples               %zu\n", stats.n_samples);
    std::printf("avg query words       %s\n", fmt(stats.avg_query_len).c_str());
    std::printf("docs per query        avg %s  max %s  min %s\n",
                fmt(stats.docs_per_query.avg).c_str(), fmt(stats.docs_per_query.max).c_str(),
                fmt(stats.docs_per_query.min).c_str());
    std::printf("doc words per query   avg %s  max %s  min %s\n",
                fmt(stats.total_doc_len.avg).c_str(), fmt(stats.total_doc_len.max).c_str(),
                fmt(stats.total_doc_len.min).c_str());
    if (stats.irrelevant_doc_ratio) {
        std::printf("irrelevant doc ratio  %s\n", fmt(*stats.irrelevant_doc_ratio).c_str());
    } else {
        std::printf("irrelevant doc ratio  n/a\n");
    }
    return 0;
}

march::RewardConfig reward_from_flags(const std::string& reward, const std::string& scalar) {
    march::RewardConfig config;
    if (reward == "err") config.function = march::RewardFunction::ERR;
    if (scalar == "0/1") config.scalar_variant = march::ScalarVariant::IncentiveBased;
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MARCH asymmetric multi-agent factuality pipeline"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    // stats
    std::string stats_path;
    auto* stats_cmd = app.add_subcommand("stats", "Dataset statistics");
    stats_cmd->add_option("dataset", stats_path, "JSONL dataset path")->required();

    // rollout
    std::string rollout_dataset, rollout_out = "out";
    std::string rollout_reward = "ztr", rollout_scalar = "-1/0";
    BackendFlags rollout_backend;
    int rollout_jobs = 1, rollout_checker_samples = 3;
    uint64_t rollout_seed = 1;
    double rollout_temperature = 0.6;
    auto* rollout_cmd = app.add_subcommand("rollout", "Batch solve/propose/check rollouts");
    rollout_cmd->add_option("dataset", rollout_dataset, "JSONL dataset path")->required();
    add_backend_flags(rollout_cmd, rollout_backend);
    rollout_cmd->add_option("--min-questions", rollout_backend.min_questions,
                            "Require at least k proposed questions");
    rollout_cmd->add_option("--checker-samples", rollout_checker_samples,
                            "Audit samples per rollout (m)");
    rollout_cmd->add_option("--reward", rollout_reward, "ztr | err")
        ->check(CLI::IsMember({"ztr", "err"}));
    rollout_cmd->add_option("--scalar", rollout_scalar, "-1/0 | 0/1")
        ->check(CLI::IsMember({"-1/0", "0/1"}));
    rollout_cmd->add_option("--jobs", rollout_jobs, "Parallel rollout workers");
    rollout_cmd->add_option("--seed", rollout_seed, "Sampling seed");
    rollout_cmd->add_option("--temperature", rollout_temperature, "Sampling temperature");
    rollout_cmd->add_option("--out", rollout_out, "Output directory");

    // train
    std::string train_config_path, train_out = "out";
    std::string train_reward = "ztr", train_scalar = "-1/0";
    march::TrainConfig train_config;
    bool no_whiten = false;
    auto* train_cmd = app.add_subcommand("train", "Dual-trajectory PPO on the toy policy");
    train_cmd->add_option("--config", train_config_path, "Train config JSON (flags override)");
    train_cmd->add_option("--steps", train_config.total_steps, "Total update steps");
    train_cmd->add_option("--batch-size", train_config.batch_size, "Samples per update");
    train_cmd->add_option("--seed", train_config.seed, "Run seed");
    train_cmd->add_option("--min-questions", train_config.min_questions,
                          "Require at least k proposed questions");
    train_cmd->add_option("--checker-samples", train_config.checker_samples,
                          "Audit samples per rollout (m)");
    train_cmd->add_option("--reward", train_reward, "ztr | err")
        ->check(CLI::IsMember({"ztr", "err"}));
    train_cmd->add_option("--scalar", train_scalar, "-1/0 | 0/1")
        ->check(CLI::IsMember({"-1/0", "0/1"}));
    train_cmd->add_option("--jobs", train_config.jobs, "Parallel rollout workers");
    train_cmd->add_option("--n-facts", train_config.difficulty.n_facts, "Facts per task");
    train_cmd->add_option("--n-distractors", train_config.difficulty.n_distractors,
                          "Distractors per task");
    train_cmd->add_flag("--no-whiten", no_whiten, "Disable advantage whitening");
    train_cmd->add_option("--out", train_out, "Output directory");

    // eval
    std::string eval_dataset, eval_out = "out", eval_judge = "exact", eval_judge_script;
    BackendFlags eval_backend;
    march::EvalConfig eval_config;
    int eval_first = 0;
    auto* eval_cmd = app.add_subcommand("eval", "n-generation consistency evaluation");
    eval_cmd->add_option("dataset", eval_dataset, "JSONL dataset path")->required();
    add_backend_flags(eval_cmd, eval_backend);
    eval_cmd->add_option("--judge", eval_judge, "Judge: exact | scripted | http")
        ->check(CLI::IsMember({"exact", "scripted", "http"}));
    eval_cmd->add_option("--judge-script", eval_judge_script, "Scripted judge response file");
    eval_cmd->add_option("--n", eval_config.n_generations, "Generations per sample");
    eval_cmd->add_option("--first", eval_first, "Evaluate only the first N samples");
    eval_cmd->add_option("--jobs", eval_config.jobs, "Parallel eval workers");
    eval_cmd->add_option("--seed", eval_config.seed, "Sampling seed");
    eval_cmd->add_option("--out", eval_out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitConfig;
    }

    try {
        if (stats_cmd->parsed()) return cmd_stats(stats_path);

        if (rollout_cmd->parsed()) {
            const auto samples = march::load_dataset(rollout_dataset);
            auto bundle = make_backend(rollout_backend);
            march::PipelineConfig config;
            config.sampling.temperature = rollout_temperature;
            config.sampling.seed = rollout_seed;
            config.checker_samples = rollout_checker_samples;
            config.reward = reward_from_flags(rollout_reward, rollout_scalar);
            if (rollout_backend.min_questions > 0) {
                config.reward.penalize_below_min = rollout_backend.min_questions;
            }
            std::filesystem::create_directories(rollout_out);
            const auto result =
                march::run_batch(samples, *bundle.backend, *bundle.codec, config, rollout_jobs);
            march::write_rollout_records(
                result, config, (std::filesystem::path(rollout_out) / "records.jsonl").string());
            nlohmann::json manifest_config{
                {"dataset", rollout_dataset},
                {"backend", rollout_backend.kind},
                {"min_questions", rollout_backend.min_questions},
                {"checker_samples", rollout_checker_samples},
                {"reward", rollout_reward},
                {"scalar", rollout_scalar},
                {"jobs", rollout_jobs},
                {"seed", rollout_seed},
                {"temperature", rollout_temperature},
            };
            write_manifest(rollout_out, "rollout", manifest_config);
            std::printf("rollouts: %zu ok, %zu failed -> %s/records.jsonl\n",
                        result.records.size(), result.failures.size(), rollout_out.c_str());
            for (const auto& [id, what] : result.failures) {
                std::fprintf(stderr, "failed %s: %s\n", id.c_str(), what.c_str());
            }
            return result.failures.empty() ? 0 : kExitBackend;
        }

        if (train_cmd->parsed()) {
            if (!train_config_path.empty()) {
                std::ifstream in(train_config_path);
                if (!in) throw CLI::ValidationError("cannot open config: " + train_config_path);
                std::ostringstream buf;
                buf << in.rdbuf();
                march::TrainConfig from_file = march::train_config_from_json(buf.str());
                // Flags win over the file.
                if (train_cmd->count("--steps") == 0) train_config.total_steps = from_file.total_steps;
                if (train_cmd->count("--batch-size") == 0) train_config.batch_size = from_file.batch_size;
                if (train_cmd->count("--seed") == 0) train_config.seed = from_file.seed;
                if (train_cmd->count("--min-questions") == 0) train_config.min_questions = from_file.min_questions;
                if (train_cmd->count("--checker-samples") == 0) train_config.checker_samples = from_file.checker_samples;
                if (train_cmd->count("--jobs") == 0) train_config.jobs = from_file.jobs;
                if (train_cmd->count("--n-facts") == 0) train_config.difficulty.n_facts = from_file.difficulty.n_facts;
                if (train_cmd->count("--n-distractors") == 0) train_config.difficulty.n_distractors = from_file.difficulty.n_distractors;
                train_config.gamma = from_file.gamma;
                train_config.gae_lambda = from_file.gae_lambda;
                train_config.kl_beta = from_file.kl_beta;
                train_config.clip_epsilon = from_file.clip_epsilon;
                train_config.actor_lr = from_file.actor_lr;
                train_config.critic_lr = from_file.critic_lr;
                train_config.whiten = from_file.whiten;
                train_config.policy = from_file.policy;
                train_config.temperature = from_file.temperature;
            }
            train_config.reward = reward_from_flags(train_reward, train_scalar);
            if (no_whiten) train_config.whiten = false;
            march::toy::ToyPolicy policy(train_config.policy, train_config.seed);
            std::filesystem::create_directories(train_out);
            write_manifest(train_out, "train",
                           nlohmann::json{{"seed", train_config.seed},
                                          {"steps", train_config.total_steps},
                                          {"batch_size", train_config.batch_size},
                                          {"min_questions", train_config.min_questions},
                                          {"reward", train_reward},
                                          {"scalar", train_scalar}});
            const auto history = march::train(policy, train_config, train_out);
            if (!history.empty()) {
                const auto& last = history.back();
                std::printf("trained %zu steps; final mean reward %s -> %s/metrics.csv\n",
                            history.size(), fmt(last.mean_reward).c_str(), train_out.c_str());
            }
            return 0;
        }

        if (eval_cmd->parsed()) {
            const auto samples = march::load_dataset(eval_dataset);
            auto bundle = make_backend(eval_backend);
            std::unique_ptr<march::Judge> judge;
            if (eval_judge == "exact") {
                judge = std::make_unique<march::ExactMatchJudge>();
            } else if (eval_judge == "scripted") {
                if (eval_judge_script.empty()) {
                    throw CLI::ValidationError("--judge-script is required with --judge scripted");
                }
                judge = std::make_unique<march::BackendJudge>(
                    march::ScriptedBackend::from_file(eval_judge_script));
            } else {
                march::HttpBackendConfig config;
                config.base_url = eval_backend.base_url;
                config.model = eval_backend.model;
                judge = std::make_unique<march::BackendJudge>(
                    std::make_shared<march::HttpBackend>(config));
            }
            if (eval_first > 0) eval_config.first = eval_first;
            const auto report =
                march::evaluate(samples, *bundle.backend, *bundle.codec, *judge, eval_config);
            std::filesystem::create_directories(eval_out);
            march::write_eval_report(report,
                                     (std::filesystem::path(eval_out) / "report.json").string());
            write_manifest(eval_out, "eval",
                           nlohmann::json::parse(report.config_json.empty() ? "{}"
                                                                            : report.config_json));
            std::printf("consistency rate %.4f over %zu samples (%zu failed) -> %s/report.json\n",
                        report.consistency_rate, report.n_samples, report.failures.size(),
                        eval_out.c_str());
            return report.failures.empty() ? 0 : kExitBackend;
        }
    } catch (const CLI::Error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const march::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const march::BackendError& e) {
        std::fprintf(stderr, "backend error: %s\n", e.what());
        return kExitBackend;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return 0;
}
