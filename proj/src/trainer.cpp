#include "march/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace march {

using toy::ToyPolicy;
using toy::ToyTask;
using toy::Vocab;

std::pair<std::vector<double>, std::vector<double>> compute_gae(
    const std::vector<double>& rewards, const std::vector<double>& values, double gamma,
    double lambda) {
    if (rewards.empty()) throw std::invalid_argument("compute_gae: empty trajectory");
    if (rewards.size() != values.size()) {
        throw std::invalid_argument("compute_gae: rewards/values length mismatch");
    }
    const std::size_t T = rewards.size();
    std::vector<double> advantages(T), returns(T);
    double next_adv = 0.0;
    double next_value = 0.0;  // terminal bootstrap
    for (std::size_t i = T; i-- > 0;) {
        const double delta = rewards[i] + gamma * next_value - values[i];
        next_adv = delta + gamma * lambda * next_adv;
        advantages[i] = next_adv;
        returns[i] = next_adv + values[i];
        next_value = values[i];
    }
    return {std::move(advantages), std::move(returns)};
}

std::vector<double> kl_penalty_per_token(const std::vector<double>& policy_logprobs,
                                         const std::vector<double>& ref_logprobs) {
    if (policy_logprobs.size() != ref_logprobs.size()) {
        throw std::invalid_argument("kl_penalty_per_token: length mismatch");
    }
    std::vector<double> out(policy_logprobs.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = policy_logprobs[i] - ref_logprobs[i];
    return out;
}

void recompute_trajectory(const ToyPolicy& policy, const TokenTrajectory& traj,
                          std::vector<double>& logprobs_out, std::vector<double>& values_out) {
    logprobs_out.resize(traj.tokens.size());
    values_out.resize(traj.tokens.size());
    std::vector<int> context = traj.prompt_tokens;
    for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
        const auto out = policy.forward(context);
        const auto lp = toy::masked_log_probs(out.logits, traj.masks[t], traj.temperature);
        logprobs_out[t] = lp[static_cast<std::size_t>(traj.tokens[t])];
        values_out[t] = out.value;
        context.push_back(traj.tokens[t]);
    }
}

void prepare_batch(const ToyPolicy& policy, const ToyPolicy& ref, TrainBatch& batch,
                   const TrainConfig& cfg) {
    for (auto& traj : batch.trajectories) {
        std::vector<double> ref_lp, ref_v, cur_lp;
        recompute_trajectory(ref, traj, ref_lp, ref_v);
        traj.ref_logprobs = std::move(ref_lp);
        recompute_trajectory(policy, traj, cur_lp, traj.values);

        std::vector<double> rewards(traj.tokens.size(), 0.0);
        rewards.back() = traj.terminal_reward;
        auto [adv, ret] = compute_gae(rewards, traj.values, cfg.gamma, cfg.gae_lambda);
        traj.advantages = std::move(adv);
        traj.returns = std::move(ret);
    }

    if (!cfg.whiten) return;
    std::size_t n = 0;
    double mean = 0.0;
    for (const auto& traj : batch.trajectories) {
        for (double a : traj.advantages) {
            mean += a;
            ++n;
        }
    }
    if (n < 2) return;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& traj : batch.trajectories) {
        for (double a : traj.advantages) var += (a - mean) * (a - mean);
    }
    const double std_dev = std::sqrt(var / static_cast<double>(n)) + 1e-8;
    for (auto& traj : batch.trajectories) {
        for (double& a : traj.advantages) a = (a - mean) / std_dev;
    }
}

LossStats ppo_loss_and_grad(const ToyPolicy& policy, const TrainBatch& batch,
                            const TrainConfig& cfg, std::vector<double>* grad_actor,
                            std::vector<double>* grad_critic) {
    if (batch.trajectories.empty()) throw std::invalid_argument("empty batch");
    const double norm = 1.0 / static_cast<double>(batch.trajectories.size());  // 1/(2|B|)
    if (grad_actor) grad_actor->assign(policy.param_count(), 0.0);
    if (grad_critic) grad_critic->assign(policy.param_count(), 0.0);

    LossStats stats;
    std::vector<double> zero_logits(static_cast<std::size_t>(Vocab::kSize), 0.0);

    for (const auto& traj : batch.trajectories) {
        std::vector<int> context = traj.prompt_tokens;
        for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
            const int token = traj.tokens[t];
            const auto out = policy.forward(context);
            const auto lp_all = toy::masked_log_probs(out.logits, traj.masks[t], traj.temperature);
            const double lp = lp_all[static_cast<std::size_t>(token)];
            const double lp_old = traj.logprobs_old[t];
            const double lp_ref = traj.ref_logprobs[t];
            const double A = traj.advantages[t];
            const double R = traj.returns[t];

            const double ratio = std::exp(lp - lp_old);
            double surrogate, dsurr_dlp;
            if (cfg.clipped) {
                const double clipped_ratio =
                    std::clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
                const double s1 = ratio * A;
                const double s2 = clipped_ratio * A;
                if (s1 <= s2) {
                    surrogate = s1;
                    dsurr_dlp = ratio * A;
                } else {
                    surrogate = s2;
                    dsurr_dlp = 0.0;  // clipped branch is constant in theta
                }
            } else {
                surrogate = ratio * A;
                dsurr_dlp = ratio * A;
            }
            const double kl = lp - lp_ref;
            const double vdiff = out.value - R;

            stats.policy_loss += norm * (-surrogate + cfg.kl_beta * kl);
            stats.value_loss += norm * 0.5 * vdiff * vdiff;
            stats.mean_surrogate += surrogate;
            stats.mean_kl += kl;
            ++stats.n_tokens;

            if (grad_actor) {
                const double dlp = norm * (-dsurr_dlp + cfg.kl_beta);
                if (dlp != 0.0) {
                    std::vector<double> dlogprobs(lp_all.size(), 0.0);
                    dlogprobs[static_cast<std::size_t>(token)] = dlp;
                    const auto dlogits = toy::masked_log_probs_backward(
                        out.logits, traj.masks[t], traj.temperature, dlogprobs);
                    policy.backward(context, dlogits, 0.0, *grad_actor);
                }
            }
            if (grad_critic) {
                policy.backward(context, zero_logits, norm * vdiff, *grad_critic);
            }
            context.push_back(token);
        }
    }
    stats.total = stats.policy_loss + stats.value_loss;
    if (stats.n_tokens > 0) {
        stats.mean_surrogate /= static_cast<double>(stats.n_tokens);
        stats.mean_kl /= static_cast<double>(stats.n_tokens);
    }
    return stats;
}

namespace {

double warmup_scale(int step, int warmup_steps) {
    if (warmup_steps <= 0) return 1.0;
    return std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(warmup_steps));
}

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

LossStats ppo_update(ToyPolicy& policy, const ToyPolicy& ref, TrainBatch& batch,
                     const TrainConfig& cfg, int step) {
    prepare_batch(policy, ref, batch, cfg);
    LossStats stats;
    for (int epoch = 0; epoch < std::max(1, cfg.epochs); ++epoch) {
        std::vector<double> grad_actor, grad_critic;
        stats = ppo_loss_and_grad(policy, batch, cfg, &grad_actor, &grad_critic);
        if (!std::isfinite(stats.total) || !all_finite(grad_actor) || !all_finite(grad_critic)) {
            throw std::runtime_error("ppo_update: non-finite loss or gradient at step " +
                                     std::to_string(step) + " (policy_loss=" +
                                     std::to_string(stats.policy_loss) + ", value_loss=" +
                                     std::to_string(stats.value_loss) + "); no parameters written");
        }
        const double lr_a = cfg.actor_lr * warmup_scale(step, cfg.actor_warmup_steps);
        const double lr_c = cfg.critic_lr * warmup_scale(step, cfg.critic_warmup_steps);
        auto& params = policy.params();
        for (std::size_t i = 0; i < params.size(); ++i) {
            params[i] -= lr_a * grad_actor[i] + lr_c * grad_critic[i];
        }
    }
    return stats;
}

namespace {

TokenTrajectory make_trajectory(Role role, const std::vector<int>& context,
                                const toy::TokenGeneration& gen, double temperature) {
    TokenTrajectory traj;
    traj.role = role;
    traj.prompt_tokens.reserve(context.size() + 1);
    traj.prompt_tokens.push_back(Vocab::role_token(role));
    traj.prompt_tokens.insert(traj.prompt_tokens.end(), context.begin(), context.end());
    traj.tokens = gen.tokens;
    traj.logprobs_old = gen.logprobs;
    traj.masks = gen.masks;
    traj.temperature = temperature;
    return traj;
}

std::vector<int> strip_eos(std::vector<int> tokens) {
    while (!tokens.empty() && tokens.back() == Vocab::kEos) tokens.pop_back();
    return tokens;
}

}  // namespace

ToyRollout toy_rollout(const ToyPolicy& policy, const ToyTask& task, const TrainConfig& cfg,
                       uint64_t seed) {
    ToyRollout rollout;

    // Solve.
    const auto solver_ctx = toy::solver_context(task);
    toy::GrammarSpec solver_grammar;
    solver_grammar.role = Role::Solver;
    const auto solver_gen =
        toy::toy_role_generate(policy, Role::Solver, solver_ctx, solver_grammar, cfg.temperature,
                               cfg.solver_max_tokens, toy::mix_seed(seed, 1));
    rollout.solver = make_trajectory(Role::Solver, solver_ctx, solver_gen, cfg.temperature);

    // Propose. The proposer trajectory itself gets no gradient and is not kept.
    const auto proposer_ctx = toy::proposer_context(strip_eos(solver_gen.tokens));
    toy::GrammarSpec proposer_grammar;
    proposer_grammar.role = Role::Proposer;
    proposer_grammar.min_pairs = cfg.min_questions;
    proposer_grammar.max_answer_digits = cfg.max_answer_digits;
    const auto proposer_gen =
        toy::toy_role_generate(policy, Role::Proposer, proposer_ctx, proposer_grammar,
                               cfg.temperature, cfg.proposer_max_tokens, toy::mix_seed(seed, 2));
    const auto parsed = toy::parse_micro_claims(proposer_gen.tokens);
    rollout.n_claims = parsed.claims.size();

    std::vector<int> question_slots;
    for (const auto& claim : parsed.claims) {
        question_slots.push_back(*toy::slot_of_question(claim.question));
    }

    // Check: m audit samples; the first one is the trained trajectory. With
    // zero questions the grammar forces immediate <EOS>.
    const auto checker_ctx = toy::checker_context(task, question_slots);
    toy::GrammarSpec checker_grammar;
    checker_grammar.role = Role::Checker;
    checker_grammar.n_questions = static_cast<int>(question_slots.size());
    checker_grammar.max_answer_digits = cfg.max_answer_digits;
    const int m = std::max(1, cfg.checker_samples);
    std::vector<std::vector<CheckedAnswer>> audits;
    for (int i = 0; i < m; ++i) {
        const auto gen = toy::toy_role_generate(policy, Role::Checker, checker_ctx,
                                                checker_grammar, cfg.temperature,
                                                cfg.checker_max_tokens, toy::mix_seed(seed, 3 + i));
        if (i == 0) {
            rollout.checker = make_trajectory(Role::Checker, checker_ctx, gen, cfg.temperature);
        }
        audits.push_back(toy::parse_micro_answers(gen.tokens, question_slots.size()));
    }

    std::vector<AuditConsensus> consensus;
    for (std::size_t q = 0; q < question_slots.size(); ++q) {
        std::vector<Verdict> votes;
        for (const auto& audit : audits) {
            for (const auto& answer : audit) {
                if (answer.index == q + 1) votes.push_back(answer.verdict);
            }
        }
        consensus.push_back(consensus_from_votes(q + 1, std::move(votes),
                                                 static_cast<std::size_t>(m)));
    }

    const RewardRecord record = score_rollout(parsed.claims, consensus, cfg.reward);
    rollout.reward = record.value;
    rollout.solver.terminal_reward = record.value;
    rollout.checker.terminal_reward = record.value;

    for (std::size_t q = 0; q < question_slots.size(); ++q) {
        const auto truth = toy::exact_oracle(task, question_slots[q]);
        ++rollout.oracle_total;
        const auto& verdict = consensus[q].consensus;
        if (truth) {
            const auto* num = std::get_if<NumericAnswer>(&verdict);
            if (num && num->canonical == std::to_string(*truth)) ++rollout.oracle_correct;
        } else if (std::holds_alternative<CannotAnswer>(verdict)) {
            ++rollout.oracle_correct;
        }
    }
    return rollout;
}

// --- checkpoints and metrics -------------------------------------------------

namespace {

nlohmann::json config_to_json(const TrainConfig& cfg) {
    nlohmann::json j;
    j["gamma"] = cfg.gamma;
    j["gae_lambda"] = cfg.gae_lambda;
    j["kl_beta"] = cfg.kl_beta;
    j["clip_epsilon"] = cfg.clip_epsilon;
    j["actor_lr"] = cfg.actor_lr;
    j["critic_lr"] = cfg.critic_lr;
    j["batch_size"] = cfg.batch_size;
    j["epochs"] = cfg.epochs;
    j["actor_warmup_steps"] = cfg.actor_warmup_steps;
    j["critic_warmup_steps"] = cfg.critic_warmup_steps;
    j["checkpoint_every"] = cfg.checkpoint_every;
    j["seed"] = cfg.seed;
    j["total_steps"] = cfg.total_steps;
    j["whiten"] = cfg.whiten;
    j["clipped"] = cfg.clipped;
    j["n_facts"] = cfg.difficulty.n_facts;
    j["n_distractors"] = cfg.difficulty.n_distractors;
    j["max_value"] = cfg.difficulty.max_value;
    j["context_window"] = cfg.policy.context_window;
    j["embed_dim"] = cfg.policy.embed_dim;
    j["hidden_dim"] = cfg.policy.hidden_dim;
    j["min_questions"] = cfg.min_questions;
    j["max_answer_digits"] = cfg.max_answer_digits;
    j["checker_samples"] = cfg.checker_samples;
    j["temperature"] = cfg.temperature;
    j["solver_max_tokens"] = cfg.solver_max_tokens;
    j["proposer_max_tokens"] = cfg.proposer_max_tokens;
    j["checker_max_tokens"] = cfg.checker_max_tokens;
    j["reward_function"] = reward_function_name(cfg.reward.function);
    j["scalar_variant"] = scalar_variant_name(cfg.reward.scalar_variant);
    j["match_mode"] = cfg.reward.match_policy.mode == MatchMode::Exact ? "exact" : "relative";
    j["match_epsilon"] = cfg.reward.match_policy.epsilon;
    j["zero_claims"] = cfg.reward.n0_policy == ZeroClaimPolicy::Success ? "success" : "failure";
    j["penalize_below_min"] = cfg.reward.penalize_below_min;
    j["jobs"] = cfg.jobs;
    return j;
}

TrainConfig config_from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    cfg.gamma = j.value("gamma", cfg.gamma);
    cfg.gae_lambda = j.value("gae_lambda", cfg.gae_lambda);
    cfg.kl_beta = j.value("kl_beta", cfg.kl_beta);
    cfg.clip_epsilon = j.value("clip_epsilon", cfg.clip_epsilon);
    cfg.actor_lr = j.value("actor_lr", cfg.actor_lr);
    cfg.critic_lr = j.value("critic_lr", cfg.critic_lr);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.actor_warmup_steps = j.value("actor_warmup_steps", cfg.actor_warmup_steps);
    cfg.critic_warmup_steps = j.value("critic_warmup_steps", cfg.critic_warmup_steps);
    cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.total_steps = j.value("total_steps", cfg.total_steps);
    cfg.whiten = j.value("whiten", cfg.whiten);
    cfg.clipped = j.value("clipped", cfg.clipped);
    cfg.difficulty.n_facts = j.value("n_facts", cfg.difficulty.n_facts);
    cfg.difficulty.n_distractors = j.value("n_distractors", cfg.difficulty.n_distractors);
    cfg.difficulty.max_value = j.value("max_value", cfg.difficulty.max_value);
    cfg.policy.context_window = j.value("context_window", cfg.policy.context_window);
    cfg.policy.embed_dim = j.value("embed_dim", cfg.policy.embed_dim);
    cfg.policy.hidden_dim = j.value("hidden_dim", cfg.policy.hidden_dim);
    cfg.min_questions = j.value("min_questions", cfg.min_questions);
    cfg.max_answer_digits = j.value("max_answer_digits", cfg.max_answer_digits);
    cfg.checker_samples = j.value("checker_samples", cfg.checker_samples);
    cfg.temperature = j.value("temperature", cfg.temperature);
    cfg.solver_max_tokens = j.value("solver_max_tokens", cfg.solver_max_tokens);
    cfg.proposer_max_tokens = j.value("proposer_max_tokens", cfg.proposer_max_tokens);
    cfg.checker_max_tokens = j.value("checker_max_tokens", cfg.checker_max_tokens);
    if (j.value("reward_function", "ztr") == std::string("err")) {
        cfg.reward.function = RewardFunction::ERR;
    }
    if (j.value("scalar_variant", "-1/0") == std::string("0/1")) {
        cfg.reward.scalar_variant = ScalarVariant::IncentiveBased;
    }
    if (j.value("match_mode", "exact") == std::string("relative")) {
        cfg.reward.match_policy =
            MatchPolicy::relative(j.value("match_epsilon", 0.0));
    }
    if (j.value("zero_claims", "success") == std::string("failure")) {
        cfg.reward.n0_policy = ZeroClaimPolicy::Failure;
    }
    cfg.reward.penalize_below_min = j.value("penalize_below_min", 0);
    cfg.jobs = j.value("jobs", cfg.jobs);
    return cfg;
}

std::string format_metric(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace

std::string train_config_to_json(const TrainConfig& cfg) { return config_to_json(cfg).dump(2); }

TrainConfig train_config_from_json(const std::string& json_text) {
    return config_from_json(nlohmann::json::parse(json_text));
}

void save_checkpoint(const std::string& path, const ToyPolicy& policy, const TrainConfig& cfg,
                     int step) {
    nlohmann::json j;
    j["format"] = "march-ckpt-v1";
    j["step"] = step;
    j["config"] = config_to_json(cfg);
    j["params"] = policy.params();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << j.dump() << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    nlohmann::json j;
    in >> j;
    if (j.value("format", "") != "march-ckpt-v1") {
        throw std::runtime_error("unknown checkpoint format in " + path);
    }
    Checkpoint ckpt;
    ckpt.step = j["step"].get<int>();
    ckpt.config = config_from_json(j["config"]);
    ckpt.policy_config = ckpt.config.policy;
    ckpt.params = j["params"].get<std::vector<double>>();
    return ckpt;
}

std::string metrics_csv_header() {
    return "step,mean_reward,mean_kl,policy_loss,value_loss,mean_questions_proposed,"
           "checker_accuracy_vs_oracle";
}

std::string metrics_csv_row(const TrainMetrics& m) {
    return std::to_string(m.step) + "," + format_metric(m.mean_reward) + "," +
           format_metric(m.mean_kl) + "," + format_metric(m.policy_loss) + "," +
           format_metric(m.value_loss) + "," + format_metric(m.mean_questions_proposed) + "," +
           format_metric(m.checker_accuracy_vs_oracle);
}

std::vector<TrainMetrics> train(ToyPolicy& policy, const TrainConfig& cfg,
                                const std::string& out_dir, MetricsSink sink) {
    const ToyPolicy ref = policy;  // frozen reference, never updated

    std::ofstream metrics_out;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        metrics_out.open(std::filesystem::path(out_dir) / "metrics.csv");
        metrics_out << metrics_csv_header() << "\n";
    }

    std::vector<TrainMetrics> history;
    history.reserve(static_cast<std::size_t>(cfg.total_steps));

    for (int step = 0; step < cfg.total_steps; ++step) {
        const int B = cfg.batch_size;
        std::vector<ToyRollout> rollouts(static_cast<std::size_t>(B));
        std::vector<char> ok(static_cast<std::size_t>(B), 0);

        // Rollouts are pure in (params snapshot, seed), so the parallel and
        // serial schedules produce identical batches.
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, cfg.jobs)) if (cfg.jobs > 1)
#endif
        for (int i = 0; i < B; ++i) {
            const uint64_t task_seed =
                toy::mix_seed(cfg.seed, static_cast<uint64_t>(step) * 1000003ull +
                                            static_cast<uint64_t>(i));
            try {
                const auto task = toy::sample_task(task_seed, cfg.difficulty);
                rollouts[static_cast<std::size_t>(i)] =
                    toy_rollout(policy, task, cfg, toy::mix_seed(task_seed, 0xabcdull));
                ok[static_cast<std::size_t>(i)] = 1;
            } catch (const std::exception& e) {
#ifdef _OPENMP
#pragma omp critical
#endif
                std::fprintf(stderr, "[train] step %d sample %d failed: %s\n", step, i, e.what());
            }
        }

        TrainBatch batch;
        TrainMetrics m;
        m.step = step;
        int n_ok = 0;
        int oracle_total = 0, oracle_correct = 0;
        for (int i = 0; i < B; ++i) {
            if (!ok[static_cast<std::size_t>(i)]) continue;
            auto& r = rollouts[static_cast<std::size_t>(i)];
            ++n_ok;
            m.mean_reward += r.reward;
            m.mean_questions_proposed += static_cast<double>(r.n_claims);
            oracle_total += r.oracle_total;
            oracle_correct += r.oracle_correct;
            batch.trajectories.push_back(std::move(r.solver));
            batch.trajectories.push_back(std::move(r.checker));
        }
        if (n_ok == 0) throw std::runtime_error("train: every rollout in the batch failed");
        m.mean_reward /= n_ok;
        m.mean_questions_proposed /= n_ok;
        m.checker_accuracy_vs_oracle =
            oracle_total > 0 ? static_cast<double>(oracle_correct) / oracle_total : 0.0;

        const LossStats stats = ppo_update(policy, ref, batch, cfg, step);
        m.mean_kl = stats.mean_kl;
        m.policy_loss = stats.policy_loss;
        m.value_loss = stats.value_loss;

        history.push_back(m);
        if (metrics_out.is_open()) metrics_out << metrics_csv_row(m) << "\n";
        if (sink) sink(m);

        if (!out_dir.empty() && cfg.checkpoint_every > 0 &&
            (step + 1) % cfg.checkpoint_every == 0) {
            const auto path = std::filesystem::path(out_dir) /
                              ("ckpt-" + std::to_string(step + 1) + ".json");
            save_checkpoint(path.string(), policy, cfg, step + 1);
        }
    }
    if (!out_dir.empty()) {
        save_checkpoint((std::filesystem::path(out_dir) / "ckpt-final.json").string(), policy,
                        cfg, cfg.total_steps);
    }
    return history;
}

}  // namespace march
