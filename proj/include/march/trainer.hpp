#pragma once

#include <functional>
#include <string>
#include <vector>

#include "march/toyworld.hpp"

namespace march {

struct TrainConfig {
    // optimization
    double gamma = 0.998;
    double gae_lambda = 0.95;
    double kl_beta = 1e-3;
    double clip_epsilon = 0.2;
    double actor_lr = 3e-3;
    double critic_lr = 1e-2;
    int batch_size = 32;
    int epochs = 1;
    int actor_warmup_steps = 5;
    int critic_warmup_steps = 10;
    int checkpoint_every = 20;
    uint64_t seed = 1;
    int total_steps = 500;
    bool whiten = true;   // batch-level advantage normalization
    bool clipped = true;  // off: unclipped surrogate (vanilla policy gradient)

    // environment and rollout
    toy::Difficulty difficulty;
    toy::PolicyConfig policy;
    int min_questions = 0;  // structural floor on proposed pairs (0 = none)
    int max_answer_digits = 3;  // digit-run cap shared by proposer and checker
    int checker_samples = 3;
    double temperature = 0.6;
    int solver_max_tokens = 8;
    int proposer_max_tokens = 48;
    int checker_max_tokens = 48;
    RewardConfig reward;
    int jobs = 1;
};

/// One reward-labeled token trajectory. Everything needed to recompute the
/// sampling-time log-probabilities exactly: context, chosen tokens, per-step
/// allowed masks, and the sampling temperature.
struct TokenTrajectory {
    Role role = Role::Solver;
    std::vector<int> prompt_tokens;  // role marker + context
    std::vector<int> tokens;
    std::vector<double> logprobs_old;
    std::vector<std::vector<uint8_t>> masks;
    double temperature = 1.0;
    double terminal_reward = 0.0;
    // filled by prepare_batch
    std::vector<double> ref_logprobs;
    std::vector<double> values;
    std::vector<double> advantages;
    std::vector<double> returns;
};

/// 2|B| trajectories: the solver response y and the checker audit λ per
/// sample, sharing one terminal reward.
struct TrainBatch {
    std::vector<TokenTrajectory> trajectories;
};

struct TrainMetrics {
    int step = 0;
    double mean_reward = 0.0;
    double mean_kl = 0.0;
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double mean_questions_proposed = 0.0;
    double checker_accuracy_vs_oracle = 0.0;
};

/// Terminal-only rewards: reward on the last token, zeros elsewhere, terminal
/// bootstrap value 0. Returns (advantages, returns). Throws on empty input or
/// length mismatch.
std::pair<std::vector<double>, std::vector<double>> compute_gae(
    const std::vector<double>& rewards, const std::vector<double>& values, double gamma,
    double lambda);

/// Per-token KL estimator logpi_theta(t) - logpi_ref(t); zero for identical
/// policies. Throws on length mismatch.
std::vector<double> kl_penalty_per_token(const std::vector<double>& policy_logprobs,
                                         const std::vector<double>& ref_logprobs);

/// Log-probabilities and state values of a stored trajectory under the given
/// parameters, using the stored masks and temperature (so the result equals
/// sampling-time logprobs when params are unchanged).
void recompute_trajectory(const toy::ToyPolicy& policy, const TokenTrajectory& traj,
                          std::vector<double>& logprobs_out, std::vector<double>& values_out);

/// Fills ref_logprobs (under ref), values (under policy), per-trajectory GAE,
/// then optionally whitens advantages across the whole batch.
void prepare_batch(const toy::ToyPolicy& policy, const toy::ToyPolicy& ref, TrainBatch& batch,
                   const TrainConfig& cfg);

struct LossStats {
    double policy_loss = 0.0;   // -surrogate + KL penalty, 1/(2|B|)-normalized
    double value_loss = 0.0;    // 0.5 squared error, 1/(2|B|)-normalized
    double total = 0.0;
    double mean_surrogate = 0.0;  // per-token mean of min(r A, clip(r) A)
    double mean_kl = 0.0;         // per-token mean of logpi - logref
    std::size_t n_tokens = 0;
};

/// Full PPO loss over a prepared batch; accumulates analytic gradients into
/// grad_actor (surrogate + KL terms) and grad_critic (value regression) when
/// non-null. Pure: does not touch the parameters.
LossStats ppo_loss_and_grad(const toy::ToyPolicy& policy, const TrainBatch& batch,
                            const TrainConfig& cfg, std::vector<double>* grad_actor,
                            std::vector<double>* grad_critic);

/// One actor step and one critic step with warmup-scaled learning rates.
/// Non-finite loss or gradient throws before any parameter write.
LossStats ppo_update(toy::ToyPolicy& policy, const toy::ToyPolicy& ref, TrainBatch& batch,
                     const TrainConfig& cfg, int step);

/// One full toy rollout under the current policy: solve, propose, check with
/// m audit samples, consensus, reward on both trained trajectories. The
/// checker runs even with zero questions (it immediately emits <EOS>), so a
/// sample always yields exactly two trajectories.
struct ToyRollout {
    TokenTrajectory solver;
    TokenTrajectory checker;
    std::size_t n_claims = 0;
    double reward = 0.0;
    int oracle_total = 0;    // questions with a defined comparison
    int oracle_correct = 0;  // consensus agreeing with the exact oracle
};
ToyRollout toy_rollout(const toy::ToyPolicy& policy, const toy::ToyTask& task,
                       const TrainConfig& cfg, uint64_t seed);

/// Versioned checkpoint: flat parameter vector + config snapshot + step.
void save_checkpoint(const std::string& path, const toy::ToyPolicy& policy,
                     const TrainConfig& cfg, int step);
struct Checkpoint {
    toy::PolicyConfig policy_config;
    std::vector<double> params;
    TrainConfig config;
    int step = 0;
};
Checkpoint load_checkpoint(const std::string& path);

/// JSON (de)serialization of the full train config; round-trip stable.
std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& json_text);

std::string metrics_csv_header();
std::string metrics_csv_row(const TrainMetrics& m);

/// Full training loop: seeded task sampling, parallel rollouts against an
/// immutable parameter snapshot, dual-trajectory PPO updates, metrics every
/// step, checkpoints every checkpoint_every steps when out_dir is set.
/// Deterministic under (cfg, initial params).
using MetricsSink = std::function<void(const TrainMetrics&)>;
std::vector<TrainMetrics> train(toy::ToyPolicy& policy, const TrainConfig& cfg,
                                const std::string& out_dir = "", MetricsSink sink = nullptr);

}  // namespace march
