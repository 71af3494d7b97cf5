#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "march/pipeline.hpp"

namespace march {
namespace toy {

/// Fixed token inventory: digits, role markers, structural markers, 16 slot
/// ids, and a noise token.
struct Vocab {
    static constexpr int kDigitBase = 0;   // ids 0..9
    static constexpr int kSolve = 10;
    static constexpr int kPropose = 11;
    static constexpr int kCheck = 12;
    static constexpr int kDoc = 13;
    static constexpr int kQ = 14;
    static constexpr int kA = 15;
    static constexpr int kSep = 16;
    static constexpr int kEos = 17;
    static constexpr int kSlotBase = 18;   // ids 18..33 -> s0..s15
    static constexpr int kNumSlots = 16;
    static constexpr int kNul = 34;
    static constexpr int kSize = 35;

    static int size() { return kSize; }
    static bool is_digit(int id) { return id >= 0 && id < 10; }
    static bool is_slot(int id) { return id >= kSlotBase && id < kSlotBase + kNumSlots; }
    static int slot_token(int slot_index) { return kSlotBase + slot_index; }
    static int slot_index(int id) { return id - kSlotBase; }
    static int role_token(Role role);
    static const std::string& name(int id);
    static std::optional<int> id_of(const std::string& name);
};

/// Seed derivation for independent RNG streams (splitmix64-based mixing).
uint64_t mix_seed(uint64_t a, uint64_t b);

std::string render_tokens(const std::vector<int>& tokens);
/// Space-separated token names; throws on unknown names.
std::vector<int> parse_tokens(const std::string& text);
std::vector<int> digits_of(int value);

struct ToyTask {
    std::map<int, int> facts;                      // slot index -> value in [0, 999]
    std::vector<std::pair<int, int>> distractors;  // (slot index, wrong value)
    int query_slot = 0;
    std::vector<int> serialized_docs;              // shuffled <DOC> blocks
};

struct Difficulty {
    int n_facts = 1;
    int n_distractors = 0;
    int max_value = 999;
};

/// Deterministic under seed. Distractor slot ids may collide with facts.
ToyTask sample_task(uint64_t seed, const Difficulty& difficulty);

/// Facts dominate distractors on slot collision; absent slot -> nullopt
/// (the CannotAnswer case).
std::optional<int> exact_oracle(const ToyTask& task, int slot_index);

/// Dataset-format view of a task: one Document per <DOC> block, query is
/// the query-slot token name. Lets the shared pipeline run on toy tasks.
RagSample toy_task_to_sample(const ToyTask& task, const std::string& id);

// --- micro-grammar ------------------------------------------------------

/// `<Q> slot <A> digit+ <SEP>` per claim; question text is "value of sK?".
ProposedParse parse_micro_claims(const std::vector<int>& tokens);
std::vector<int> format_micro_claims(const std::vector<ClaimQA>& claims);

/// `<A> (digit+ | <NUL>) <SEP>` per question, in order; <NUL> means
/// CannotAnswer. Malformed groups are skipped (absent index).
std::vector<CheckedAnswer> parse_micro_answers(const std::vector<int>& tokens,
                                               std::size_t n_questions);

std::optional<int> slot_of_question(const std::string& question_text);
std::string question_for_slot(int slot_index);

// --- policy -------------------------------------------------------------

struct PolicyConfig {
    int context_window = 8;
    int embed_dim = 16;
    int hidden_dim = 32;
};

/// Tiny autoregressive map: the last context_window token embeddings are
/// concatenated, pushed through one tanh layer, and read out as next-token
/// logits plus a scalar state value. All gradients are analytic.
class ToyPolicy {
public:
    ToyPolicy(PolicyConfig config, uint64_t seed);

    std::size_t param_count() const { return params_.size(); }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    const PolicyConfig& config() const { return config_; }

    struct StepOut {
        std::vector<double> logits;  // size kSize
        double value = 0.0;
    };
    StepOut forward(const std::vector<int>& context) const;

    /// Accumulates d(loss)/d(params) into grad given upstream gradients on
    /// this step's logits and value.
    void backward(const std::vector<int>& context, const std::vector<double>& dlogits,
                  double dvalue, std::vector<double>& grad) const;

private:
    PolicyConfig config_;
    std::vector<double> params_;
    // Offsets into the flat parameter vector.
    std::size_t off_embed_, off_w1_, off_b1_, off_w2_, off_b2_, off_wv_, off_bv_;

    struct Cache;
    void run_forward(const std::vector<int>& context, Cache& cache) const;
};

/// The sampling distribution: logits masked to the allowed set, divided by
/// temperature, log-softmaxed. This same transform defines the training
/// log-probabilities, so sampled logprobs and recomputed ones agree exactly.
std::vector<double> masked_log_probs(const std::vector<double>& logits,
                                     const std::vector<uint8_t>& allowed, double temperature);
/// Backward of masked_log_probs: maps d(loss)/d(logprobs) to d(loss)/d(logits).
std::vector<double> masked_log_probs_backward(const std::vector<double>& logits,
                                              const std::vector<uint8_t>& allowed,
                                              double temperature,
                                              const std::vector<double>& dlogprobs);

/// Role-specific structural constraints; generation can only produce
/// well-formed micro-grammar output.
struct GrammarSpec {
    Role role = Role::Solver;
    int min_pairs = 0;        // proposer: <EOS> masked until this many pairs
    int max_pairs = 8;        // proposer: forced <EOS> at this many pairs
    int max_answer_digits = 3;
    int n_questions = 0;      // checker: answers required, then forced <EOS>
};

class GrammarState {
public:
    explicit GrammarState(GrammarSpec spec);
    std::vector<uint8_t> allowed() const;
    void advance(int token);
    bool done() const { return done_; }
    int pairs_emitted() const { return pairs_; }

private:
    GrammarSpec spec_;
    enum class S { free, boundary, after_q, after_slot, after_a, in_digits, after_nul };
    S state_ = S::free;
    int pairs_ = 0;        // proposer pairs or checker answers completed
    int digit_run_ = 0;
    bool done_ = false;
};

struct TokenGeneration {
    std::vector<int> tokens;
    std::vector<double> logprobs;                // under the masked+tempered policy
    std::vector<std::vector<uint8_t>> masks;     // allowed set per step
    FinishReason finish_reason = FinishReason::stop;
};

/// Autoregressive sampling until <EOS> or max_tokens. temperature 0 means
/// greedy argmax. Deterministic under (policy params, seed).
TokenGeneration toy_role_generate(const ToyPolicy& policy, Role role,
                                  const std::vector<int>& context, const GrammarSpec& grammar,
                                  double temperature, int max_tokens, uint64_t seed);

/// Context builders (role marker prepended by the generator itself).
std::vector<int> solver_context(const ToyTask& task);
std::vector<int> proposer_context(const std::vector<int>& solver_output);
std::vector<int> checker_context(const ToyTask& task, const std::vector<int>& question_slots);

// --- pipeline adapters ----------------------------------------------------

/// Backend over the toy policy; prompts are token-name strings. top_p/top_k
/// are ignored (warned once); token_logprobs are always present.
class ToyBackend : public Backend {
public:
    ToyBackend(std::shared_ptr<const ToyPolicy> policy, int min_questions = 0);
    std::vector<Generation> generate(const RolePrompt& prompt,
                                     const SamplingConfig& config) override;
    std::string name() const override { return "toy"; }

private:
    std::shared_ptr<const ToyPolicy> policy_;
    int min_questions_;
    std::atomic<bool> warned_{false};
};

/// RoleCodec for the token micro-grammar; pairs with ToyBackend so the
/// shared pipeline and eval harness run on toy tasks.
class ToyCodec : public RoleCodec {
public:
    RolePrompt solver_prompt(const RagSample& sample) const override;
    RolePrompt proposer_prompt(const std::string& solver_text) const override;
    RolePrompt checker_prompt(const std::vector<std::string>& questions,
                              const RagSample& sample) const override;
    ProposedParse parse_claims(const std::string& proposer_text) const override;
    std::vector<CheckedAnswer> parse_answers(const std::string& checker_text,
                                             std::size_t n_questions) const override;
};

}  // namespace toy
}  // namespace march
