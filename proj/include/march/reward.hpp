#pragma once

#include <string>
#include <variant>
#include <vector>

#include "march/textparse.hpp"

namespace march {

enum class RewardFunction { ZTR, ERR };
enum class ScalarVariant { PenaltyBased, IncentiveBased };  // -1/0 vs 0/1
enum class ZeroClaimPolicy { Success, Failure };

struct RewardConfig {
    RewardFunction function = RewardFunction::ZTR;
    ScalarVariant scalar_variant = ScalarVariant::PenaltyBased;
    MatchPolicy match_policy = MatchPolicy::exact();
    ZeroClaimPolicy n0_policy = ZeroClaimPolicy::Success;
    // When >0, fewer parsed claims than this gets the failure scalar
    // regardless of matches (reward-shaping alternative to the prompt-level
    // min-question constraint).
    int penalize_below_min = 0;
};

struct RewardRecord {
    RewardFunction function = RewardFunction::ZTR;
    ScalarVariant scalar_variant = ScalarVariant::PenaltyBased;
    std::vector<bool> per_claim;
    std::size_t n_total = 0;
    std::size_t n_err = 0;
    double value = 0.0;
};

/// All-or-nothing reward: success scalar only when every claim matched.
/// Empty input counts as all-true (the vacuous case; callers apply their
/// zero-claim policy on top).
double ztr(const std::vector<bool>& matches, ScalarVariant variant);

/// Proportional penalty -n_err/n_total; 0 when n_total = 0.
double err(const std::vector<bool>& matches);

/// Consensus verdict over m audit samples; NoConsensus when no verdict holds
/// a strict majority.
struct NoConsensus {
    bool operator==(const NoConsensus&) const { return true; }
};
using ConsensusVerdict = std::variant<NumericAnswer, CannotAnswer, NoConsensus>;

struct AuditConsensus {
    std::size_t question_index = 0;  // 1-based
    std::vector<Verdict> votes;      // one per audit sample that answered
    std::size_t n_audit_samples = 0; // m; absent answers count toward this
    ConsensusVerdict consensus = NoConsensus{};
};

/// Positional pairing of claims with their consensus verdicts. NoConsensus
/// and CannotAnswer both score as mismatch.
RewardRecord score_rollout(const std::vector<ClaimQA>& claims,
                           const std::vector<AuditConsensus>& consensus,
                           const RewardConfig& config);

const char* reward_function_name(RewardFunction fn);
const char* scalar_variant_name(ScalarVariant v);

}  // namespace march
