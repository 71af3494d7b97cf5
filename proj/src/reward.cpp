#include "march/reward.hpp"

#include <algorithm>
#include <stdexcept>

namespace march {

double ztr(const std::vector<bool>& matches, ScalarVariant variant) {
    const bool all_true = std::all_of(matches.begin(), matches.end(), [](bool b) { return b; });
    if (variant == ScalarVariant::PenaltyBased) return all_true ? 0.0 : -1.0;
    return all_true ? 1.0 : 0.0;
}

double err(const std::vector<bool>& matches) {
    if (matches.empty()) return 0.0;
    const auto n_err = static_cast<double>(
        std::count(matches.begin(), matches.end(), false));
    return -n_err / static_cast<double>(matches.size());
}

RewardRecord score_rollout(const std::vector<ClaimQA>& claims,
                           const std::vector<AuditConsensus>& consensus,
                           const RewardConfig& config) {
    if (claims.size() != consensus.size()) {
        throw std::invalid_argument("score_rollout: claims/consensus length mismatch");
    }
    RewardRecord record;
    record.function = config.function;
    record.scalar_variant = config.scalar_variant;
    record.n_total = claims.size();
    record.per_claim.reserve(claims.size());
    for (std::size_t i = 0; i < claims.size(); ++i) {
        bool matched = false;
        if (const auto* num = std::get_if<NumericAnswer>(&consensus[i].consensus)) {
            matched = answers_match(claims[i].asserted_answer, Verdict{*num}, config.match_policy);
        }
        record.per_claim.push_back(matched);
        if (!matched) ++record.n_err;
    }

    const double failure = config.function == RewardFunction::ERR ? -1.0
                           : config.scalar_variant == ScalarVariant::PenaltyBased ? -1.0
                                                                                  : 0.0;
    if (config.penalize_below_min > 0 &&
        record.n_total < static_cast<std::size_t>(config.penalize_below_min)) {
        record.value = failure;
        return record;
    }
    if (record.n_total == 0) {
        if (config.n0_policy == ZeroClaimPolicy::Failure) {
            record.value = failure;
        } else {
            record.value = config.function == RewardFunction::ERR ? 0.0
                                                                  : ztr({}, config.scalar_variant);
        }
        return record;
    }
    record.value = config.function == RewardFunction::ERR ? err(record.per_claim)
                                                          : ztr(record.per_claim, config.scalar_variant);
    return record;
}

const char* reward_function_name(RewardFunction fn) {
    return fn == RewardFunction::ZTR ? "ztr" : "err";
}

const char* scalar_variant_name(ScalarVariant v) {
    return v == ScalarVariant::PenaltyBased ? "-1/0" : "0/1";
}

}  // namespace march
