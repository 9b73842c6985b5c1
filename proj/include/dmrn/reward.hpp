#pragma once

// Stop/continue policy and the reward signals that supervise it. Rewards
// are +1/-1; a step is worth continuing only when every enabled reward
// agrees. Step weights discount future rewards back to each decision.

#include <cstdint>
#include <random>
#include <vector>

#include "dmrn/model_config.hpp"
#include "dmrn/nn.hpp"

namespace dmrn {

// Action indices of the policy head.
constexpr int kActionStop = 0;
constexpr int kActionContinue = 1;

struct PolicyParams {
    ag::Parameter* w1 = nullptr;  // [hidden, 2C]
    ag::Parameter* b1 = nullptr;  // [hidden]
    ag::Parameter* w2 = nullptr;  // [2, hidden], zero-init so the initial
    ag::Parameter* b2 = nullptr;  // policy is exactly uniform

    PolicyParams() = default;
    PolicyParams(nn::ParamStore& ps, const ModelConfig& cfg, std::mt19937_64& rng);
};

struct PolicyDecision {
    ag::Var logits;  // [1, 2]
    ag::Var probs;   // [1, 2]
    int action = kActionStop;
};

// visual [S*S, C] is mean-pooled, concatenated with cls [1, C], and passed
// through a tanh MLP. Ties in the argmax resolve to stop. detach_inputs
// blocks policy-loss gradients from reaching the trunk.
PolicyDecision decide(ag::Tape& t, ag::Var visual, ag::Var cls, const PolicyParams& p,
                      bool detach_inputs = false);

inline int ultimate_reward(double iou_value) { return iou_value >= 0.5 ? 1 : -1; }
inline int immediate_reward(double score, double prev_score) {
    return score - prev_score >= 0.0 ? 1 : -1;
}

// Alignment between the attended words and the pooled visual state:
// (sum_n w_n e_n) . mean(V). Scalar [1].
ag::Var relevance_score(ag::Tape& t, ag::Var words, ag::Var weights, ag::Var visual);

inline bool should_continue(int reward_sum) { return reward_sum > 0; }

// weight[i] = sum_{t >= i} gamma^(t-i) * rewards[t].
std::vector<double> step_weights(const std::vector<int>& rewards, double gamma);

// Weighted sum of per-step cross-entropies against the gate-derived labels.
ag::Var policy_loss(ag::Tape& t, const std::vector<ag::Var>& step_logits,
                    const std::vector<int>& labels, const std::vector<double>& weights);

}  // namespace dmrn
