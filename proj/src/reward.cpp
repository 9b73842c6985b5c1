#include "dmrn/reward.hpp"

#include <cmath>
#include <stdexcept>

namespace dmrn {

using ag::Tape;
using ag::Var;

PolicyParams::PolicyParams(nn::ParamStore& ps, const ModelConfig& cfg, std::mt19937_64& rng) {
    w1 = &ps.normal("policy.w1", {cfg.policy_hidden, 2 * cfg.feature_dim}, rng,
                    1.0 / std::sqrt(static_cast<double>(2 * cfg.feature_dim)));
    b1 = &ps.zeros("policy.b1", {cfg.policy_hidden});
    w2 = &ps.zeros("policy.w2", {2, cfg.policy_hidden});
    b2 = &ps.zeros("policy.b2", {2});
}

PolicyDecision decide(Tape& t, Var visual, Var cls, const PolicyParams& p, bool detach_inputs) {
    if (detach_inputs) {
        visual = t.constant(t.val(visual));
        cls = t.constant(t.val(cls));
    }
    const std::size_t d = t.val(visual).cols();
    Var pooled = t.reshape(t.mean_rows(visual), {1, d});
    Var x = t.concat_cols(pooled, cls);  // [1, 2C]
    Var hidden = t.tanh(t.add_rowwise(t.matmul_nt(x, t.leaf(*p.w1)), t.leaf(*p.b1)));
    Var logits = t.add_rowwise(t.matmul_nt(hidden, t.leaf(*p.w2)), t.leaf(*p.b2));
    PolicyDecision d2;
    d2.logits = logits;
    d2.probs = t.softmax_rows(logits);
    const Tensor& pr = t.val(d2.probs);
    d2.action = pr[kActionContinue] > pr[kActionStop] ? kActionContinue : kActionStop;
    return d2;
}

Var relevance_score(Tape& t, Var words, Var weights, Var visual) {
    Var attended = t.colsum(t.scale_rows(words, weights));  // [d]
    return t.dot(attended, t.mean_rows(visual));
}

std::vector<double> step_weights(const std::vector<int>& rewards, double gamma) {
    std::vector<double> w(rewards.size(), 0.0);
    // suffix recursion: w[i] = r[i] + gamma * w[i+1]
    for (std::size_t i = rewards.size(); i-- > 0;) {
        w[i] = static_cast<double>(rewards[i]) + (i + 1 < rewards.size() ? gamma * w[i + 1] : 0.0);
    }
    return w;
}

Var policy_loss(Tape& t, const std::vector<Var>& step_logits, const std::vector<int>& labels,
                const std::vector<double>& weights) {
    if (step_logits.size() != labels.size() || step_logits.size() != weights.size()) {
        throw std::invalid_argument("policy_loss: length mismatch");
    }
    Var total = t.constant(Tensor::scalar(0.0));
    for (std::size_t i = 0; i < step_logits.size(); ++i) {
        Var ce = t.cross_entropy_logits(t.reshape(step_logits[i], {2}),
                                        static_cast<std::size_t>(labels[i]));
        total = t.add(total, t.scale(ce, weights[i]));
    }
    return total;
}

}  // namespace dmrn
