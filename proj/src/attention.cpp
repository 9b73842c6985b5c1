#include "dmrn/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace dmrn {

using ag::Tape;
using ag::Var;

AttentionParams::AttentionParams(nn::ParamStore& ps, const ModelConfig& cfg,
                                 std::mt19937_64& rng) {
    w0 = &ps.normal("attention.w0", {cfg.attn_hidden, cfg.feature_dim}, rng,
                    1.0 / std::sqrt(static_cast<double>(cfg.feature_dim)));
    b0 = &ps.zeros("attention.b0", {cfg.attn_hidden});
    w1 = &ps.normal("attention.w1", {1, cfg.attn_hidden}, rng,
                    1.0 / std::sqrt(static_cast<double>(cfg.attn_hidden)));
    b1 = &ps.zeros("attention.b1", {1});
}

Var history_vector(Tape& t, const std::vector<Var>& weight_history, std::size_t n) {
    if (weight_history.empty()) return t.constant(Tensor::vector(n, 1.0));
    Var cum = weight_history[0];
    if (t.val(cum).size() != n) throw std::invalid_argument("history_vector: length mismatch");
    for (std::size_t i = 1; i < weight_history.size(); ++i) {
        if (t.val(weight_history[i]).size() != n) {
            throw std::invalid_argument("history_vector: length mismatch");
        }
        cum = t.add(cum, weight_history[i]);
    }
    // 1 - min(cum, 1)
    return t.affine(t.clamp_max(cum, 1.0), -1.0, 1.0);
}

Var attention_scores(Tape& t, Var words, const std::vector<std::uint8_t>& mask, Var visual,
                     Var history, const AttentionParams& params) {
    const std::size_t n = t.val(words).rows();
    const std::size_t d = t.val(words).cols();
    if (t.val(history).size() != n || mask.size() != n || t.val(visual).cols() != d) {
        throw std::invalid_argument("attention_scores: dimension mismatch");
    }
    Var pooled = t.mean_rows(visual);                                       // [d]
    Var dots = t.reshape(t.matmul(words, t.reshape(pooled, {d, 1})), {n});  // mean(V) . e_n
    Var gated = t.scale_rows(words, t.mul(history, dots));                  // [n, d]
    Var hidden = t.tanh(t.add_rowwise(t.matmul_nt(gated, t.leaf(*params.w0)),
                                      t.leaf(*params.b0)));
    Var logits = t.add_rowwise(t.matmul_nt(hidden, t.leaf(*params.w1)), t.leaf(*params.b1));
    Var probs = t.softmax_rows(t.reshape(logits, {1, n}), mask);
    return t.reshape(probs, {n});
}

Var weight_words(Tape& t, Var words, Var weights) {
    return t.scale_rows(words, weights);
}

}  // namespace dmrn
