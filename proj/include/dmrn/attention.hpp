#pragma once

// Coverage-style word attention: each step scores words against the pooled
// visual state, discounted by how much attention each word has already
// received across previous steps.

#include <cstdint>
#include <random>
#include <vector>

#include "dmrn/model_config.hpp"
#include "dmrn/nn.hpp"

namespace dmrn {

struct AttentionParams {
    ag::Parameter* w0 = nullptr;  // [hidden, d]
    ag::Parameter* b0 = nullptr;  // [hidden]
    ag::Parameter* w1 = nullptr;  // [1, hidden]
    ag::Parameter* b1 = nullptr;  // [1]

    AttentionParams() = default;
    AttentionParams(nn::ParamStore& ps, const ModelConfig& cfg, std::mt19937_64& rng);
};

// h = 1 - min(sum of previous weight vectors, 1), elementwise.
// An empty history yields all ones.
ag::Var history_vector(ag::Tape& t, const std::vector<ag::Var>& weight_history, std::size_t n);

// Per-word scores: softmax over non-PAD positions of
// W1 * tanh(W0 * (h_n * (mean(V) . e_n)) * e_n + b0) + b1.
ag::Var attention_scores(ag::Tape& t, ag::Var words, const std::vector<std::uint8_t>& mask,
                         ag::Var visual, ag::Var history, const AttentionParams& params);

// Row n of the result is weights[n] * words[n].
ag::Var weight_words(ag::Tape& t, ag::Var words, ag::Var weights);

}  // namespace dmrn
