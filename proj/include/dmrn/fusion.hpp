#pragma once

// One reasoning step: weighted words and flattened visual tokens pass
// through a transformer encoder; the visual segment is concatenated
// channel-wise with the previous visual state and projected back to C.

#include <cstdint>
#include <random>
#include <vector>

#include "dmrn/model_config.hpp"
#include "dmrn/nn.hpp"

namespace dmrn {

class Fusion {
  public:
    Fusion(nn::ParamStore& ps, const ModelConfig& cfg, std::mt19937_64& rng);

    // weighted_words [N, d], prev_visual [S*S, C] -> [S*S, C].
    ag::Var step(ag::Tape& t, ag::Var weighted_words,
                 const std::vector<std::uint8_t>& word_mask, ag::Var prev_visual) const;

  private:
    ModelConfig cfg_;
    nn::TransformerEncoder encoder_;
    ag::Parameter* visual_pos_ = nullptr;  // [S*S, C], added to visual tokens
    nn::Linear proj_;                      // [C, 2C] channel reduction
    nn::LayerNorm out_norm_;
};

}  // namespace dmrn
