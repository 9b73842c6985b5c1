#pragma once

// Desk-scale encoders: a strided conv stack for images and a token+position
// embedding with one self-attention block for expressions. Both project to
// the shared feature dimension.

#include <cstdint>
#include <random>
#include <vector>

#include "dmrn/model_config.hpp"
#include "dmrn/nn.hpp"

namespace dmrn {

using ag::Tape;
using ag::Var;

struct WordFeatures {
    Var features;                     // [N, d]
    Var cls;                          // [1, d], row 0 of features
    std::vector<std::uint8_t> mask;   // true = real token, false = PAD
};

class ImageEncoder {
  public:
    ImageEncoder(nn::ParamStore& ps, const ModelConfig& cfg, std::mt19937_64& rng);
    // image is [image_px*image_px, 3]; returns [S*S, C].
    Var encode(Tape& t, const Tensor& image) const;

  private:
    ModelConfig cfg_;
    nn::Conv2d conv1_, conv2_, conv3_;
    nn::LayerNorm norm1_, norm2_, norm3_;
};

class ExpressionEncoder {
  public:
    ExpressionEncoder(nn::ParamStore& ps, const ModelConfig& cfg, std::size_t vocab_size,
                      std::mt19937_64& rng);
    WordFeatures encode(Tape& t, const std::vector<int>& token_ids) const;
    std::size_t vocab_size() const { return vocab_size_; }

  private:
    ModelConfig cfg_;
    std::size_t vocab_size_;
    ag::Parameter* token_embedding_ = nullptr;     // [vocab, d]
    ag::Parameter* position_embedding_ = nullptr;  // [n_max, d]
    nn::TransformerLayer block_;
    nn::Linear proj_;
};

}  // namespace dmrn
