#include "dmrn/encoders.hpp"

#include <stdexcept>

#include "dmrn/synth_env.hpp"

namespace dmrn {

ImageEncoder::ImageEncoder(nn::ParamStore& ps, const ModelConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg),
      conv1_(ps, "image_enc.conv1", 3, cfg.feature_dim / 2, 3, 2, 1, rng),
      conv2_(ps, "image_enc.conv2", cfg.feature_dim / 2, cfg.feature_dim, 3, 2, 1, rng),
      conv3_(ps, "image_enc.conv3", cfg.feature_dim, cfg.feature_dim, 3, 2, 1, rng),
      norm1_(ps, "image_enc.norm1", cfg.feature_dim / 2),
      norm2_(ps, "image_enc.norm2", cfg.feature_dim),
      norm3_(ps, "image_enc.norm3", cfg.feature_dim) {
    norm1_.enabled = cfg.encoder_norm;
    norm2_.enabled = cfg.encoder_norm;
    norm3_.enabled = cfg.encoder_norm;
}

Var ImageEncoder::encode(Tape& t, const Tensor& image) const {
    const std::size_t px = cfg_.image_px;
    if (image.rank() != 2 || image.rows() != px * px || image.cols() != 3) {
        throw std::invalid_argument("encode_image: image shape mismatch");
    }
    Var x = t.constant(image);
    std::size_t side = px;
    x = t.relu(norm1_.forward(t, conv1_.forward(t, x, side, side)));
    side = conv1_.out_side(side);
    x = t.relu(norm2_.forward(t, conv2_.forward(t, x, side, side)));
    side = conv2_.out_side(side);
    x = t.relu(norm3_.forward(t, conv3_.forward(t, x, side, side)));
    side = conv3_.out_side(side);
    if (side != cfg_.spatial_side()) {
        throw std::logic_error("encode_image: unexpected output side");
    }
    return x;  // [S*S, C]
}

ExpressionEncoder::ExpressionEncoder(nn::ParamStore& ps, const ModelConfig& cfg,
                                     std::size_t vocab_size, std::mt19937_64& rng)
    : cfg_(cfg),
      vocab_size_(vocab_size),
      token_embedding_(&ps.normal("expr_enc.token_embedding", {vocab_size, cfg.feature_dim},
                                  rng, 0.5)),
      position_embedding_(&ps.normal("expr_enc.position_embedding", {cfg.n_max, cfg.feature_dim},
                                     rng, 0.1)),
      block_(ps, "expr_enc.block", cfg.feature_dim, cfg.feature_dim % 4 == 0 ? 4 : 1,
             2 * cfg.feature_dim, rng),
      proj_(ps, "expr_enc.proj", cfg.feature_dim, cfg.feature_dim, rng) {}

WordFeatures ExpressionEncoder::encode(Tape& t, const std::vector<int>& token_ids) const {
    if (token_ids.size() > cfg_.n_max) {
        throw std::invalid_argument("encode_expression: sequence longer than n_max");
    }
    std::vector<std::size_t> ids;
    std::vector<std::uint8_t> mask;
    ids.reserve(cfg_.n_max);
    for (int id : token_ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab_size_) {
            throw std::out_of_range("encode_expression: token id outside vocabulary");
        }
        ids.push_back(static_cast<std::size_t>(id));
        mask.push_back(id != synth::vocab::kPad);
    }
    // pad to fixed length so the positional table and attention shapes are static
    while (ids.size() < cfg_.n_max) {
        ids.push_back(static_cast<std::size_t>(synth::vocab::kPad));
        mask.push_back(0);
    }
    std::vector<std::size_t> positions(cfg_.n_max);
    for (std::size_t i = 0; i < cfg_.n_max; ++i) positions[i] = i;

    Var tok = t.rows_gather(t.leaf(*token_embedding_), ids);
    Var pos = t.rows_gather(t.leaf(*position_embedding_), positions);
    Var x = block_.forward(t, t.add(tok, pos), mask);
    Var features = proj_.forward(t, x);
    WordFeatures out;
    out.features = features;
    out.cls = t.slice_rows(features, 0, 1);
    out.mask = std::move(mask);
    return out;
}

}  // namespace dmrn
