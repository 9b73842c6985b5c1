#include "dmrn/fusion.hpp"

#include <stdexcept>

namespace dmrn {

using ag::Tape;
using ag::Var;

Fusion::Fusion(nn::ParamStore& ps, const ModelConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg),
      encoder_(ps, "fusion.encoder", cfg.fusion_layers, cfg.feature_dim, cfg.fusion_heads,
               cfg.fusion_ff_dim, rng),
      visual_pos_(&ps.normal("fusion.visual_pos",
                             {cfg.spatial_side() * cfg.spatial_side(), cfg.feature_dim}, rng,
                             0.1)),
      proj_(ps, "fusion.proj", 2 * cfg.feature_dim, cfg.feature_dim, rng),
      out_norm_(ps, "fusion.out_norm", cfg.feature_dim) {}

Var Fusion::step(Tape& t, Var weighted_words, const std::vector<std::uint8_t>& word_mask,
                 Var prev_visual) const {
    const std::size_t n = t.val(weighted_words).rows();
    const std::size_t s2 = cfg_.spatial_side() * cfg_.spatial_side();
    if (t.val(weighted_words).cols() != cfg_.feature_dim ||
        t.val(prev_visual).rows() != s2 || t.val(prev_visual).cols() != cfg_.feature_dim ||
        word_mask.size() != n) {
        throw std::invalid_argument("fuse_step: dimension mismatch");
    }
    Var vis_tokens = t.add(prev_visual, t.leaf(*visual_pos_));
    Var seq = t.concat_rows(weighted_words, vis_tokens);
    std::vector<std::uint8_t> key_valid(word_mask);
    key_valid.insert(key_valid.end(), s2, 1);
    Var fused = encoder_.forward(t, seq, key_valid);
    Var vis_out = t.slice_rows(fused, n, s2);             // word segment is discarded
    Var merged = t.concat_cols(vis_out, prev_visual);     // [S*S, 2C]
    return t.relu(out_norm_.forward(t, proj_.forward(t, merged)));
}

}  // namespace dmrn
