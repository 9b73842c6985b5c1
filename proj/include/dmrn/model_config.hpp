#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace dmrn {

// Dimensions of the reasoning network. feature_dim is shared between the
// visual channels and the word embedding so the score/attention dot
// products type-check. Three stride-2 conv blocks fix spatial_side() at
// image_px / 8.
struct ModelConfig {
    std::size_t feature_dim = 64;
    std::size_t n_max = 20;
    std::size_t image_px = 64;
    std::size_t fusion_layers = 2;
    std::size_t fusion_heads = 4;
    std::size_t fusion_ff_dim = 128;
    std::size_t attn_hidden = 64;
    std::size_t policy_hidden = 64;
    std::size_t anchors_per_cell = 3;
    bool encoder_norm = true;

    std::size_t spatial_side() const { return image_px / 8; }
    std::size_t cell_px() const { return image_px / spatial_side(); }

    // Anchor (width, height) priors, sized to the generator's small/large
    // object extents.
    std::vector<std::pair<double, double>> anchor_dims() const {
        const double c = static_cast<double>(cell_px());
        std::vector<std::pair<double, double>> dims = {
            {c / 2.0, c / 2.0}, {0.75 * c, 0.75 * c}, {c, c}};
        dims.resize(anchors_per_cell, {c, c});
        return dims;
    }
};

}  // namespace dmrn
