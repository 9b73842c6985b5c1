#pragma once

// Anchor-based box head over the fused visual map. Each grid cell carries a
// few anchor boxes; the head predicts a confidence logit plus four offsets
// per anchor and the decoder picks the most confident placement.

#include <cstdint>
#include <random>
#include <vector>

#include "dmrn/box.hpp"
#include "dmrn/model_config.hpp"
#include "dmrn/nn.hpp"

namespace dmrn {

struct AnchorPlacement {
    std::size_t row = 0, col = 0, anchor = 0;
    std::size_t flat_index = 0;  // row-major over (row, col, anchor)
};

class AnchorSet {
  public:
    explicit AnchorSet(const ModelConfig& cfg);

    std::size_t side() const { return side_; }
    std::size_t per_cell() const { return per_cell_; }
    std::size_t count() const { return side_ * side_ * per_cell_; }
    double stride() const { return stride_; }
    const std::vector<std::pair<double, double>>& dims() const { return dims_; }

    // Anchor box centered in its cell, in image pixels.
    BoundingBox box_at(std::size_t row, std::size_t col, std::size_t anchor) const;
    AnchorPlacement placement(std::size_t flat_index) const;

    // Placement whose centered anchor box best overlaps gt; ties break on
    // the smallest flat index.
    AnchorPlacement assign(const BoundingBox& gt) const;

  private:
    std::size_t side_, per_cell_;
    double stride_;
    std::vector<std::pair<double, double>> dims_;
};

struct GroundingPrediction {
    BoundingBox box;
    AnchorPlacement placement;
    double confidence = 0.0;  // softmax prob over all placements
};

class GroundingHead {
  public:
    GroundingHead(nn::ParamStore& ps, const ModelConfig& cfg, std::mt19937_64& rng);

    // visual [S*S, C] -> [S*S, A*5]; per anchor: (conf, tx, ty, tw, th).
    ag::Var forward(ag::Tape& t, ag::Var visual) const;

    const AnchorSet& anchors() const { return anchors_; }

    // All S*S*A confidence logits as one row vector [1, S*S*A].
    ag::Var confidence_logits(ag::Tape& t, ag::Var head_out) const;
    // The 4 offsets at one placement, as a vector [4].
    ag::Var offsets_at(ag::Tape& t, ag::Var head_out, const AnchorPlacement& p) const;

    GroundingPrediction decode(const Tensor& head_out, double image_px) const;

    // Offset targets (tx, ty, tw, th) reproducing gt at placement p.
    Tensor encode_gt(const BoundingBox& gt, const AnchorPlacement& p) const;

  private:
    ModelConfig cfg_;
    AnchorSet anchors_;
    nn::Linear hidden_, out_;
};

}  // namespace dmrn
