#include "dmrn/grounding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dmrn {

using ag::Tape;
using ag::Var;

AnchorSet::AnchorSet(const ModelConfig& cfg)
    : side_(cfg.spatial_side()),
      per_cell_(cfg.anchors_per_cell),
      stride_(static_cast<double>(cfg.cell_px())),
      dims_(cfg.anchor_dims()) {}

BoundingBox AnchorSet::box_at(std::size_t row, std::size_t col, std::size_t anchor) const {
    const double cx = (static_cast<double>(col) + 0.5) * stride_;
    const double cy = (static_cast<double>(row) + 0.5) * stride_;
    const auto [w, h] = dims_[anchor];
    return {cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0};
}

AnchorPlacement AnchorSet::placement(std::size_t flat_index) const {
    AnchorPlacement p;
    p.flat_index = flat_index;
    p.anchor = flat_index % per_cell_;
    const std::size_t cell = flat_index / per_cell_;
    p.col = cell % side_;
    p.row = cell / side_;
    return p;
}

AnchorPlacement AnchorSet::assign(const BoundingBox& gt) const {
    std::size_t best = 0;
    double best_iou = -1.0;
    for (std::size_t i = 0; i < count(); ++i) {
        const AnchorPlacement p = placement(i);
        const double v = iou(box_at(p.row, p.col, p.anchor), gt);
        if (v > best_iou) {
            best_iou = v;
            best = i;
        }
    }
    return placement(best);
}

GroundingHead::GroundingHead(nn::ParamStore& ps, const ModelConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg),
      anchors_(cfg),
      hidden_(ps, "grounding.hidden", cfg.feature_dim, cfg.feature_dim, rng),
      out_(ps, "grounding.out", cfg.feature_dim, cfg.anchors_per_cell * 5, rng) {}

// Output column layout per cell: [conf_0 .. conf_{A-1}, then 4 offsets per
// anchor]. Keeping the confidences contiguous lets a reshape produce the
// flat (cell, anchor) logit vector directly.
Var GroundingHead::forward(Tape& t, Var visual) const {
    return out_.forward(t, t.relu(hidden_.forward(t, visual)));
}

Var GroundingHead::confidence_logits(Tape& t, Var head_out) const {
    const std::size_t a = anchors_.per_cell();
    Var conf = t.slice_cols(head_out, 0, a);  // [S*S, A]
    return t.reshape(conf, {1, anchors_.count()});
}

Var GroundingHead::offsets_at(Tape& t, Var head_out, const AnchorPlacement& p) const {
    const std::size_t a = anchors_.per_cell();
    const std::size_t cell = p.row * anchors_.side() + p.col;
    Var row = t.slice_rows(head_out, cell, 1);
    return t.reshape(t.slice_cols(row, a + p.anchor * 4, 4), {4});
}

static double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

GroundingPrediction GroundingHead::decode(const Tensor& head_out, double image_px) const {
    const std::size_t a = anchors_.per_cell();
    if (head_out.rank() != 2 || head_out.rows() != anchors_.side() * anchors_.side() ||
        head_out.cols() != a * 5) {
        throw std::invalid_argument("decode: head output shape mismatch");
    }
    std::size_t best = 0;
    double best_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < anchors_.count(); ++i) {
        const double logit = head_out.at(i / a, i % a);
        if (logit > best_logit) {
            best_logit = logit;
            best = i;
        }
    }
    double denom = 0.0;
    for (std::size_t i = 0; i < anchors_.count(); ++i) {
        denom += std::exp(head_out.at(i / a, i % a) - best_logit);
    }

    GroundingPrediction pred;
    pred.placement = anchors_.placement(best);
    pred.confidence = 1.0 / denom;
    const AnchorPlacement& p = pred.placement;
    const std::size_t cell = p.row * anchors_.side() + p.col;
    const double tx = head_out.at(cell, a + p.anchor * 4 + 0);
    const double ty = head_out.at(cell, a + p.anchor * 4 + 1);
    const double tw = head_out.at(cell, a + p.anchor * 4 + 2);
    const double th = head_out.at(cell, a + p.anchor * 4 + 3);
    const double s = anchors_.stride();
    const auto [aw, ah] = anchors_.dims()[p.anchor];
    const double cx = (static_cast<double>(p.col) + sigmoid(tx)) * s;
    const double cy = (static_cast<double>(p.row) + sigmoid(ty)) * s;
    const double w = aw * std::exp(tw);
    const double h = ah * std::exp(th);
    pred.box = BoundingBox{cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0}.clamped(
        image_px, image_px);
    return pred;
}

Tensor GroundingHead::encode_gt(const BoundingBox& gt, const AnchorPlacement& p) const {
    const double s = anchors_.stride();
    const auto [aw, ah] = anchors_.dims()[p.anchor];
    const double eps = 1e-6;
    auto logit = [eps](double v) {
        v = std::clamp(v, eps, 1.0 - eps);
        return std::log(v / (1.0 - v));
    };
    Tensor t({4});
    t[0] = logit(gt.cx() / s - static_cast<double>(p.col));
    t[1] = logit(gt.cy() / s - static_cast<double>(p.row));
    t[2] = std::log(std::max(gt.width(), eps) / aw);
    t[3] = std::log(std::max(gt.height(), eps) / ah);
    return t;
}

}  // namespace dmrn
