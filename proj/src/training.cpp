#include "dmrn/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace dmrn {

using ag::Tape;
using ag::Var;

RMSProp::RMSProp(nn::ParamStore& ps, double rho, double eps)
    : ps_(&ps), rho_(rho), eps_(eps) {
    caches_.reserve(ps.count());
    for (const auto* p : ps.all()) caches_.emplace_back(p->value.shape);
}

void RMSProp::step(double lr) {
    auto& params = ps_->all();
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        auto& c = caches_[i];
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double g = p.grad[j];
            c[j] = rho_ * c[j] + (1.0 - rho_) * g * g;
            p.value[j] -= lr * g / (std::sqrt(c[j]) + eps_);
        }
    }
}

double scheduled_lr(const TrainConfig& cfg, std::size_t epoch) {
    const std::size_t halvings = cfg.lr_halve_every ? (epoch - 1) / cfg.lr_halve_every : 0;
    return cfg.lr * std::pow(0.5, static_cast<double>(halvings));
}

RolloutOptions training_rollout_options(const TrainConfig& cfg) {
    RolloutOptions opts;
    opts.stop_mode = StopMode::rollout_full;
    opts.t_max = cfg.t_max;
    opts.use_ultimate = cfg.use_ultimate;
    opts.use_immediate = cfg.use_immediate;
    opts.self_labels = cfg.policy_self_labels;
    opts.detach_policy_inputs = cfg.detach_policy_inputs;
    opts.head_out_each_step = cfg.box_loss_all_steps;
    return opts;
}

static Var box_loss_at(const Model& model, Tape& t, Var head_out,
                       const synth::GroundingInstance& inst) {
    const auto& head = model.grounding();
    const AnchorPlacement p = head.anchors().assign(inst.gt_box);
    Var conf = t.reshape(head.confidence_logits(t, head_out), {head.anchors().count()});
    Var ce = t.cross_entropy_logits(conf, p.flat_index);
    Var off = head.offsets_at(t, head_out, p);
    return t.add(ce, t.mse(off, head.encode_gt(inst.gt_box, p)));
}

Var instance_loss(const Model& model, Tape& t, const synth::GroundingInstance& inst,
                  const TrainConfig& cfg, RolloutResult* out) {
    RolloutResult res = model.rollout(t, inst, training_rollout_options(cfg));

    Var box;
    if (cfg.box_loss_all_steps) {
        // later predictions should be the most refined ones, so each step's
        // box loss is weighted by its step index
        box = t.constant(Tensor::scalar(0.0));
        double wsum = 0.0;
        for (std::size_t i = 0; i < res.head_outs.size(); ++i) {
            const double bw = static_cast<double>(i + 1);
            box = t.add(box, t.scale(box_loss_at(model, t, res.head_outs[i], inst), bw));
            wsum += bw;
        }
        box = t.scale(box, 1.0 / wsum);
    } else {
        box = box_loss_at(model, t, res.head_out, inst);
    }

    // Shape the signed discounted returns into CE coefficients:
    //  - a negative return means the gate label pointed the wrong way for
    //    that step, so the label flips to the other action and the magnitude
    //    is kept (bounded form of a signed CE weight)
    //  - steps after the first stop label would never execute, so they carry
    //    no weight
    //  - the lone stop step is rescaled to balance the continue mass so it
    //    is not drowned out
    std::vector<double> weights = step_weights(res.rewards, cfg.gamma);
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] < 0.0) {
            weights[i] = -weights[i];
            res.labels[i] = res.labels[i] == kActionStop ? kActionContinue : kActionStop;
        }
    }
    bool seen_stop = false;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (seen_stop) weights[i] = 0.0;
        if (res.labels[i] == kActionStop) seen_stop = true;
    }
    double continue_mass = 0.0, stop_mass = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        (res.labels[i] == kActionContinue ? continue_mass : stop_mass) += weights[i];
    }
    if (continue_mass > 0.0 && stop_mass > 0.0) {
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (res.labels[i] == kActionStop) weights[i] *= continue_mass / stop_mass;
        }
    }
    Var policy = policy_loss(t, res.step_logits, res.labels, weights);

    Var loss = t.add(t.scale(box, cfg.lambda_box), t.scale(policy, cfg.lambda_policy));
    if (out) *out = std::move(res);
    return loss;
}

EpochStats train_epoch(Model& model, RMSProp& opt,
                       const std::vector<synth::GroundingInstance>& data,
                       const TrainConfig& cfg, std::size_t epoch) {
    if (data.empty()) throw std::invalid_argument("train_epoch: empty dataset");
    const double lr = scheduled_lr(cfg, epoch);

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(synth::mix_seed(cfg.seed, 0xE70C0000ull + epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochStats stats;
    stats.lr = lr;
    double loss_sum = 0.0, steps_sum = 0.0;
    std::size_t correct = 0;

    const std::size_t bs = std::max<std::size_t>(cfg.batch_size, 1);
    for (std::size_t begin = 0; begin < order.size(); begin += bs) {
        const std::size_t end = std::min(begin + bs, order.size());
        const double inv_n = 1.0 / static_cast<double>(end - begin);
        for (std::size_t i = begin; i < end; ++i) {
            const auto& inst = data[order[i]];
            Tape t;
            RolloutResult res;
            Var loss = instance_loss(model, t, inst, cfg, &res);
            const double v = t.val(loss)[0];
            if (!std::isfinite(v)) {
                throw std::runtime_error("train_epoch: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", instance seed " +
                                         std::to_string(inst.seed));
            }
            t.backward(t.scale(loss, inv_n));
            loss_sum += v;
            steps_sum += static_cast<double>(res.first_stop_step);
            if (res.iou >= 0.5) ++correct;
        }
        model.params().clip_grads(cfg.grad_clip);
        opt.step(lr);
        model.params().zero_grads();
    }

    const double n = static_cast<double>(data.size());
    stats.loss = loss_sum / n;
    stats.accuracy = static_cast<double>(correct) / n;
    stats.mean_steps = steps_sum / n;
    return stats;
}

EvalStats evaluate(const Model& model, const std::vector<synth::GroundingInstance>& data,
                   const RolloutOptions& opts) {
    EvalStats stats;
    std::map<int, std::size_t> hop_count, hop_correct;
    std::map<int, double> hop_steps;
    for (const auto& inst : data) {
        Tape t;
        RolloutResult res = model.rollout(t, inst, opts);
        const bool ok = res.iou >= 0.5;
        stats.mean_steps += static_cast<double>(res.steps_executed);
        stats.accuracy += ok ? 1.0 : 0.0;
        ++hop_count[inst.hop_count];
        if (ok) ++hop_correct[inst.hop_count];
        hop_steps[inst.hop_count] += static_cast<double>(res.steps_executed);
    }
    stats.count = data.size();
    if (stats.count) {
        stats.accuracy /= static_cast<double>(stats.count);
        stats.mean_steps /= static_cast<double>(stats.count);
    }
    for (const auto& [hops, n] : hop_count) {
        stats.accuracy_by_hops[hops] =
            static_cast<double>(hop_correct[hops]) / static_cast<double>(n);
        stats.mean_steps_by_hops[hops] = hop_steps[hops] / static_cast<double>(n);
    }
    return stats;
}

}  // namespace dmrn
