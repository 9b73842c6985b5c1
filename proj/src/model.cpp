#include "dmrn/model.hpp"

#include <algorithm>
#include <limits>

namespace dmrn {

using ag::Tape;
using ag::Var;

Model::Model(const ModelConfig& cfg, std::uint64_t init_seed)
    : cfg_(cfg),
      ps_(),
      init_rng_(init_seed),
      image_enc_(ps_, cfg_, init_rng_),
      expr_enc_(ps_, cfg_, static_cast<std::size_t>(synth::vocab::size()), init_rng_),
      attn_(ps_, cfg_, init_rng_),
      fusion_(ps_, cfg_, init_rng_),
      grounding_(ps_, cfg_, init_rng_),
      policy_(ps_, cfg_, init_rng_) {}

RolloutResult Model::rollout(Tape& t, const synth::GroundingInstance& inst,
                             const RolloutOptions& opts, bool keep_trace) const {
    const Tensor image = synth::render(inst.scene, static_cast<int>(cfg_.image_px));
    Var visual = image_enc_.encode(t, image);
    const WordFeatures wf = expr_enc_.encode(t, inst.token_ids);

    const std::size_t max_steps =
        opts.stop_mode == StopMode::fixed ? std::max<std::size_t>(opts.fixed_k, 1)
                                          : std::max<std::size_t>(opts.t_max, 1);
    const bool want_step_heads = opts.head_out_each_step || keep_trace;

    RolloutResult res;
    std::vector<Var> weight_history;
    std::vector<int> immediate;
    std::vector<int> actions;
    double prev_score = -std::numeric_limits<double>::infinity();
    bool stopped = false;

    for (std::size_t step = 1; step <= max_steps; ++step) {
        Var h = history_vector(t, weight_history, cfg_.n_max);
        Var w = attention_scores(t, wf.features, wf.mask, visual, h, attn_);
        Var weighted = weight_words(t, wf.features, w);
        Var prev_visual = visual;
        visual = fusion_.step(t, weighted, wf.mask, visual);
        weight_history.push_back(w);

        // score the attended words against the visual state they were
        // selected from; the post-fusion map self-boosts whatever was just
        // injected, and the resulting sawtooth masks real progress
        Var score_v = relevance_score(t, wf.features, w, prev_visual);
        const double score = t.val(score_v)[0];
        const int r_imm = immediate_reward(score, prev_score);
        prev_score = score;
        res.step_scores.push_back(score);
        immediate.push_back(r_imm);

        int action = kActionContinue;
        Tensor probs;
        if (opts.stop_mode != StopMode::fixed) {
            PolicyDecision dec = decide(t, visual, wf.cls, policy_, opts.detach_policy_inputs);
            res.step_logits.push_back(dec.logits);
            action = dec.action;
            actions.push_back(action);
            if (keep_trace) probs = t.val(dec.probs);
        }
        if (want_step_heads) res.head_outs.push_back(grounding_.forward(t, visual));
        if (keep_trace) {
            StepTrace st;
            st.history = t.val(h);
            st.attention = t.val(w);
            st.policy_probs = probs;
            st.action = action;
            st.score = score;
            st.r_immediate = r_imm;
            st.box = grounding_.decode(t.val(res.head_outs.back()),
                                       static_cast<double>(cfg_.image_px))
                         .box;
            st.iou = iou(st.box, inst.gt_box);
            res.trace.push_back(std::move(st));
        }
        ++res.steps_executed;
        if (opts.stop_mode == StopMode::dynamic && action == kActionStop) {
            stopped = true;
            break;
        }
    }

    res.head_out =
        want_step_heads ? res.head_outs.back() : grounding_.forward(t, visual);
    res.prediction = grounding_.decode(t.val(res.head_out), static_cast<double>(cfg_.image_px));
    res.iou = iou(res.prediction.box, inst.gt_box);
    const int r_ult = ultimate_reward(res.iou);

    bool gate_stopped = false;
    for (std::size_t i = 0; i < res.steps_executed; ++i) {
        const int r = (opts.use_ultimate ? r_ult : 0) + (opts.use_immediate ? immediate[i] : 0);
        res.rewards.push_back(r);
        int label;
        if (opts.self_labels && i < actions.size()) {
            label = actions[i];
        } else {
            // stop is absorbing: once the gate first signals stop the episode
            // is over, so later steps keep the stop label even when the score
            // recovers
            label = should_continue(r) ? kActionContinue : kActionStop;
            if (label == kActionStop) gate_stopped = true;
            if (gate_stopped) label = kActionStop;
        }
        res.labels.push_back(label);
        if (keep_trace) res.trace[i].r_ultimate = opts.use_ultimate ? r_ult : 0;
    }

    if (stopped) {
        res.first_stop_step = res.steps_executed;
    } else if (!actions.empty()) {
        res.first_stop_step = max_steps;
        for (std::size_t i = 0; i < actions.size(); ++i) {
            if (actions[i] == kActionStop) {
                res.first_stop_step = i + 1;
                break;
            }
        }
    } else {
        res.first_stop_step = res.steps_executed;
    }
    return res;
}

}  // namespace dmrn
