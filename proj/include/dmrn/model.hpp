#pragma once

// The full reasoning network and its step loop. A rollout runs the
// attend / fuse / score / decide cycle over one instance and returns
// everything the losses and metrics need.

#include <cstdint>
#include <random>
#include <vector>

#include "dmrn/attention.hpp"
#include "dmrn/encoders.hpp"
#include "dmrn/fusion.hpp"
#include "dmrn/grounding.hpp"
#include "dmrn/model_config.hpp"
#include "dmrn/reward.hpp"
#include "dmrn/synth_env.hpp"

namespace dmrn {

enum class StopMode {
    dynamic,       // stop when the policy says stop
    fixed,         // run exactly fixed_k steps, policy is not consulted
    rollout_full,  // run t_max steps regardless of actions (training)
};

struct RolloutOptions {
    StopMode stop_mode = StopMode::dynamic;
    std::size_t t_max = 6;
    std::size_t fixed_k = 1;
    bool use_ultimate = true;   // include the final-IoU reward in r^t
    bool use_immediate = true;  // include the score-progress reward in r^t
    bool detach_policy_inputs = false;
    bool self_labels = false;         // supervise with the taken actions instead of the gate
    bool head_out_each_step = false;  // keep the box head output at every step
};

struct StepTrace {
    Tensor history;       // h^t, [n_max]
    Tensor attention;     // w^t, [n_max]
    Tensor policy_probs;  // [1, 2]
    int action = kActionStop;
    double score = 0.0;
    int r_immediate = 0;
    int r_ultimate = 0;
    BoundingBox box;  // decoded at this step (filled when tracing)
    double iou = 0.0;
};

struct RolloutResult {
    std::size_t steps_executed = 0;
    std::size_t first_stop_step = 0;  // step at which the policy first chose stop
    GroundingPrediction prediction;   // decoded at the last executed step
    double iou = 0.0;

    // Per executed step; rewards are the sum of the enabled signals and
    // labels the resulting continue/stop supervision.
    std::vector<ag::Var> step_logits;
    std::vector<int> labels;
    std::vector<int> rewards;
    std::vector<double> step_scores;

    ag::Var head_out;                // box head output at the final step
    std::vector<ag::Var> head_outs;  // every step, when requested
    std::vector<StepTrace> trace;    // when requested
};

class Model {
  public:
    Model(const ModelConfig& cfg, std::uint64_t init_seed);

    nn::ParamStore& params() { return ps_; }
    const nn::ParamStore& params() const { return ps_; }
    const ModelConfig& config() const { return cfg_; }
    const GroundingHead& grounding() const { return grounding_; }

    RolloutResult rollout(ag::Tape& t, const synth::GroundingInstance& inst,
                          const RolloutOptions& opts, bool keep_trace = false) const;

  private:
    ModelConfig cfg_;
    nn::ParamStore ps_;
    std::mt19937_64 init_rng_;
    ImageEncoder image_enc_;
    ExpressionEncoder expr_enc_;
    AttentionParams attn_;
    Fusion fusion_;
    GroundingHead grounding_;
    PolicyParams policy_;
};

}  // namespace dmrn
