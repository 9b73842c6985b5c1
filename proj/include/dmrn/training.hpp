#pragma once

// RMSProp training loop and evaluation over grounding instances. Batches
// accumulate gradients from per-instance rollouts; the box loss supervises
// every step (weighted toward later, more refined predictions) and the
// policy loss supervises every stop/continue decision.

#include <cstdint>
#include <map>
#include <vector>

#include "dmrn/model.hpp"

namespace dmrn {

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 8;
    double lr = 1e-4;
    std::size_t lr_halve_every = 10;  // epochs between halvings
    std::size_t t_max = 6;
    double gamma = 0.9;
    double lambda_box = 1.0;
    double lambda_policy = 0.5;
    double grad_clip = 5.0;
    std::uint64_t seed = 0;
    bool use_ultimate = true;
    bool use_immediate = true;
    bool box_loss_all_steps = true;
    bool policy_self_labels = false;
    bool detach_policy_inputs = true;
};

class RMSProp {
  public:
    explicit RMSProp(nn::ParamStore& ps, double rho = 0.9, double eps = 1e-8);
    void step(double lr);
    std::vector<Tensor>& caches() { return caches_; }
    const std::vector<Tensor>& caches() const { return caches_; }

  private:
    nn::ParamStore* ps_;
    double rho_, eps_;
    std::vector<Tensor> caches_;
};

struct EpochStats {
    double loss = 0.0;      // mean per-instance loss
    double accuracy = 0.0;  // fraction with final IoU >= 0.5
    double mean_steps = 0.0;  // mean step at which the policy first chose stop
    double lr = 0.0;
};

struct EvalStats {
    double accuracy = 0.0;
    double mean_steps = 0.0;
    std::size_t count = 0;
    std::map<int, double> accuracy_by_hops;
    std::map<int, double> mean_steps_by_hops;
};

// lr * 0.5^floor((epoch - 1) / lr_halve_every); epoch is 1-based.
double scheduled_lr(const TrainConfig& cfg, std::size_t epoch);

RolloutOptions training_rollout_options(const TrainConfig& cfg);

// Builds the loss graph for one instance on the given tape. The rollout is
// returned through *out when provided.
ag::Var instance_loss(const Model& model, ag::Tape& t, const synth::GroundingInstance& inst,
                      const TrainConfig& cfg, RolloutResult* out = nullptr);

// One pass over data in shuffled order (shuffle derived from cfg.seed and
// epoch). epoch is 1-based and selects the learning rate.
EpochStats train_epoch(Model& model, RMSProp& opt,
                       const std::vector<synth::GroundingInstance>& data,
                       const TrainConfig& cfg, std::size_t epoch);

EvalStats evaluate(const Model& model, const std::vector<synth::GroundingInstance>& data,
                   const RolloutOptions& opts);

}  // namespace dmrn
