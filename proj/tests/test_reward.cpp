#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>

#include "dmrn/reward.hpp"
#include "grad_utils.hpp"

using namespace dmrn;
using ag::Tape;
using ag::Var;
using testutil::randn;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.feature_dim = 8;
    cfg.image_px = 16;
    cfg.policy_hidden = 8;
    return cfg;
}

}  // namespace

TEST_CASE("ultimate reward thresholds at IoU 0.5") {
    CHECK(ultimate_reward(0.5) == 1);
    CHECK(ultimate_reward(0.9) == 1);
    CHECK(ultimate_reward(0.4999999) == -1);
    CHECK(ultimate_reward(0.0) == -1);
}

TEST_CASE("immediate reward thresholds at zero progress") {
    CHECK(immediate_reward(1.0, 0.5) == 1);
    CHECK(immediate_reward(0.5, 0.5) == 1);  // ties count as progress
    CHECK(immediate_reward(0.4999, 0.5) == -1);
    // first step compares against -inf and always rewards
    CHECK(immediate_reward(-100.0, -std::numeric_limits<double>::infinity()) == 1);
}

TEST_CASE("gate truth table: continue only when both rewards are positive") {
    for (int r_ult : {-1, 1}) {
        for (int r_imm : {-1, 1}) {
            const bool expect = (r_ult == 1 && r_imm == 1);
            CHECK(should_continue(r_ult + r_imm) == expect);
        }
    }
}

TEST_CASE("step weights: hand example, tail identity, linearity") {
    const auto w = step_weights({2, 2, 2}, 0.9);
    CHECK(w[0] == doctest::Approx(5.42).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(3.8).epsilon(1e-12));
    CHECK(w[2] == doctest::Approx(2.0).epsilon(1e-12));

    std::mt19937_64 rng(51);
    std::uniform_int_distribution<int> r(-2, 2);
    std::uniform_int_distribution<int> len(1, 8);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = len(rng);
        std::vector<int> a(n), b(n), s(n);
        for (int i = 0; i < n; ++i) {
            a[i] = r(rng);
            b[i] = r(rng);
            s[i] = a[i] + b[i];
        }
        const auto wa = step_weights(a, 0.9);
        const auto wb = step_weights(b, 0.9);
        const auto ws = step_weights(s, 0.9);
        CHECK(wa.back() == doctest::Approx(static_cast<double>(a.back())));  // tail identity
        for (int i = 0; i < n; ++i) {
            CHECK(ws[i] == doctest::Approx(wa[i] + wb[i]).epsilon(1e-12));  // linearity
        }
        // direct-sum oracle for one random position
        const int pos = trial % n;
        double direct = 0.0;
        for (int tstep = pos; tstep < n; ++tstep) {
            direct += std::pow(0.9, tstep - pos) * a[tstep];
        }
        CHECK(wa[pos] == doctest::Approx(direct).epsilon(1e-9));
    }
}

TEST_CASE("zero-initialized policy is uniform and stops on ties") {
    const ModelConfig cfg = tiny_config();
    nn::ParamStore ps;
    std::mt19937_64 rng(53);
    PolicyParams policy(ps, cfg, rng);
    Tape t;
    Var visual = t.constant(randn({4, cfg.feature_dim}, rng));
    Var cls = t.constant(randn({1, cfg.feature_dim}, rng));
    const PolicyDecision dec = decide(t, visual, cls, policy);
    CHECK(t.val(dec.probs).at(0, kActionStop) == doctest::Approx(0.5));
    CHECK(t.val(dec.probs).at(0, kActionContinue) == doctest::Approx(0.5));
    CHECK(dec.action == kActionStop);
}

TEST_CASE("relevance score matches a hand loop") {
    std::mt19937_64 rng(55);
    const Tensor words = randn({3, 4}, rng);
    const Tensor weights = randn({3}, rng);
    const Tensor visual = randn({5, 4}, rng);
    double expect = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
        double attended = 0.0;
        for (std::size_t n = 0; n < 3; ++n) attended += weights[n] * words.at(n, j);
        double pooled = 0.0;
        for (std::size_t i = 0; i < 5; ++i) pooled += visual.at(i, j) / 5.0;
        expect += attended * pooled;
    }
    Tape t;
    Var s = relevance_score(t, t.constant(words), t.constant(weights), t.constant(visual));
    CHECK(t.val(s)[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("policy loss of a uniform policy is the weighted log 2 sum") {
    const ModelConfig cfg = tiny_config();
    nn::ParamStore ps;
    std::mt19937_64 rng(57);
    PolicyParams policy(ps, cfg, rng);  // w2/b2 zero so logits are exactly 0
    Tape t;
    Var visual = t.constant(randn({4, cfg.feature_dim}, rng));
    Var cls = t.constant(randn({1, cfg.feature_dim}, rng));
    std::vector<Var> logits;
    for (int i = 0; i < 3; ++i) logits.push_back(decide(t, visual, cls, policy).logits);
    Var loss = policy_loss(t, logits, {1, 0, 1}, {2.0, 0.5, -1.0});
    CHECK(t.val(loss)[0] == doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("policy gradients match finite differences") {
    const ModelConfig cfg = tiny_config();
    nn::ParamStore ps;
    std::mt19937_64 rng(59);
    PolicyParams policy(ps, cfg, rng);
    // move off the zero init so the check exercises a generic point
    std::normal_distribution<double> d(0.0, 0.3);
    for (auto& v : policy.w2->value.data) v = d(rng);
    for (auto& v : policy.b2->value.data) v = d(rng);

    const Tensor visual = randn({4, cfg.feature_dim}, rng, 0.5);
    const Tensor cls = randn({1, cfg.feature_dim}, rng, 0.5);

    testutil::fd_check_all(ps, [&](Tape& t) {
        const PolicyDecision dec =
            decide(t, t.constant(visual), t.constant(cls), policy);
        return policy_loss(t, {dec.logits}, {kActionContinue}, {1.7});
    });
}

TEST_CASE("detached policy inputs block gradient flow into the trunk") {
    const ModelConfig cfg = tiny_config();
    nn::ParamStore ps;
    std::mt19937_64 rng(61);
    PolicyParams policy(ps, cfg, rng);
    ag::Parameter trunk("trunk", randn({4, cfg.feature_dim}, rng));
    trunk.zero_grad();
    Tape t;
    Var cls = t.constant(randn({1, cfg.feature_dim}, rng));
    const PolicyDecision dec = decide(t, t.leaf(trunk), cls, policy, true);
    t.backward(policy_loss(t, {dec.logits}, {kActionStop}, {1.0}));
    for (double g : trunk.grad.data) CHECK(g == 0.0);
}
