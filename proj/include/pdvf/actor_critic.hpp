#pragma once

#include "pdvf/nets.hpp"

namespace pdvf {

// Diagonal-Gaussian policy with a separate critic. Both are two hidden
// layers of 64 with tanh after each and a linear head; no weight sharing.
// The log-std is a state-independent parameter vector.
class ActorCritic {
public:
    ActorCritic() = default;
    // extra_dim widens the first layer (the dynamics-conditioned variant).
    ActorCritic(int state_dim, int action_dim, uint64_t seed, int extra_dim = 0);

    static ActorCritic from_params(ParamSetF params, int state_dim,
                                   int action_dim, int extra_dim = 0);

    int input_dim() const { return state_dim_ + extra_dim_; }
    int state_dim() const { return state_dim_; }
    int action_dim() const { return action_dim_; }
    ParamSetF& params() { return params_; }
    const ParamSetF& params() const { return params_; }
    const MlpSpec& actor_spec() const { return actor_spec_; }
    const MlpSpec& critic_spec() const { return critic_spec_; }

    struct ActResult {
        VecF action;
        float logp = 0.f;
        float value = 0.f;
    };

    // deterministic=true returns the mean action; otherwise samples from
    // N(mean, exp(log_std)^2). logp is the diagonal-Gaussian log density of
    // the returned action.
    ActResult act(const VecF& input, bool deterministic, Rng* rng) const;

    // Batched mean / value heads (one input per row), gradient-free.
    MatF mean_batch(const MatF& inputs) const;
    VecF value_batch(const MatF& inputs) const;
    float value(const VecF& input) const;

    VecF log_std() const { return params_.at("actor.log_std").value.row(0).transpose(); }

    // Diagonal-Gaussian log density of each action row under the mean rows.
    static VecF gaussian_logp(const MatF& means, const VecF& log_std, const MatF& actions);

private:
    int state_dim_ = 0;
    int action_dim_ = 0;
    int extra_dim_ = 0;
    MlpSpec actor_spec_;
    MlpSpec critic_spec_;
    ParamSetF params_;
};

}  // namespace pdvf
