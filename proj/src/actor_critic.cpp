#include "pdvf/actor_critic.hpp"

#include <numbers>

namespace pdvf {

namespace {
constexpr float kLog2Pi = 1.8378770664093453f;
}

ActorCritic::ActorCritic(int state_dim, int action_dim, uint64_t seed, int extra_dim)
    : state_dim_(state_dim), action_dim_(action_dim), extra_dim_(extra_dim) {
    actor_spec_ = MlpSpec::make(state_dim + extra_dim, {64, 64}, action_dim, Act::Tanh);
    critic_spec_ = MlpSpec::make(state_dim + extra_dim, {64, 64}, 1, Act::Tanh);
    Rng rng(seed);
    init_mlp(params_, "actor", actor_spec_, rng, /*orthogonal=*/true, 0.01f);
    init_mlp(params_, "critic", critic_spec_, rng, /*orthogonal=*/true, 1.0f);
    params_.add_vector("actor.log_std", uint32_t(action_dim));
}

ActorCritic ActorCritic::from_params(ParamSetF params, int state_dim,
                                     int action_dim, int extra_dim) {
    ActorCritic ac;
    ac.state_dim_ = state_dim;
    ac.action_dim_ = action_dim;
    ac.extra_dim_ = extra_dim;
    ac.actor_spec_ = MlpSpec::make(state_dim + extra_dim, {64, 64}, action_dim, Act::Tanh);
    ac.critic_spec_ = MlpSpec::make(state_dim + extra_dim, {64, 64}, 1, Act::Tanh);
    ac.params_ = std::move(params);
    ac.params_.at("actor.log_std");  // presence check
    return ac;
}

MatF ActorCritic::mean_batch(const MatF& inputs) const {
    return mlp_eval(params_, "actor", actor_spec_, inputs);
}

VecF ActorCritic::value_batch(const MatF& inputs) const {
    return mlp_eval(params_, "critic", critic_spec_, inputs).col(0);
}

float ActorCritic::value(const VecF& input) const {
    return value_batch(MatF(input.transpose()))(0);
}

VecF ActorCritic::gaussian_logp(const MatF& means, const VecF& log_std,
                                const MatF& actions) {
    VecF out(means.rows());
    for (Eigen::Index r = 0; r < means.rows(); ++r) {
        float lp = 0.f;
        for (Eigen::Index k = 0; k < means.cols(); ++k) {
            float ls = log_std(k);
            float z = (actions(r, k) - means(r, k)) / std::exp(ls);
            lp += -0.5f * z * z - ls - 0.5f * kLog2Pi;
        }
        out(r) = lp;
    }
    return out;
}

ActorCritic::ActResult ActorCritic::act(const VecF& input, bool deterministic,
                                        Rng* rng) const {
    MatF in(1, input.size());
    in.row(0) = input.transpose();
    MatF mean = mean_batch(in);
    require(mean.allFinite(), "policy_act: non-finite actor output");
    VecF ls = log_std();
    ActResult res;
    res.action = mean.row(0).transpose();
    if (!deterministic) {
        require(rng, "policy_act: sampling requires an rng");
        for (Eigen::Index k = 0; k < res.action.size(); ++k)
            res.action(k) += std::exp(ls(k)) * float(rng->normal());
    }
    MatF arow(1, res.action.size());
    arow.row(0) = res.action.transpose();
    res.logp = gaussian_logp(mean, ls, arow)(0);
    res.value = value(input);
    require(std::isfinite(res.logp) && std::isfinite(res.value),
            "policy_act: non-finite output");
    return res;
}

}  // namespace pdvf
