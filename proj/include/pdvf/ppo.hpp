#pragma once

#include "pdvf/actor_critic.hpp"
#include "pdvf/adam.hpp"
#include "pdvf/rollout.hpp"

#include <deque>
#include <optional>

namespace pdvf {

struct PPOConfig {
    float lr = 3e-4f;
    float entropy_coef = 0.0f;
    float value_coef = 0.5f;
    int ppo_epochs = 10;
    int rollout_steps = 2048;
    int minibatches = 32;
    float gamma = 0.99f;
    float gae_lambda = 0.95f;
    float clip_ratio = 0.2f;
    int64_t total_steps = 300000;
    bool linear_lr_decay = true;
    int checkpoint_count = 5;
    float max_grad_norm = 0.5f;

    void validate() const {
        require(gamma > 0 && gamma <= 1, "PPOConfig: gamma must be in (0,1]");
        require(gae_lambda > 0 && gae_lambda <= 1, "PPOConfig: gae_lambda must be in (0,1]");
        require(minibatches > 0 && rollout_steps % minibatches == 0,
                "PPOConfig: minibatches must divide rollout_steps");
        require(checkpoint_count >= 1, "PPOConfig: checkpoint_count >= 1");
    }
};

struct RolloutBuffer {
    MatF states;   // T x state_dim (conditioning included)
    MatF actions;  // T x action_dim
    VecF logps;
    VecF rewards;
    VecF values;  // T + 1 with bootstrap
    std::vector<uint8_t> dones;
    VecF advantages;
    VecF returns;
    int size = 0;
};

struct PPOStats {
    double policy_loss = 0;
    double value_loss = 0;
    double clip_fraction = 0;
};

struct CheckpointMeta {
    Family family = Family::Spaceship;
    double d = 0;
    uint64_t seed = 0;
    int64_t step = 0;
    double return_estimate = 0;
};

struct PolicyCheckpoint {
    CheckpointMeta meta;
    ParamSetF params;
};

// Standard GAE backward recursion; values carries the bootstrap entry, so
// values.size() == rewards.size() + 1. Computation runs in double precision.
template <typename S>
std::pair<VecD, VecD> gae(const Vec<S>& rewards, const Vec<S>& values,
                          const std::vector<uint8_t>& dones, double gamma,
                          double lambda) {
    Eigen::Index n = rewards.size();
    require(values.size() == n + 1, "gae: values must have length ", n + 1,
            ", got ", values.size());
    require(Eigen::Index(dones.size()) == n, "gae: dones length mismatch");
    VecD adv(n), ret(n);
    double acc = 0.0;
    for (Eigen::Index t = n - 1; t >= 0; --t) {
        double not_done = dones[size_t(t)] ? 0.0 : 1.0;
        double delta = double(rewards(t)) + gamma * double(values(t + 1)) * not_done -
                       double(values(t));
        acc = delta + gamma * lambda * not_done * acc;
        adv(t) = acc;
        ret(t) = acc + double(values(t));
    }
    return {adv, ret};
}

// One clipped-surrogate update over the buffer: ppo_epochs passes of
// minibatches minibatches. Advantages are normalized once per update.
PPOStats ppo_update(ActorCritic& ac, RolloutBuffer& buf, const PPOConfig& cfg,
                    Adam<float>& opt, Rng& rng);

// ---------------------------------------------------------------------------
// Training loop, generic over the environment type (reset / step / done /
// state_dim / action_dim). Episodes cycle round-robin over `envs`; `cond`
// optionally appends a per-env conditioning vector to every state.
template <typename EnvT>
std::vector<PolicyCheckpoint> train_ppo_multi(std::vector<EnvT*> envs,
                                              const PPOConfig& cfg, uint64_t seed,
                                              const std::vector<VecF>* cond = nullptr,
                                              CheckpointMeta base_meta = {}) {
    cfg.validate();
    require(!envs.empty(), "train_ppo: no environments");
    int sdim = envs[0]->state_dim();
    int adim = envs[0]->action_dim();
    int cdim = cond ? int((*cond)[0].size()) : 0;

    ActorCritic ac(sdim, adim, derive_seed(seed, "ppo-init"), cdim);
    Adam<float> opt(cfg.lr);
    Rng act_rng(derive_seed(seed, "ppo-act"));
    Rng update_rng(derive_seed(seed, "ppo-update"));

    auto with_cond = [&](const VecF& s, size_t env_idx) {
        if (!cond) return s;
        VecF x(sdim + cdim);
        x << s, (*cond)[env_idx];
        return x;
    };

    int64_t total_updates = (cfg.total_steps + cfg.rollout_steps - 1) / cfg.rollout_steps;
    std::vector<int64_t> thresholds;
    for (int k = 1; k <= cfg.checkpoint_count; ++k)
        thresholds.push_back(cfg.total_steps * k / cfg.checkpoint_count);

    std::vector<PolicyCheckpoint> checkpoints;
    std::deque<double> recent_returns;
    double episode_return = 0;
    size_t env_idx = 0;
    size_t episode_count = 0;
    VecF s = with_cond(envs[0]->reset(), 0);

    RolloutBuffer buf;
    buf.states.resize(cfg.rollout_steps, sdim + cdim);
    buf.actions.resize(cfg.rollout_steps, adim);
    buf.logps.resize(cfg.rollout_steps);
    buf.rewards.resize(cfg.rollout_steps);
    buf.values.resize(cfg.rollout_steps + 1);
    buf.dones.assign(size_t(cfg.rollout_steps), 0);
    buf.size = cfg.rollout_steps;

    int64_t steps_done = 0;
    size_t next_threshold = 0;
    for (int64_t update = 0; update < total_updates; ++update) {
        if (cfg.linear_lr_decay)
            opt.set_lr(cfg.lr * float(1.0 - double(update) / double(total_updates)));
        for (int t = 0; t < cfg.rollout_steps; ++t) {
            auto res = ac.act(s, false, &act_rng);
            buf.states.row(t) = s.transpose();
            buf.actions.row(t) = res.action.transpose();
            buf.logps(t) = res.logp;
            buf.values(t) = res.value;
            StepResult sr = envs[env_idx]->step(res.action);
            buf.rewards(t) = sr.reward;
            buf.dones[size_t(t)] = sr.done ? 1 : 0;
            episode_return += sr.reward;
            if (sr.done) {
                recent_returns.push_back(episode_return);
                if (recent_returns.size() > 10) recent_returns.pop_front();
                episode_return = 0;
                ++episode_count;
                env_idx = episode_count % envs.size();
                s = with_cond(envs[env_idx]->reset(), env_idx);
            } else {
                s = with_cond(sr.state, env_idx);
            }
        }
        steps_done += cfg.rollout_steps;
        buf.values(cfg.rollout_steps) =
            buf.dones[size_t(cfg.rollout_steps - 1)] ? 0.f : ac.value(s);
        auto [adv, ret] = gae(buf.rewards, buf.values, buf.dones,
                              double(cfg.gamma), double(cfg.gae_lambda));
        buf.advantages = adv.cast<float>();
        buf.returns = ret.cast<float>();
        ppo_update(ac, buf, cfg, opt, update_rng);

        double ret_est = 0;
        for (double g : recent_returns) ret_est += g;
        if (!recent_returns.empty()) ret_est /= double(recent_returns.size());
        while (next_threshold < thresholds.size() &&
               (steps_done >= thresholds[next_threshold] || update + 1 == total_updates)) {
            PolicyCheckpoint ck;
            ck.meta = base_meta;
            ck.meta.seed = seed;
            ck.meta.step = thresholds[next_threshold];
            ck.meta.return_estimate = ret_est;
            ck.params = ac.params();
            checkpoints.push_back(std::move(ck));
            ++next_threshold;
        }
    }
    return checkpoints;
}

template <typename EnvT>
std::vector<PolicyCheckpoint> train_ppo(EnvT& env, const PPOConfig& cfg,
                                        uint64_t seed, CheckpointMeta base_meta = {}) {
    std::vector<EnvT*> envs = {&env};
    return train_ppo_multi(envs, cfg, seed, nullptr, base_meta);
}

}  // namespace pdvf
