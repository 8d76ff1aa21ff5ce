#include "pdvf/ppo.hpp"

#include "pdvf/tape.hpp"

namespace pdvf {

namespace {
constexpr float kLog2Pi = 1.8378770664093453f;
}

PPOStats ppo_update(ActorCritic& ac, RolloutBuffer& buf, const PPOConfig& cfg,
                    Adam<float>& opt, Rng& rng) {
    cfg.validate();
    int n = buf.size;
    require(buf.advantages.size() == n && buf.returns.size() == n,
            "ppo_update: advantages not populated");

    // normalize advantages once per update, accumulating in double
    double mean = 0, sq = 0;
    for (int i = 0; i < n; ++i) mean += buf.advantages(i);
    mean /= n;
    for (int i = 0; i < n; ++i) {
        double c = buf.advantages(i) - mean;
        sq += c * c;
    }
    double stddev = std::sqrt(sq / n);
    for (int i = 0; i < n; ++i)
        buf.advantages(i) = float((buf.advantages(i) - mean) / (stddev + 1e-8));

    int mb_size = n / cfg.minibatches;
    int adim = ac.action_dim();
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[size_t(i)] = i;

    PPOStats stats;
    int batches = 0;
    Tape<float> tape;
    for (int epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
        rng.shuffle(order);
        for (int mb = 0; mb < cfg.minibatches; ++mb) {
            MatF states(mb_size, buf.states.cols());
            MatF actions(mb_size, adim);
            MatF old_logp(mb_size, 1), adv(mb_size, 1), ret(mb_size, 1);
            for (int i = 0; i < mb_size; ++i) {
                int src = order[size_t(mb * mb_size + i)];
                states.row(i) = buf.states.row(src);
                actions.row(i) = buf.actions.row(src);
                old_logp(i, 0) = buf.logps(src);
                adv(i, 0) = buf.advantages(src);
                ret(i, 0) = buf.returns(src);
            }

            tape.reset();
            auto s_id = tape.leaf(states);
            auto a_id = tape.leaf(actions);
            auto mean_id = mlp_forward(tape, ac.params(), "actor", ac.actor_spec(), s_id);
            auto ls_id = tape.param(ac.params().at("actor.log_std"));
            auto inv_sigma = tape.exp_(tape.scale(ls_id, -1.f));
            auto z = tape.mul_rowwise(tape.sub(a_id, mean_id), inv_sigma);
            auto logp = tape.scale(tape.rowsum(tape.square(z)), -0.5f);
            auto ls_sum = tape.sum_all(ls_id);
            std::vector<Eigen::Index> all = {0, mb_size};
            logp = tape.add(logp, tape.scale(tape.segment_broadcast(ls_sum, all), -1.f));
            logp = tape.add_const(logp, -0.5f * float(adim) * kLog2Pi);

            auto ratio = tape.exp_(tape.sub(logp, tape.leaf(old_logp)));
            auto adv_id = tape.leaf(adv);
            auto surr1 = tape.mul_el(ratio, adv_id);
            auto clipped = tape.clamp(ratio, 1.f - cfg.clip_ratio, 1.f + cfg.clip_ratio);
            auto surr2 = tape.mul_el(clipped, adv_id);
            auto policy_loss = tape.scale(tape.mean_all(tape.min_el(surr1, surr2)), -1.f);

            auto v_id = mlp_forward(tape, ac.params(), "critic", ac.critic_spec(), s_id);
            auto value_loss = tape.mean_all(tape.square(tape.sub(v_id, tape.leaf(ret))));

            auto total = tape.add(policy_loss, tape.scale(value_loss, cfg.value_coef));
            if (cfg.entropy_coef != 0.f) {
                // diagonal-Gaussian entropy: sum(log_std) + 0.5 k (1 + log 2pi)
                auto ent = tape.add_const(ls_sum, 0.5f * adim * (1.f + kLog2Pi));
                total = tape.add(total, tape.scale(ent, -cfg.entropy_coef));
            }
            float loss_val = tape.val(total)(0, 0);
            require(std::isfinite(loss_val), "ppo_update: NaN loss, aborting run");

            ac.params().zero_grads();
            tape.backward(total);
            clip_grad_norm(ac.params(), cfg.max_grad_norm);
            opt.step(ac.params());

            const MatF& rv = tape.val(ratio);
            int clipped_count = 0;
            for (int i = 0; i < mb_size; ++i)
                if (std::abs(rv(i, 0) - 1.f) > cfg.clip_ratio) ++clipped_count;
            stats.policy_loss += tape.val(policy_loss)(0, 0);
            stats.value_loss += tape.val(value_loss)(0, 0);
            stats.clip_fraction += double(clipped_count) / mb_size;
            ++batches;
        }
    }
    stats.policy_loss /= batches;
    stats.value_loss /= batches;
    stats.clip_fraction /= batches;
    return stats;
}

}  // namespace pdvf
