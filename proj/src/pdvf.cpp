#include "pdvf/pdvf.hpp"

#include "pdvf/adam.hpp"
#include "pdvf/linalg.hpp"
#include "pdvf/parallel.hpp"

#include <iostream>
#include <map>

namespace pdvf {

namespace {

void check_unit(const Embedding& e, const char* what) {
    require(e.unit_norm(1e-3f), what, ": embedding norm ", e.values.norm(),
            " is not unit");
}

MatF value_inputs(const ValueFunction& vf, const std::vector<ValueSample>& samples,
                  const std::vector<int>& idx) {
    MatF in(idx.size(), vf.spec.state_dim + vf.spec.d_emb_dynamics);
    for (size_t i = 0; i < idx.size(); ++i) {
        const auto& s = samples[size_t(idx[i])];
        in.row(Eigen::Index(i)) << s.s0.transpose(), s.z_d.values.transpose();
    }
    return in;
}

MatF value_zpi(const ValueFunction& vf, const std::vector<ValueSample>& samples,
               const std::vector<int>& idx) {
    MatF z(idx.size(), vf.spec.d_emb_policy);
    for (size_t i = 0; i < idx.size(); ++i)
        z.row(Eigen::Index(i)) = samples[size_t(idx[i])].z_pi.values.transpose();
    return z;
}

double value_eval_loss(const ValueFunction& vf,
                       const std::vector<ValueSample>& samples,
                       const std::vector<int>& idx, float shift) {
    double sum = 0;
    for (int i : idx) {
        const auto& s = samples[size_t(i)];
        float pred = predict_return(vf, s.s0, s.z_pi, s.z_d);
        double diff = double(pred) - double(s.G + shift);
        sum += diff * diff;
    }
    return sum / double(idx.size());
}

std::vector<int> sample_split(const std::vector<ValueSample>& samples, bool train) {
    std::vector<int> idx;
    for (int i = 0; i < int(samples.size()); ++i)
        if (samples[size_t(i)].train_split == train) idx.push_back(i);
    return idx;
}

// Shared minibatch trainer over an explicit sample pool.
void value_train_epochs(ValueFunction& vf, const std::vector<ValueSample>& pool,
                        const std::vector<int>& train_idx, int epochs,
                        const ValueConfig& cfg, Adam<float>& opt, Rng& rng) {
    std::vector<int> order = train_idx;
    Tape<float> tape;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch)) {
            size_t end = std::min(order.size(), start + size_t(cfg.batch));
            std::vector<int> mb(order.begin() + long(start), order.begin() + long(end));
            MatF in = value_inputs(vf, pool, mb);
            MatF z = value_zpi(vf, pool, mb);
            MatF target(mb.size(), 1);
            for (size_t i = 0; i < mb.size(); ++i)
                target(Eigen::Index(i), 0) = pool[size_t(mb[i])].G + cfg.target_shift;
            tape.reset();
            auto in_id = tape.leaf(in);
            auto z_id = tape.leaf(z);
            auto pred = value_trunk_forward(tape, vf.params, "vf", vf.spec, in_id, z_id);
            auto loss = tape.mean_all(tape.square(tape.sub(pred, tape.leaf(target))));
            require(std::isfinite(tape.val(loss)(0, 0)), "train_value: NaN loss");
            vf.params.zero_grads();
            tape.backward(loss);
            opt.step(vf.params);
        }
    }
}

}  // namespace

ValueFunction make_value_function(int state_dim, int d_emb_dynamics,
                                  int d_emb_policy, int hidden, uint64_t seed) {
    ValueFunction vf;
    vf.spec = {state_dim, d_emb_dynamics, d_emb_policy, hidden};
    Rng rng(seed);
    init_value_trunk(vf.params, "vf", vf.spec, rng);
    return vf;
}

QuadraticForm build_A(const ValueFunction& vf, const VecF& s0, const Embedding& z_d) {
    check_unit(z_d, "build_A");
    QuadraticForm form;
    form.s0 = s0;
    form.z_d = z_d.values;
    MatF L = value_trunk_L(vf.params, "vf", vf.spec, s0, z_d.values);
    form.A = L * L.transpose();
    return form;
}

float predict_return(const ValueFunction& vf, const VecF& s0, const Embedding& z_pi,
                     const Embedding& z_d) {
    check_unit(z_pi, "predict_return");
    auto form = build_A(vf, s0, z_d);
    require(z_pi.values.size() == form.A.rows(), "predict_return: z_pi dim ",
            z_pi.values.size(), " vs A dim ", form.A.rows());
    return z_pi.values.transpose() * form.A * z_pi.values;
}

Embedding optimal_policy_embedding(const QuadraticForm& form) {
    Embedding out;
    out.kind = EmbedKind::Policy;
    out.source = "OPE";
    Eigen::Index d = form.A.rows();
    if (form.A.cwiseAbs().maxCoeff() == 0.f) {
        std::cerr << "optimal_policy_embedding: degenerate all-zero form, "
                     "returning e1\n";
        out.values = VecF::Zero(d);
        out.values(0) = 1.f;
        return out;
    }
    auto top = top_eigvec<float>(form.A, 1e-4f);
    out.values = top.vec;
    return out;
}

ValueDataset make_value_dataset(const std::vector<PolicyCheckpoint>& checkpoints,
                                const std::vector<EnvInstance>& train_envs,
                                Autoencoder& dyn_ae, Autoencoder& pol_ae,
                                int n_traj, int n_probe, uint64_t base_seed) {
    require(!checkpoints.empty() && !train_envs.empty(),
            "make_value_dataset: empty inputs");
    require(n_traj >= 2, "make_value_dataset: n_traj >= 2");

    int n_pairs = int(checkpoints.size() * train_envs.size());
    std::vector<std::vector<Trajectory>> per_pair(static_cast<size_t>(n_pairs));
    parallel_for(n_pairs, [&](int pair) {
        int p = pair / int(train_envs.size());
        int e = pair % int(train_envs.size());
        const auto& env_ref = train_envs[size_t(e)];
        auto ac = ActorCritic::from_params(checkpoints[size_t(p)].params,
                                           env_ref.state_dim(), env_ref.action_dim());
        EnvInstance env(env_ref.family(), env_ref.d(), env_ref.seed());
        for (int t = 0; t < n_traj; ++t) {
            uint64_t seed = derive_seed(base_seed, "value-data", p, e, t);
            Rng rng(seed);
            per_pair[size_t(pair)].push_back(rollout_episode(
                env, [&](const VecF& s) { return ac.act(s, false, &rng).action; },
                seed, e, p));
        }
    });

    ValueDataset ds;
    for (int pair = 0; pair < n_pairs; ++pair) {
        auto& trajs = per_pair[size_t(pair)];
        double mean_G = 0;
        for (const auto& t : trajs) mean_G += t.G;
        mean_G /= double(trajs.size());
        int half = int(trajs.size()) / 2;
        for (int t = 0; t < int(trajs.size()); ++t) {
            const auto& traj = trajs[size_t(t)];
            auto emb = embed_record(dyn_ae, pol_ae, traj, n_probe);
            ValueSample s;
            s.s0 = traj.steps.front().s;
            s.z_d = emb.z_d;
            s.z_pi = emb.z_pi;
            s.G = float(mean_G);
            s.policy_id = traj.policy_id;
            s.env_index = traj.env_index;
            s.train_split = t < half;
            ds.samples.push_back(std::move(s));
            ds.trajectories.push_back(traj);
        }
    }
    return ds;
}

ValueTrainMetrics train_value(ValueFunction& vf,
                              const std::vector<ValueSample>& samples,
                              const ValueConfig& cfg, uint64_t seed) {
    cfg.validate();
    require(!samples.empty(), "train_value: empty dataset");
    auto train_idx = sample_split(samples, true);
    auto eval_idx = sample_split(samples, false);
    require(!train_idx.empty() && !eval_idx.empty(), "train_value: need both splits");

    Adam<float> opt(cfg.lr);
    Rng rng(derive_seed(seed, "value-shuffle"));
    ValueTrainMetrics metrics;
    metrics.eval_loss.push_back(value_eval_loss(vf, samples, eval_idx, cfg.target_shift));
    metrics.best_loss = metrics.eval_loss[0];
    ParamSetF best = vf.params;

    for (int epoch = 1; epoch <= cfg.epochs_initial; ++epoch) {
        value_train_epochs(vf, samples, train_idx, 1, cfg, opt, rng);
        double ev = value_eval_loss(vf, samples, eval_idx, cfg.target_shift);
        require(std::isfinite(ev), "train_value: NaN eval loss");
        metrics.eval_loss.push_back(ev);
        if (ev < metrics.best_loss) {
            metrics.best_loss = ev;
            metrics.best_epoch = epoch;
            best = vf.params;
        }
    }
    vf.params = best;

    // R^2 on the eval split (shift cancels in both residuals and variance)
    double mean_g = 0;
    for (int i : eval_idx) mean_g += samples[size_t(i)].G;
    mean_g /= double(eval_idx.size());
    double ss_res = 0, ss_tot = 0;
    for (int i : eval_idx) {
        const auto& s = samples[size_t(i)];
        double pred = predict_return(vf, s.s0, s.z_pi, s.z_d) - cfg.target_shift;
        ss_res += (pred - s.G) * (pred - s.G);
        ss_tot += (s.G - mean_g) * (s.G - mean_g);
    }
    metrics.eval_r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 0.0;
    return metrics;
}

PdvfEpisode run_pdvf_episode(EnvInstance& env, const ActorCritic& probe,
                             Autoencoder& dyn_ae, const Autoencoder& pol_ae,
                             const ValueFunction& vf, int n_probe) {
    PdvfEpisode ep;
    VecF s = env.reset();
    ep.s0 = s;
    std::vector<Transition> probe_steps;
    for (int t = 0; t < n_probe; ++t) {
        require(!env.done(), "run_pdvf_episode: episode ended during the probe (N_d=",
                n_probe, ")");
        VecF a = probe.act(s, true, nullptr).action;
        auto r = env.step(a);
        probe_steps.push_back({s, a, r.reward, r.state, r.done});
        ep.G += r.reward;
        s = r.state;
        ++ep.probe_steps;
    }
    require(!env.done(), "run_pdvf_episode: episode ended during the probe (N_d=",
            n_probe, ")");

    Trajectory tmp;
    tmp.steps = probe_steps;
    tmp.env_index = -1;
    ep.z_d = encode_dynamics(dyn_ae, transition_matrix(tmp, n_probe), "probe");
    auto form = build_A(vf, ep.s0, ep.z_d);
    ep.z_star = optimal_policy_embedding(form);

    while (!env.done()) {
        VecF a = decode_action(pol_ae, s, ep.z_star.values);
        ep.decoded_states.push_back(s);
        auto r = env.step(a);
        ep.G += r.reward;
        s = r.state;
    }
    return ep;
}

AggregateValueMetrics aggregate_value(ValueFunction& vf, Autoencoder& dyn_ae,
                                      const Autoencoder& pol_ae,
                                      const ActorCritic& probe,
                                      std::vector<EnvInstance>& train_envs,
                                      const ValueDataset& base,
                                      const ValueConfig& cfg, int n_probe,
                                      uint64_t seed) {
    cfg.validate();
    AggregateValueMetrics metrics;
    auto eval_idx = sample_split(base.samples, false);
    require(!eval_idx.empty(), "aggregate_value: no eval split");

    auto ope_errors = [&](const ValueFunction& v) {
        std::vector<double> errs;
        for (auto& env : train_envs) {
            try {
                auto ep = run_pdvf_episode(env, probe, dyn_ae, pol_ae, v, n_probe);
                double pred = predict_return(v, ep.s0, ep.z_star, ep.z_d);
                errs.push_back(std::abs(pred - (ep.G + cfg.target_shift)));
            } catch (const std::exception&) {
                // rollout failure: skip this env, keep aggregating the rest
            }
        }
        std::sort(errs.begin(), errs.end());
        return errs;
    };
    auto median = [](const std::vector<double>& v) {
        if (v.empty()) return 0.0;
        size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };

    metrics.median_ope_error_before = median(ope_errors(vf));

    std::vector<ValueSample> pool = base.samples;
    std::vector<int> train_idx = sample_split(pool, true);
    Adam<float> opt(cfg.lr);
    Rng rng(derive_seed(seed, "agg-value"));
    ParamSetF best = vf.params;
    metrics.best_loss = std::numeric_limits<double>::max();

    for (int round = 1; round <= cfg.max_aggregation_rounds; ++round) {
        for (auto& env : train_envs) {
            try {
                auto ep = run_pdvf_episode(env, probe, dyn_ae, pol_ae, vf, n_probe);
                ValueSample s;
                s.s0 = ep.s0;
                s.z_pi = ep.z_star;
                s.z_d = ep.z_d;
                s.G = float(ep.G);
                s.policy_id = -1;
                s.env_index = -1;  // filled below for bookkeeping
                s.train_split = true;
                pool.push_back(std::move(s));
                train_idx.push_back(int(pool.size()) - 1);
                ++metrics.aggregated_samples;
            } catch (const std::exception&) {
            }
        }
        value_train_epochs(vf, pool, train_idx, cfg.epochs_per_aggregation, cfg, opt,
                           rng);
        double ev = value_eval_loss(vf, base.samples, eval_idx, cfg.target_shift);
        metrics.round_eval_loss.push_back(ev);
        if (ev < metrics.best_loss) {
            metrics.best_loss = ev;
            metrics.best_round = round;
            best = vf.params;
        }
    }
    vf.params = best;
    metrics.median_ope_error_after = median(ope_errors(vf));
    return metrics;
}

AggregateDecoderMetrics aggregate_policy_decoder(
    Autoencoder& pol_ae, Autoencoder& dyn_ae, const ValueFunction& vf,
    const std::vector<PolicyCheckpoint>& checkpoints,
    const EmbedDataset& embed_data, const ActorCritic& probe,
    std::vector<EnvInstance>& train_envs, const ValueConfig& cfg, int n_probe,
    uint64_t seed) {
    cfg.validate();
    AggregateDecoderMetrics metrics;
    int state_dim = train_envs[0].state_dim();
    int action_dim = train_envs[0].action_dim();
    int d_emb = pol_ae.enc_spec.d_emb;

    // original decoder pairs: (s, z_pi(traj)) -> a over the train split, with
    // the eval split as the regression guard; the encoder stays frozen here
    struct Pairs {
        MatF s;
        MatF z;
        MatF a;
    };
    auto build_pairs = [&](bool train) {
        Eigen::Index total = 0;
        for (const auto& rec : embed_data.records)
            if (rec.train_split == train)
                total += embed_data.trajectories[size_t(rec.traj)].length();
        Pairs p;
        p.s.resize(total, state_dim);
        p.z.resize(total, d_emb);
        p.a.resize(total, action_dim);
        Eigen::Index row = 0;
        for (const auto& rec : embed_data.records) {
            if (rec.train_split != train) continue;
            const auto& traj = embed_data.trajectories[size_t(rec.traj)];
            VecF z = encode_policy(pol_ae, state_action_matrix(traj)).values;
            for (const auto& step : traj.steps) {
                p.s.row(row) = step.s.transpose();
                p.z.row(row) = z.transpose();
                p.a.row(row) = step.a.transpose();
                ++row;
            }
        }
        return p;
    };
    Pairs train_pairs = build_pairs(true);
    Pairs eval_pairs = build_pairs(false);

    auto decoder_loss = [&](const Pairs& p) {
        double sum = 0;
        for (Eigen::Index start = 0; start < p.s.rows(); start += 8192) {
            Eigen::Index n = std::min<Eigen::Index>(8192, p.s.rows() - start);
            MatF in(n, state_dim + d_emb);
            in << pol_ae.normalize_dec_in(p.s.middleRows(start, n)),
                p.z.middleRows(start, n);
            MatF pred = pol_ae.denormalize_out(
                mlp_eval(pol_ae.params, "dec", pol_ae.dec_spec, in));
            sum += double((pred - p.a.middleRows(start, n)).array().square().sum());
        }
        return sum / double(p.s.rows() * p.a.cols());
    };
    metrics.initial_eval_loss = decoder_loss(eval_pairs);

    // per-policy reference embeddings: normalized mean over train-split records
    std::map<int, std::pair<VecF, int>> sums;
    for (const auto& rec : embed_data.records) {
        if (!rec.train_split) continue;
        VecF z = encode_policy(
                     pol_ae, state_action_matrix(embed_data.trajectories[size_t(rec.traj)]))
                     .values;
        auto it = sums.find(rec.policy_id);
        if (it == sums.end())
            sums.emplace(rec.policy_id, std::make_pair(z, 1));
        else {
            it->second.first += z;
            it->second.second += 1;
        }
    }
    std::vector<std::pair<int, VecF>> policy_refs;
    for (auto& [pid, sum] : sums) {
        VecF mean = sum.first / float(sum.second);
        float norm = mean.norm();
        if (norm > 1e-8f) mean /= norm;
        policy_refs.emplace_back(pid, mean);
    }

    auto median_return = [&]() {
        std::vector<double> returns;
        for (auto& env : train_envs) {
            try {
                returns.push_back(
                    run_pdvf_episode(env, probe, dyn_ae, pol_ae, vf, n_probe).G);
            } catch (const std::exception&) {
            }
        }
        std::sort(returns.begin(), returns.end());
        if (returns.empty()) return 0.0;
        size_t n = returns.size();
        return n % 2 ? returns[n / 2] : 0.5 * (returns[n / 2 - 1] + returns[n / 2]);
    };
    metrics.median_return_before = median_return();

    std::vector<MatF> agg_s, agg_z, agg_a;  // one block per (round, policy)
    Adam<float> opt(cfg.decoder_lr);
    Rng rng(derive_seed(seed, "agg-decoder"));
    ParamSetF best = pol_ae.params;
    metrics.best_loss = std::numeric_limits<double>::max();
    Tape<float> tape;

    for (int round = 1; round <= cfg.decoder_rounds; ++round) {
        // roll out the current decoder's OPE policies and relabel their states
        std::vector<VecF> visited;
        for (auto& env : train_envs) {
            try {
                auto ep = run_pdvf_episode(env, probe, dyn_ae, pol_ae, vf, n_probe);
                visited.insert(visited.end(), ep.decoded_states.begin(),
                               ep.decoded_states.end());
            } catch (const std::exception&) {
            }
        }
        if (!visited.empty()) {
            int n_sample = std::min<int>(cfg.decoder_policy_sample,
                                         int(policy_refs.size()));
            std::vector<int> pick(policy_refs.size());
            for (size_t i = 0; i < pick.size(); ++i) pick[i] = int(i);
            rng.shuffle(pick);
            MatF srows(visited.size(), state_dim);
            for (size_t i = 0; i < visited.size(); ++i)
                srows.row(Eigen::Index(i)) = visited[i].transpose();
            for (int j = 0; j < n_sample; ++j) {
                const auto& [pid, zref] = policy_refs[size_t(pick[size_t(j)])];
                require(pid >= 0 && pid < int(checkpoints.size()),
                        "aggregate_policy_decoder: missing checkpoint ", pid);
                auto ac = ActorCritic::from_params(checkpoints[size_t(pid)].params,
                                                   state_dim, action_dim);
                MatF targets = ac.mean_batch(srows);
                agg_s.push_back(srows);
                agg_z.push_back(zref.transpose().replicate(Eigen::Index(visited.size()), 1));
                agg_a.push_back(targets);
                metrics.aggregated_pairs += int(visited.size());
            }
        }

        // retrain the decoder on original + aggregated pairs
        Eigen::Index agg_rows = 0;
        for (const auto& m : agg_s) agg_rows += m.rows();
        Eigen::Index total = train_pairs.s.rows() + agg_rows;
        std::vector<int64_t> order(static_cast<size_t>(total));
        for (int64_t i = 0; i < total; ++i) order[size_t(i)] = i;

        MatF all_s(total, state_dim), all_z(total, d_emb), all_a(total, action_dim);
        all_s.topRows(train_pairs.s.rows()) = train_pairs.s;
        all_z.topRows(train_pairs.s.rows()) = train_pairs.z;
        all_a.topRows(train_pairs.s.rows()) = train_pairs.a;
        Eigen::Index row = train_pairs.s.rows();
        for (size_t b = 0; b < agg_s.size(); ++b) {
            all_s.middleRows(row, agg_s[b].rows()) = agg_s[b];
            all_z.middleRows(row, agg_s[b].rows()) = agg_z[b];
            all_a.middleRows(row, agg_s[b].rows()) = agg_a[b];
            row += agg_s[b].rows();
        }

        for (int epoch = 0; epoch < cfg.decoder_epochs; ++epoch) {
            rng.shuffle(order);
            for (Eigen::Index start = 0; start < total;
                 start += cfg.decoder_batch) {
                Eigen::Index n = std::min<Eigen::Index>(cfg.decoder_batch,
                                                        total - start);
                MatF in_s(n, state_dim), in(n, state_dim + d_emb),
                    target(n, action_dim);
                for (Eigen::Index i = 0; i < n; ++i) {
                    int64_t src = order[size_t(start + i)];
                    in_s.row(i) = all_s.row(src);
                    in.rightCols(d_emb).row(i) = all_z.row(src);
                    target.row(i) = all_a.row(src);
                }
                in.leftCols(state_dim) = pol_ae.normalize_dec_in(in_s);
                target = pol_ae.normalize_out(target);
                tape.reset();
                auto pred = mlp_forward(tape, pol_ae.params, "dec", pol_ae.dec_spec,
                                        tape.leaf(in));
                auto loss =
                    tape.mean_all(tape.square(tape.sub(pred, tape.leaf(target))));
                require(std::isfinite(tape.val(loss)(0, 0)),
                        "aggregate_policy_decoder: NaN loss");
                pol_ae.params.zero_grads();
                tape.backward(loss);
                opt.step(pol_ae.params);
            }
        }
        double ev = decoder_loss(eval_pairs);
        metrics.round_eval_loss.push_back(ev);
        if (ev < metrics.best_loss) {
            metrics.best_loss = ev;
            metrics.best_round = round;
            best = pol_ae.params;
        }
    }
    pol_ae.params = best;
    metrics.median_return_after = median_return();
    return metrics;
}

}  // namespace pdvf
