#include "pdvf/embed.hpp"

#include "pdvf/adam.hpp"
#include "pdvf/parallel.hpp"

#include <map>

namespace pdvf {

namespace {

constexpr int kPrefixMax = 8;  // training prefixes cap at min(T, 8)

MlpSpec dynamics_decoder_spec(int state_dim, int action_dim, int d_emb, int hidden) {
    return MlpSpec::make(state_dim + action_dim + d_emb, {hidden, hidden},
                         state_dim, Act::Relu);
}

MlpSpec policy_decoder_spec(int state_dim, int action_dim, int d_emb, int hidden) {
    return MlpSpec::make(state_dim + d_emb, {hidden, hidden}, action_dim, Act::Relu);
}

Embedding encode_set(Autoencoder& ae, EmbedKind kind, const MatF& elements,
                     std::string source) {
    Embedding e;
    e.kind = kind;
    e.values =
        set_encoder_eval(ae.params, "enc", ae.enc_spec, ae.normalize_enc(elements));
    e.source = std::move(source);
    return e;
}

void add_norm_tensors(ParamSetF& params, const std::string& name, int cols) {
    Tensor<float> mu("norm." + name + "_mu", uint32_t(cols));
    Tensor<float> sigma("norm." + name + "_sigma", uint32_t(cols));
    sigma.value.setOnes();
    params.add(std::move(mu));
    params.add(std::move(sigma));
}

MatF norm_rows(const ParamSetF& params, const std::string& name, const MatF& x) {
    const auto& mu = params.at("norm." + name + "_mu").value;
    const auto& sigma = params.at("norm." + name + "_sigma").value;
    require(x.cols() == mu.cols(), "normalize(", name, "): got ", x.cols(),
            " features, expected ", mu.cols());
    return ((x.rowwise() - mu.row(0)).array().rowwise() / sigma.row(0).array());
}

void fit_norm(ParamSetF& params, const std::string& name, const MatF& rows) {
    auto& mu = params.at("norm." + name + "_mu").value;
    auto& sigma = params.at("norm." + name + "_sigma").value;
    for (Eigen::Index c = 0; c < rows.cols(); ++c) {
        double m = rows.col(c).cast<double>().mean();
        double var = (rows.col(c).cast<double>().array() - m).square().mean();
        double sd = std::sqrt(var);
        mu(0, c) = float(m);
        sigma(0, c) = sd >= 1e-4 ? float(sd) : 1.f;
    }
}

}  // namespace

MatF Autoencoder::normalize_enc(const MatF& elements) const {
    return norm_rows(params, "enc", elements);
}
MatF Autoencoder::normalize_dec_in(const MatF& sa) const {
    return norm_rows(params, "dec_in", sa);
}
MatF Autoencoder::normalize_out(const MatF& targets) const {
    return norm_rows(params, "out", targets);
}
MatF Autoencoder::denormalize_out(const MatF& out) const {
    const auto& mu = params.at("norm.out_mu").value;
    const auto& sigma = params.at("norm.out_sigma").value;
    return ((out.array().rowwise() * sigma.row(0).array()).rowwise() +
            mu.row(0).array());
}
void Autoencoder::fit_normalizers(const MatF& enc_rows, const MatF& dec_in_rows,
                                  const MatF& target_rows) {
    fit_norm(params, "enc", enc_rows);
    fit_norm(params, "dec_in", dec_in_rows);
    fit_norm(params, "out", target_rows);
}

Autoencoder make_dynamics_autoencoder(int state_dim, int action_dim,
                                      const EmbedConfig& cfg, const ArchConfig& arch,
                                      uint64_t seed) {
    cfg.validate();
    arch.validate();
    Autoencoder ae;
    ae.enc_spec = {2 * state_dim + action_dim, arch.d_model, arch.ff_hidden,
                   cfg.d_emb_dynamics, arch.dropout};
    ae.dec_spec = dynamics_decoder_spec(state_dim, action_dim, cfg.d_emb_dynamics,
                                        arch.decoder_hidden);
    Rng rng(seed);
    init_set_encoder(ae.params, "enc", ae.enc_spec, rng);
    init_mlp(ae.params, "dec", ae.dec_spec, rng);
    add_norm_tensors(ae.params, "enc", ae.enc_spec.in);
    add_norm_tensors(ae.params, "dec_in", state_dim + action_dim);
    add_norm_tensors(ae.params, "out", state_dim);
    return ae;
}

Autoencoder make_policy_autoencoder(int state_dim, int action_dim,
                                    const EmbedConfig& cfg, const ArchConfig& arch,
                                    uint64_t seed) {
    cfg.validate();
    arch.validate();
    Autoencoder ae;
    ae.enc_spec = {state_dim + action_dim, arch.d_model, arch.ff_hidden,
                   cfg.d_emb_policy, arch.dropout};
    ae.dec_spec = policy_decoder_spec(state_dim, action_dim, cfg.d_emb_policy,
                                      arch.decoder_hidden);
    Rng rng(seed);
    init_set_encoder(ae.params, "enc", ae.enc_spec, rng);
    init_mlp(ae.params, "dec", ae.dec_spec, rng);
    add_norm_tensors(ae.params, "enc", ae.enc_spec.in);
    add_norm_tensors(ae.params, "dec_in", state_dim);
    add_norm_tensors(ae.params, "out", action_dim);
    return ae;
}

Embedding encode_dynamics(Autoencoder& ae, const MatF& transitions,
                          std::string source) {
    return encode_set(ae, EmbedKind::Dynamics, transitions, std::move(source));
}

Embedding encode_policy(Autoencoder& ae, const MatF& state_actions,
                        std::string source) {
    return encode_set(ae, EmbedKind::Policy, state_actions, std::move(source));
}

VecF decode_next_state(const Autoencoder& ae, const VecF& s, const VecF& a,
                       const VecF& z_d) {
    MatF sa(1, s.size() + a.size());
    sa << s.transpose(), a.transpose();
    MatF in(1, sa.cols() + z_d.size());
    in << ae.normalize_dec_in(sa), z_d.transpose();
    return ae.denormalize_out(mlp_eval(ae.params, "dec", ae.dec_spec, in))
        .row(0)
        .transpose();
}

VecF decode_action(const Autoencoder& ae, const VecF& s, const VecF& z_pi) {
    MatF srow(1, s.size());
    srow << s.transpose();
    MatF in(1, s.size() + z_pi.size());
    in << ae.normalize_dec_in(srow), z_pi.transpose();
    return ae.denormalize_out(mlp_eval(ae.params, "dec", ae.dec_spec, in))
        .row(0)
        .transpose();
}

EmbedDataset collect_embedding_dataset(const std::vector<PolicyCheckpoint>& checkpoints,
                                       const std::vector<EnvInstance>& train_envs,
                                       int n_traj, uint64_t base_seed) {
    require(!checkpoints.empty() && !train_envs.empty(),
            "collect_embedding_dataset: empty checkpoints or envs");
    require(n_traj >= 2, "collect_embedding_dataset: need at least two trajectories");

    int n_pairs = int(checkpoints.size() * train_envs.size());
    std::vector<std::vector<Trajectory>> per_pair(static_cast<size_t>(n_pairs));
    std::vector<std::string> skipped(static_cast<size_t>(n_pairs));

    parallel_for(n_pairs, [&](int pair) {
        int p = pair / int(train_envs.size());
        int e = pair % int(train_envs.size());
        const auto& ck = checkpoints[size_t(p)];
        const auto& env_ref = train_envs[size_t(e)];
        try {
            auto ac = ActorCritic::from_params(ck.params, env_ref.state_dim(),
                                               env_ref.action_dim());
            EnvInstance env(env_ref.family(), env_ref.d(), env_ref.seed());
            for (int t = 0; t < n_traj; ++t) {
                uint64_t seed = derive_seed(base_seed, "collect", p, e, t);
                Rng rng(seed);
                auto traj = rollout_episode(
                    env,
                    [&](const VecF& s) { return ac.act(s, false, &rng).action; },
                    seed, e, p);
                per_pair[size_t(pair)].push_back(std::move(traj));
            }
        } catch (const std::exception& ex) {
            per_pair[size_t(pair)].clear();
            skipped[size_t(pair)] = std::string("pair(") + std::to_string(p) + "," +
                                    std::to_string(e) + "): " + ex.what();
        }
    });

    EmbedDataset ds;
    for (int pair = 0; pair < n_pairs; ++pair) {
        if (!skipped[size_t(pair)].empty()) {
            ds.skipped_pairs.push_back(skipped[size_t(pair)]);
            continue;
        }
        auto& trajs = per_pair[size_t(pair)];
        int half = int(trajs.size()) / 2;
        for (int t = 0; t < int(trajs.size()); ++t) {
            EmbedRecord rec;
            rec.traj = int(ds.trajectories.size());
            rec.env_index = trajs[size_t(t)].env_index;
            rec.policy_id = trajs[size_t(t)].policy_id;
            rec.G = trajs[size_t(t)].G;
            rec.train_split = t < half;
            ds.trajectories.push_back(std::move(trajs[size_t(t)]));
            ds.records.push_back(rec);
        }
    }
    return ds;
}

namespace {

struct PreparedTraj {
    MatF transitions;    // T x (s, a, s')
    MatF state_actions;  // T x (s, a)
};

std::vector<PreparedTraj> prepare(const EmbedDataset& ds) {
    std::vector<PreparedTraj> out(ds.trajectories.size());
    for (size_t i = 0; i < ds.trajectories.size(); ++i) {
        const auto& t = ds.trajectories[i];
        out[i].transitions = transition_matrix(t, t.length());
        out[i].state_actions = state_action_matrix(t);
    }
    return out;
}

std::vector<int> split_indices(const EmbedDataset& ds, bool train) {
    std::vector<int> idx;
    for (int i = 0; i < int(ds.records.size()); ++i)
        if (ds.records[size_t(i)].train_split == train) idx.push_back(i);
    return idx;
}

// Encoder sees a length-k prefix per trajectory (k ~ U{n_probe..min(T, 8)});
// the decoder is supervised on every transition of the trajectory so it
// covers the full state distribution.
struct DynBatch {
    MatF elements;
    std::vector<Eigen::Index> enc_offsets;
    MatF dec_sa;
    MatF dec_targets;
    std::vector<Eigen::Index> dec_offsets;
};

DynBatch build_dyn_batch(const std::vector<PreparedTraj>& prep,
                         const EmbedDataset& ds, const std::vector<int>& recs,
                         int n_probe, Rng* krng) {
    int state_dim = int(ds.trajectories[0].steps[0].s.size());
    int action_dim = int(ds.trajectories[0].steps[0].a.size());
    std::vector<int> ks(recs.size());
    Eigen::Index enc_total = 0, dec_total = 0;
    for (size_t i = 0; i < recs.size(); ++i) {
        const auto& rec = ds.records[size_t(recs[i])];
        int len = ds.trajectories[size_t(rec.traj)].length();
        int kmax = std::min(len, kPrefixMax);
        int kmin = std::min(n_probe, kmax);
        ks[i] = krng ? kmin + krng->uniform_int(kmax - kmin + 1) : kmin;
        enc_total += ks[i];
        dec_total += len;
    }
    DynBatch b;
    b.elements.resize(enc_total, 2 * state_dim + action_dim);
    b.dec_sa.resize(dec_total, state_dim + action_dim);
    b.dec_targets.resize(dec_total, state_dim);
    b.enc_offsets.assign(1, 0);
    b.dec_offsets.assign(1, 0);
    Eigen::Index erow = 0, drow = 0;
    for (size_t i = 0; i < recs.size(); ++i) {
        const auto& rec = ds.records[size_t(recs[i])];
        const auto& pm = prep[size_t(rec.traj)];
        b.elements.middleRows(erow, ks[i]) = pm.transitions.topRows(ks[i]);
        erow += ks[i];
        b.enc_offsets.push_back(erow);
        Eigen::Index len = pm.transitions.rows();
        b.dec_sa.middleRows(drow, len) =
            pm.transitions.leftCols(state_dim + action_dim);
        b.dec_targets.middleRows(drow, len) = pm.transitions.rightCols(state_dim);
        drow += len;
        b.dec_offsets.push_back(drow);
    }
    return b;
}

// Raw-unit eval losses: encode at the test-time operating point, decode every
// step of the trajectory, measure MSE in unnormalized units.
double dyn_eval_loss(Autoencoder& ae, const std::vector<PreparedTraj>& prep,
                     const EmbedDataset& ds, const std::vector<int>& recs,
                     int n_probe) {
    double sum = 0;
    int64_t count = 0;
    int state_dim = int(ds.trajectories[0].steps[0].s.size());
    int action_dim = int(ds.trajectories[0].steps[0].a.size());
    for (int r : recs) {
        const auto& rec = ds.records[size_t(r)];
        const auto& pm = prep[size_t(rec.traj)];
        int k = std::min(n_probe, int(pm.transitions.rows()));
        VecF z = set_encoder_eval(ae.params, "enc", ae.enc_spec,
                                  ae.normalize_enc(pm.transitions.topRows(k)));
        MatF in(pm.transitions.rows(), state_dim + action_dim + z.size());
        in << ae.normalize_dec_in(pm.transitions.leftCols(state_dim + action_dim)),
            z.transpose().replicate(pm.transitions.rows(), 1);
        MatF pred = ae.denormalize_out(mlp_eval(ae.params, "dec", ae.dec_spec, in));
        sum += double(
            (pred - pm.transitions.rightCols(state_dim)).array().square().sum());
        count += pred.size();
    }
    return sum / double(count);
}

double pol_eval_loss(Autoencoder& ae, const std::vector<PreparedTraj>& prep,
                     const EmbedDataset& ds, const std::vector<int>& recs) {
    double sum = 0;
    int64_t count = 0;
    int state_dim = int(ds.trajectories[0].steps[0].s.size());
    for (int r : recs) {
        const auto& rec = ds.records[size_t(r)];
        const auto& pm = prep[size_t(rec.traj)];
        VecF z = set_encoder_eval(ae.params, "enc", ae.enc_spec,
                                  ae.normalize_enc(pm.state_actions));
        MatF in(pm.state_actions.rows(), state_dim + z.size());
        in << ae.normalize_dec_in(pm.state_actions.leftCols(state_dim)),
            z.transpose().replicate(pm.state_actions.rows(), 1);
        MatF pred = ae.denormalize_out(mlp_eval(ae.params, "dec", ae.dec_spec, in));
        sum += double((pred - pm.state_actions.rightCols(pm.state_actions.cols() -
                                                         state_dim))
                          .array()
                          .square()
                          .sum());
        count += pred.size();
    }
    return sum / double(count);
}

MatF vstack_transition_rows(const std::vector<PreparedTraj>& prep,
                            const EmbedDataset& ds, const std::vector<int>& recs,
                            bool state_actions) {
    Eigen::Index total = 0;
    for (int r : recs) {
        const auto& pm = prep[size_t(ds.records[size_t(r)].traj)];
        total += state_actions ? pm.state_actions.rows() : pm.transitions.rows();
    }
    const auto& first = prep[size_t(ds.records[size_t(recs[0])].traj)];
    Eigen::Index cols =
        state_actions ? first.state_actions.cols() : first.transitions.cols();
    MatF out(total, cols);
    Eigen::Index row = 0;
    for (int r : recs) {
        const auto& pm = prep[size_t(ds.records[size_t(r)].traj)];
        const MatF& m = state_actions ? pm.state_actions : pm.transitions;
        out.middleRows(row, m.rows()) = m;
        row += m.rows();
    }
    return out;
}

}  // namespace

EmbedTrainMetrics train_dynamics_autoencoder(Autoencoder& ae,
                                             const EmbedDataset& dataset,
                                             const EmbedConfig& cfg, int n_probe,
                                             uint64_t seed) {
    cfg.validate();
    require(!dataset.records.empty(), "train_dynamics_autoencoder: empty dataset");
    auto prep = prepare(dataset);
    auto train_idx = split_indices(dataset, true);
    auto eval_idx = split_indices(dataset, false);
    require(!train_idx.empty() && !eval_idx.empty(),
            "train_dynamics_autoencoder: need both splits");

    Adam<float> opt(cfg.lr_dynamics);
    Rng shuffle_rng(derive_seed(seed, "dyn-shuffle"));
    Rng drop_rng(derive_seed(seed, "dyn-dropout"));
    Rng k_rng(derive_seed(seed, "dyn-prefix"));

    int state_dim = int(dataset.trajectories[0].steps[0].s.size());
    int action_dim = int(dataset.trajectories[0].steps[0].a.size());
    MatF train_rows = vstack_transition_rows(prep, dataset, train_idx, false);
    ae.fit_normalizers(train_rows, train_rows.leftCols(state_dim + action_dim),
                       train_rows.rightCols(state_dim));

    EmbedTrainMetrics metrics;
    metrics.eval_loss.push_back(dyn_eval_loss(ae, prep, dataset, eval_idx, n_probe));
    metrics.best_loss = metrics.eval_loss[0];
    ParamSetF best = ae.params;

    Tape<float> tape;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(train_idx);
        for (size_t start = 0; start < train_idx.size();
             start += size_t(cfg.batch_dynamics)) {
            size_t end = std::min(train_idx.size(), start + size_t(cfg.batch_dynamics));
            std::vector<int> recs(train_idx.begin() + long(start),
                                  train_idx.begin() + long(end));
            auto b = build_dyn_batch(prep, dataset, recs, n_probe, &k_rng);
            tape.reset();
            auto el = tape.leaf(ae.normalize_enc(b.elements));
            auto z = set_encoder_forward(tape, ae.params, "enc", ae.enc_spec, el,
                                         b.enc_offsets, true, &drop_rng);
            auto zb = tape.segment_broadcast(z, b.dec_offsets);
            auto in = tape.concat_cols(tape.leaf(ae.normalize_dec_in(b.dec_sa)), zb);
            auto pred = mlp_forward(tape, ae.params, "dec", ae.dec_spec, in);
            auto loss = tape.mean_all(tape.square(
                tape.sub(pred, tape.leaf(ae.normalize_out(b.dec_targets)))));
            require(std::isfinite(tape.val(loss)(0, 0)),
                    "train_dynamics_autoencoder: NaN loss");
            ae.params.zero_grads();
            tape.backward(loss);
            opt.step(ae.params);
        }
        double ev = dyn_eval_loss(ae, prep, dataset, eval_idx, n_probe);
        require(std::isfinite(ev), "train_dynamics_autoencoder: NaN eval loss");
        metrics.eval_loss.push_back(ev);
        if (ev < metrics.best_loss) {
            metrics.best_loss = ev;
            metrics.best_epoch = epoch;
            best = ae.params;
        }
    }
    ae.params = best;
    return metrics;
}

EmbedTrainMetrics train_policy_autoencoder(Autoencoder& ae,
                                           const EmbedDataset& dataset,
                                           const EmbedConfig& cfg, uint64_t seed) {
    cfg.validate();
    require(!dataset.records.empty(), "train_policy_autoencoder: empty dataset");
    auto prep = prepare(dataset);
    auto train_idx = split_indices(dataset, true);
    auto eval_idx = split_indices(dataset, false);
    require(!train_idx.empty() && !eval_idx.empty(),
            "train_policy_autoencoder: need both splits");
    int state_dim = int(dataset.trajectories[0].steps[0].s.size());

    Adam<float> opt(cfg.lr_policy);
    Rng shuffle_rng(derive_seed(seed, "pol-shuffle"));
    Rng drop_rng(derive_seed(seed, "pol-dropout"));

    MatF train_rows = vstack_transition_rows(prep, dataset, train_idx, true);
    ae.fit_normalizers(train_rows, train_rows.leftCols(state_dim),
                       train_rows.rightCols(train_rows.cols() - state_dim));

    EmbedTrainMetrics metrics;
    metrics.eval_loss.push_back(pol_eval_loss(ae, prep, dataset, eval_idx));
    metrics.best_loss = metrics.eval_loss[0];
    ParamSetF best = ae.params;

    Tape<float> tape;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(train_idx);
        for (size_t start = 0; start < train_idx.size();
             start += size_t(cfg.batch_policy)) {
            size_t end = std::min(train_idx.size(), start + size_t(cfg.batch_policy));
            Eigen::Index total = 0;
            for (size_t i = start; i < end; ++i)
                total += prep[size_t(dataset.records[size_t(train_idx[i])].traj)]
                             .state_actions.rows();
            MatF elements(total, dataset.trajectories[0].steps[0].s.size() +
                                     dataset.trajectories[0].steps[0].a.size());
            std::vector<Eigen::Index> offsets = {0};
            Eigen::Index row = 0;
            for (size_t i = start; i < end; ++i) {
                const auto& pm =
                    prep[size_t(dataset.records[size_t(train_idx[i])].traj)];
                elements.middleRows(row, pm.state_actions.rows()) = pm.state_actions;
                row += pm.state_actions.rows();
                offsets.push_back(row);
            }
            tape.reset();
            auto el = tape.leaf(ae.normalize_enc(elements));
            auto z = set_encoder_forward(tape, ae.params, "enc", ae.enc_spec, el,
                                         offsets, true, &drop_rng);
            auto zb = tape.segment_broadcast(z, offsets);
            auto in = tape.concat_cols(
                tape.leaf(ae.normalize_dec_in(elements.leftCols(state_dim))), zb);
            auto pred = mlp_forward(tape, ae.params, "dec", ae.dec_spec, in);
            auto targets = tape.leaf(
                ae.normalize_out(elements.rightCols(elements.cols() - state_dim)));
            auto loss = tape.mean_all(tape.square(tape.sub(pred, targets)));
            require(std::isfinite(tape.val(loss)(0, 0)),
                    "train_policy_autoencoder: NaN loss");
            ae.params.zero_grads();
            tape.backward(loss);
            opt.step(ae.params);
        }
        double ev = pol_eval_loss(ae, prep, dataset, eval_idx);
        require(std::isfinite(ev), "train_policy_autoencoder: NaN eval loss");
        metrics.eval_loss.push_back(ev);
        if (ev < metrics.best_loss) {
            metrics.best_loss = ev;
            metrics.best_epoch = epoch;
            best = ae.params;
        }
    }
    ae.params = best;
    return metrics;
}

AutoencoderPair train_autoencoders(const EmbedDataset& dataset, const EmbedConfig& cfg,
                                   const ArchConfig& arch, int state_dim,
                                   int action_dim, int n_probe, uint64_t seed) {
    AutoencoderPair pair;
    pair.dynamics = make_dynamics_autoencoder(state_dim, action_dim, cfg, arch,
                                              derive_seed(seed, "dyn-init"));
    pair.policy = make_policy_autoencoder(state_dim, action_dim, cfg, arch,
                                          derive_seed(seed, "pol-init"));
    pair.dynamics_metrics = train_dynamics_autoencoder(
        pair.dynamics, dataset, cfg, n_probe, derive_seed(seed, "dyn-train"));
    pair.policy_metrics = train_policy_autoencoder(pair.policy, dataset, cfg,
                                                   derive_seed(seed, "pol-train"));
    return pair;
}

RecordEmbedding embed_record(Autoencoder& dyn, Autoencoder& pol,
                             const Trajectory& traj, int n_probe) {
    RecordEmbedding out;
    int k = std::min(n_probe, traj.length());
    out.z_d = encode_dynamics(dyn, transition_matrix(traj, k),
                              "env:" + std::to_string(traj.env_index));
    out.z_pi = encode_policy(pol, state_action_matrix(traj),
                             "policy:" + std::to_string(traj.policy_id));
    return out;
}

double nearest_centroid_accuracy(const std::vector<VecF>& train_emb,
                                 const std::vector<int>& train_label,
                                 const std::vector<VecF>& eval_emb,
                                 const std::vector<int>& eval_label) {
    require(train_emb.size() == train_label.size() &&
                eval_emb.size() == eval_label.size(),
            "nearest_centroid_accuracy: length mismatch");
    require(!train_emb.empty() && !eval_emb.empty(),
            "nearest_centroid_accuracy: empty inputs");
    std::map<int, std::pair<VecF, int>> sums;
    for (size_t i = 0; i < train_emb.size(); ++i) {
        auto it = sums.find(train_label[i]);
        if (it == sums.end())
            sums.emplace(train_label[i], std::make_pair(train_emb[i], 1));
        else {
            it->second.first += train_emb[i];
            it->second.second += 1;
        }
    }
    std::vector<std::pair<int, VecF>> centroids;
    for (auto& [label, sum] : sums)
        centroids.emplace_back(label, VecF(sum.first / float(sum.second)));
    int correct = 0;
    for (size_t i = 0; i < eval_emb.size(); ++i) {
        int best_label = centroids[0].first;
        float best_dist = std::numeric_limits<float>::max();
        for (const auto& [label, c] : centroids) {
            float d = (eval_emb[i] - c).squaredNorm();
            if (d < best_dist) {
                best_dist = d;
                best_label = label;
            }
        }
        if (best_label == eval_label[i]) ++correct;
    }
    return double(correct) / double(eval_emb.size());
}

}  // namespace pdvf
