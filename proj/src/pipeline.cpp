#include "pdvf/pipeline.hpp"

#include "pdvf/checkpoint.hpp"
#include "pdvf/parallel.hpp"

#include <json.hpp>

#include <fstream>
#include <iostream>
#include <mutex>

namespace pdvf {

using nlohmann::json;
namespace fs = std::filesystem;

std::string phase_name(Phase p) {
    switch (p) {
        case Phase::Rl: return "rl";
        case Phase::Collect: return "collect";
        case Phase::Embed: return "embed";
        case Phase::Value: return "value";
        case Phase::Aggregate: return "aggregate";
        case Phase::Evaluate: return "evaluate";
        case Phase::Report: return "report";
    }
    return "unknown";
}

Phase phase_from_name(const std::string& name) {
    for (Phase p : {Phase::Rl, Phase::Collect, Phase::Embed, Phase::Value,
                    Phase::Aggregate, Phase::Evaluate, Phase::Report})
        if (phase_name(p) == name) return p;
    fail("unknown phase '", name, "'");
}

namespace {

const std::vector<Phase> kPhaseOrder = {Phase::Rl,       Phase::Collect,
                                        Phase::Embed,    Phase::Value,
                                        Phase::Aggregate, Phase::Evaluate,
                                        Phase::Report};

struct Paths {
    fs::path root, manifest, checkpoints, trajectories, embeddings, value, results;

    explicit Paths(const ExperimentConfig& cfg) {
        root = cfg.out();
        manifest = root / "manifest.json";
        checkpoints = root / "checkpoints";
        trajectories = root / "trajectories";
        embeddings = root / "embeddings";
        value = root / "value";
        results = root / "results";
    }
    void ensure() const {
        for (const auto& p :
             {root, checkpoints, trajectories, embeddings, value, results})
            fs::create_directories(p);
    }

    fs::path ppoenv(int env_index, int seed, int64_t step) const {
        return checkpoints / ("ppoenv_e" + std::to_string(env_index) + "_s" +
                              std::to_string(seed) + "_step" + std::to_string(step) +
                              ".bin");
    }
    fs::path ppoall(int seed) const {
        return checkpoints / ("ppoall_s" + std::to_string(seed) + ".bin");
    }
    fs::path ppodyn(int m) const {
        return checkpoints / ("ppodyn_m" + std::to_string(m) + ".bin");
    }
    fs::path kmeans_policy(int m, int c) const {
        return checkpoints / ("kmeans_m" + std::to_string(m) + "_c" +
                              std::to_string(c) + ".bin");
    }
    fs::path pair_file(int p, int e) const {
        return trajectories /
               ("pair_p" + std::to_string(p) + "_e" + std::to_string(e) + ".jsonl");
    }
    fs::path dyn_ae(int m) const {
        return embeddings / ("dyn_m" + std::to_string(m) + ".bin");
    }
    fs::path pol_ae(int m) const {
        return embeddings / ("pol_m" + std::to_string(m) + ".bin");
    }
    fs::path pol_agg(int m) const {
        return value / ("pol_agg_m" + std::to_string(m) + ".bin");
    }
    fs::path vf_noagg(int m) const {
        return value / ("vf_noagg_m" + std::to_string(m) + ".bin");
    }
    fs::path vf_agg(int m) const {
        return value / ("vf_m" + std::to_string(m) + ".bin");
    }
};

void write_json_atomic(const fs::path& path, const json& j) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        require(os.good(), "write_json: cannot open ", tmp.string());
        os << j.dump(2) << "\n";
        require(os.good(), "write_json: write failed");
    }
    fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
    std::ifstream is(path);
    require(is.good(), "read_json: cannot open ", path.string());
    return json::parse(is);
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        require(os.good(), "write_text: cannot open ", tmp.string());
        os << text;
        require(os.good(), "write_text: write failed");
    }
    fs::rename(tmp, path);
}

std::vector<float> to_vec(const VecF& v) {
    return {v.data(), v.data() + v.size()};
}

VecF from_vec(const std::vector<float>& v) {
    VecF out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out(Eigen::Index(i)) = v[i];
    return out;
}

// ---------------------------------------------------------------------------

class Pipeline {
public:
    Pipeline(const ExperimentConfig& cfg, bool force)
        : cfg_(cfg), paths_(cfg), force_(force) {
        cfg_.validate();
        paths_.ensure();
        envs_ = make_family(cfg_.family_spec);
        n_train_ = int(cfg_.family_spec.train_d.size());
        if (fs::exists(paths_.manifest)) {
            manifest_ = RunManifest::load(paths_.manifest);
            if (manifest_.config_hash != cfg_.hash()) {
                require(force_, "run_phase: config hash mismatch with existing "
                                "manifest at ",
                        paths_.manifest.string(), " (use --force to override)");
                manifest_.config_hash = cfg_.hash();
            }
        } else {
            manifest_.config_hash = cfg_.hash();
        }
    }

    RunManifest run(Phase phase) {
        check_upstream(phase);
        if (manifest_.phase_complete(phase_name(phase))) return manifest_;
        switch (phase) {
            case Phase::Rl: rl(); break;
            case Phase::Collect: collect(); break;
            case Phase::Embed: embed(); break;
            case Phase::Value: value(); break;
            case Phase::Aggregate: aggregate(); break;
            case Phase::Evaluate: evaluate(); break;
            case Phase::Report: report(); break;
        }
        manifest_.phases[phase_name(phase)] = true;
        manifest_.save_atomic(paths_.manifest);
        return manifest_;
    }

    fs::path do_export(const std::string& which, int model_seed);

private:
    void check_upstream(Phase phase) {
        for (Phase p : kPhaseOrder) {
            if (p == phase) return;
            require(manifest_.phase_complete(phase_name(p)),
                    "run_phase(", phase_name(phase),
                    "): upstream phase incomplete: ", phase_name(p));
        }
    }

    EnvInstance make_env(int env_index) const {
        const auto& ref = envs_[size_t(env_index)];
        return EnvInstance(ref.family(), ref.d(), ref.seed());
    }

    void record_checkpoint(const fs::path& path) {
        manifest_.artifacts[path.filename().string()] =
            fs::relative(path, paths_.root).string();
        manifest_.checkpoint_hashes[fs::relative(path, paths_.root).string()] =
            file_hash(path);
    }

    void save_policy_checkpoint(const PolicyCheckpoint& ck, const fs::path& path) {
        save_checkpoint(ck.params, path);
        json side;
        side["family"] = family_name(ck.meta.family);
        side["d"] = ck.meta.d;
        side["seed"] = ck.meta.seed;
        side["step"] = ck.meta.step;
        side["return_estimate"] = ck.meta.return_estimate;
        side["config_hash"] = cfg_.hash();
        fs::path sp = path;
        sp += ".json";
        write_json_atomic(sp, side);
        record_checkpoint(path);
    }

    ActorCritic load_policy(const fs::path& path, int extra_dim = 0) const {
        return ActorCritic::from_params(load_checkpoint(path),
                                        cfg_.family_spec.state_dim(),
                                        cfg_.family_spec.action_dim(), extra_dim);
    }

    // final checkpoints of the train-env ensemble; policy_id = position
    std::vector<PolicyCheckpoint> ensemble() const {
        std::vector<PolicyCheckpoint> out;
        for (int e = 0; e < n_train_; ++e) {
            for (int s : cfg_.rl_seeds) {
                PolicyCheckpoint ck;
                ck.meta.family = cfg_.family;
                ck.meta.d = envs_[size_t(e)].d();
                ck.meta.seed = uint64_t(s);
                ck.meta.step = cfg_.ppo.total_steps;
                ck.params =
                    load_checkpoint(paths_.ppoenv(e, s, cfg_.ppo.total_steps));
                out.push_back(std::move(ck));
            }
        }
        return out;
    }

    std::vector<EnvInstance> train_envs() const {
        return {envs_.begin(), envs_.begin() + n_train_};
    }

    bool method_enabled(Method m) const {
        for (const auto& spec : cfg_.methods)
            if (spec.method == m) return true;
        return false;
    }

    int kmeans_k() const {
        for (const auto& spec : cfg_.methods)
            if (spec.method == Method::Kmeans) return spec.kmeans_k;
        return 5;
    }

    // ---------------------------------------------------------------- phases
    void rl();
    void collect();
    void embed();
    void value();
    void aggregate();
    void evaluate();
    void report();

    EmbedDataset load_dataset() const;
    Autoencoder load_dyn_ae(int m) const;
    Autoencoder load_pol_ae(const fs::path& path) const;
    ValueFunction load_vf(const fs::path& path) const;
    std::vector<VecF> load_env_refs(int m) const;
    ActorCritic probe_policy() const;

    ExperimentConfig cfg_;
    Paths paths_;
    bool force_;
    RunManifest manifest_;
    std::vector<EnvInstance> envs_;
    int n_train_ = 0;
};

void Pipeline::rl() {
    struct Job {
        int env_index;
        int seed;
    };
    std::vector<Job> jobs;
    int n_envs = cfg_.ppoenv_on_test ? int(envs_.size()) : n_train_;
    for (int e = 0; e < n_envs; ++e)
        for (int s : cfg_.rl_seeds) jobs.push_back({e, s});

    std::mutex save_mu;
    parallel_for(int(jobs.size()), [&](int i) {
        const auto& job = jobs[size_t(i)];
        if (fs::exists(paths_.ppoenv(job.env_index, job.seed, cfg_.ppo.total_steps)))
            return;  // resumable at job granularity
        EnvInstance env = make_env(job.env_index);
        CheckpointMeta meta;
        meta.family = cfg_.family;
        meta.d = env.d();
        auto cks = train_ppo(
            env, cfg_.ppo,
            derive_seed(cfg_.base_seed, "ppoenv", job.env_index, job.seed), meta);
        std::lock_guard<std::mutex> lock(save_mu);
        for (auto& ck : cks) {
            ck.meta.seed = uint64_t(job.seed);
            save_policy_checkpoint(
                ck, paths_.ppoenv(job.env_index, job.seed, ck.meta.step));
        }
    });

    if (method_enabled(Method::PPOall)) {
        parallel_for(int(cfg_.rl_seeds.size()), [&](int si) {
            int s = cfg_.rl_seeds[size_t(si)];
            if (fs::exists(paths_.ppoall(s))) return;
            std::vector<EnvInstance> tenvs = train_envs();
            std::vector<EnvInstance*> ptrs;
            for (auto& e : tenvs) ptrs.push_back(&e);
            CheckpointMeta meta;
            meta.family = cfg_.family;
            meta.d = -1;  // trained across the whole train split
            auto cks = train_ppo_multi(ptrs, cfg_.ppo,
                                       derive_seed(cfg_.base_seed, "ppoall", s),
                                       nullptr, meta);
            cks.back().meta.seed = uint64_t(s);
            std::lock_guard<std::mutex> lock(save_mu);
            save_policy_checkpoint(cks.back(), paths_.ppoall(s));
        });
    }
}

void Pipeline::collect() {
    auto cks = ensemble();
    auto tenvs = train_envs();
    auto ds = collect_embedding_dataset(cks, tenvs, cfg_.embed.n_traj,
                                        derive_seed(cfg_.base_seed, "collect"));
    // one JSONL file per (policy, env) pair
    std::map<std::pair<int, int>, std::vector<Trajectory>> by_pair;
    for (const auto& rec : ds.records)
        by_pair[{rec.policy_id, rec.env_index}].push_back(
            ds.trajectories[size_t(rec.traj)]);
    json index;
    index["n_traj"] = cfg_.embed.n_traj;
    index["skipped_pairs"] = ds.skipped_pairs;
    json files = json::array();
    for (const auto& [key, trajs] : by_pair) {
        auto path = paths_.pair_file(key.first, key.second);
        write_trajectories_jsonl(path, trajs);
        files.push_back(fs::relative(path, paths_.root).string());
    }
    index["files"] = files;
    write_json_atomic(paths_.trajectories / "dataset.json", index);
}

EmbedDataset Pipeline::load_dataset() const {
    json index = read_json(paths_.trajectories / "dataset.json");
    int n_traj = index.at("n_traj").get<int>();
    EmbedDataset ds;
    for (const auto& skipped : index.at("skipped_pairs"))
        ds.skipped_pairs.push_back(skipped.get<std::string>());
    for (const auto& rel : index.at("files")) {
        auto trajs = read_trajectories_jsonl(paths_.root / rel.get<std::string>());
        int half = n_traj / 2;
        int t = 0;
        for (auto& traj : trajs) {
            EmbedRecord rec;
            rec.traj = int(ds.trajectories.size());
            rec.env_index = traj.env_index;
            rec.policy_id = traj.policy_id;
            rec.G = traj.G;
            rec.train_split = t < half;
            ds.trajectories.push_back(std::move(traj));
            ds.records.push_back(rec);
            ++t;
        }
    }
    return ds;
}

Autoencoder Pipeline::load_dyn_ae(int m) const {
    Autoencoder ae = make_dynamics_autoencoder(cfg_.family_spec.state_dim(),
                                               cfg_.family_spec.action_dim(),
                                               cfg_.embed, cfg_.arch, 0);
    ae.params = load_checkpoint(paths_.dyn_ae(m));
    return ae;
}

Autoencoder Pipeline::load_pol_ae(const fs::path& path) const {
    Autoencoder ae = make_policy_autoencoder(cfg_.family_spec.state_dim(),
                                             cfg_.family_spec.action_dim(),
                                             cfg_.embed, cfg_.arch, 0);
    ae.params = load_checkpoint(path);
    return ae;
}

ValueFunction Pipeline::load_vf(const fs::path& path) const {
    ValueFunction vf = make_value_function(cfg_.family_spec.state_dim(),
                                           cfg_.embed.d_emb_dynamics,
                                           cfg_.embed.d_emb_policy,
                                           cfg_.arch.value_hidden, 0);
    vf.params = load_checkpoint(path);
    return vf;
}

std::vector<VecF> Pipeline::load_env_refs(int m) const {
    json j = read_json(paths_.embeddings / ("env_refs_m" + std::to_string(m) +
                                            ".json"));
    std::vector<VecF> refs;
    for (const auto& row : j.at("refs"))
        refs.push_back(from_vec(row.get<std::vector<float>>()));
    return refs;
}

ActorCritic Pipeline::probe_policy() const {
    return load_policy(paths_.ppoenv(cfg_.probe_env_index, cfg_.probe_seed,
                                     cfg_.ppo.total_steps));
}

void Pipeline::embed() {
    auto ds = load_dataset();
    int sdim = cfg_.family_spec.state_dim();
    int adim = cfg_.family_spec.action_dim();
    int n_probe = cfg_.family_spec.n_probe;

    for (int m : cfg_.model_seeds) {
        Autoencoder dyn = make_dynamics_autoencoder(
            sdim, adim, cfg_.embed, cfg_.arch,
            derive_seed(cfg_.base_seed, "dyn-init", m));
        Autoencoder pol = make_policy_autoencoder(
            sdim, adim, cfg_.embed, cfg_.arch,
            derive_seed(cfg_.base_seed, "pol-init", m));
        EmbedTrainMetrics dyn_metrics, pol_metrics;
        // the two autoencoders share no state; train them concurrently
        parallel_for(2, [&](int which) {
            if (which == 0)
                dyn_metrics = train_dynamics_autoencoder(
                    dyn, ds, cfg_.embed, n_probe,
                    derive_seed(cfg_.base_seed, "dyn-train", m));
            else
                pol_metrics = train_policy_autoencoder(
                    pol, ds, cfg_.embed,
                    derive_seed(cfg_.base_seed, "pol-train", m));
        });
        save_checkpoint(dyn.params, paths_.dyn_ae(m));
        save_checkpoint(pol.params, paths_.pol_ae(m));
        record_checkpoint(paths_.dyn_ae(m));
        record_checkpoint(paths_.pol_ae(m));

        // per-record embeddings at the test-time operating point
        std::ofstream dcsv(paths_.embeddings / ("emb_dyn_m" + std::to_string(m) +
                                                ".csv"));
        std::ofstream pcsv(paths_.embeddings / ("emb_pol_m" + std::to_string(m) +
                                                ".csv"));
        auto header = [](std::ofstream& os, int dims) {
            os << "split,env_index,env_d,policy_id";
            for (int i = 0; i < dims; ++i) os << ",dim_" << i;
            os << "\n";
        };
        header(dcsv, cfg_.embed.d_emb_dynamics);
        header(pcsv, cfg_.embed.d_emb_policy);
        std::vector<VecF> env_sum(static_cast<size_t>(n_train_));
        std::vector<int> env_count(size_t(n_train_), 0);
        for (size_t i = 0; i < env_sum.size(); ++i)
            env_sum[i] = VecF::Zero(cfg_.embed.d_emb_dynamics);
        auto row = [&](std::ofstream& os, const EmbedRecord& rec, const VecF& z) {
            char buf[64];
            os << (rec.train_split ? "train" : "eval") << "," << rec.env_index
               << ",";
            std::snprintf(buf, sizeof(buf), "%.17g",
                          envs_[size_t(rec.env_index)].d());
            os << buf << "," << rec.policy_id;
            for (Eigen::Index k = 0; k < z.size(); ++k) {
                std::snprintf(buf, sizeof(buf), "%.9g", double(z(k)));
                os << "," << buf;
            }
            os << "\n";
        };
        for (const auto& rec : ds.records) {
            auto emb = embed_record(dyn, pol, ds.trajectories[size_t(rec.traj)],
                                    n_probe);
            row(dcsv, rec, emb.z_d.values);
            row(pcsv, rec, emb.z_pi.values);
            if (rec.train_split) {
                env_sum[size_t(rec.env_index)] += emb.z_d.values;
                env_count[size_t(rec.env_index)] += 1;
            }
        }

        json refs;
        refs["refs"] = json::array();
        for (size_t e = 0; e < env_sum.size(); ++e) {
            require(env_count[e] > 0, "embed: train env ", e, " has no records");
            VecF mean = env_sum[e] / float(env_count[e]);
            if (mean.norm() > 1e-8f) mean.normalize();
            refs["refs"].push_back(to_vec(mean));
        }
        write_json_atomic(paths_.embeddings /
                              ("env_refs_m" + std::to_string(m) + ".json"),
                          refs);

        json metrics;
        metrics["dynamics"] = {{"eval_loss", dyn_metrics.eval_loss},
                               {"best_epoch", dyn_metrics.best_epoch},
                               {"best_loss", dyn_metrics.best_loss}};
        metrics["policy"] = {{"eval_loss", pol_metrics.eval_loss},
                             {"best_epoch", pol_metrics.best_epoch},
                             {"best_loss", pol_metrics.best_loss}};
        write_json_atomic(paths_.embeddings /
                              ("metrics_m" + std::to_string(m) + ".json"),
                          metrics);
    }
}

void Pipeline::value() {
    auto cks = ensemble();
    auto tenvs = train_envs();
    for (int m : cfg_.model_seeds) {
        auto dyn = load_dyn_ae(m);
        auto pol = load_pol_ae(paths_.pol_ae(m));
        auto vds = make_value_dataset(cks, tenvs, dyn, pol, cfg_.value.n_traj,
                                      cfg_.family_spec.n_probe,
                                      derive_seed(cfg_.base_seed, "value", m));
        // persist samples and the raw logs backing the targets
        {
            std::ofstream os(paths_.value / ("samples_m" + std::to_string(m) +
                                             ".jsonl"));
            for (const auto& s : vds.samples) {
                json j;
                j["s0"] = to_vec(s.s0);
                j["z_pi"] = to_vec(s.z_pi.values);
                j["z_d"] = to_vec(s.z_d.values);
                j["G"] = s.G;
                j["policy_id"] = s.policy_id;
                j["env_index"] = s.env_index;
                j["split"] = s.train_split ? "train" : "eval";
                os << j.dump() << "\n";
            }
        }
        write_trajectories_jsonl(
            paths_.value / ("trajs_m" + std::to_string(m) + ".jsonl"),
            vds.trajectories);

        auto vf = make_value_function(cfg_.family_spec.state_dim(),
                                      cfg_.embed.d_emb_dynamics,
                                      cfg_.embed.d_emb_policy,
                                      cfg_.arch.value_hidden,
                                      derive_seed(cfg_.base_seed, "vf-init", m));
        auto metrics = train_value(vf, vds.samples, cfg_.value,
                                   derive_seed(cfg_.base_seed, "vf-train", m));
        save_checkpoint(vf.params, paths_.vf_noagg(m));
        record_checkpoint(paths_.vf_noagg(m));
        json mj;
        mj["eval_loss"] = metrics.eval_loss;
        mj["best_epoch"] = metrics.best_epoch;
        mj["best_loss"] = metrics.best_loss;
        mj["eval_r2"] = metrics.eval_r2;
        write_json_atomic(paths_.value / ("metrics_m" + std::to_string(m) + ".json"),
                          mj);
    }
}

namespace {

std::vector<ValueSample> load_samples(const fs::path& path) {
    std::ifstream is(path);
    require(is.good(), "load_samples: cannot open ", path.string());
    std::vector<ValueSample> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        ValueSample s;
        s.s0 = from_vec(j.at("s0").get<std::vector<float>>());
        s.z_pi.kind = EmbedKind::Policy;
        s.z_pi.values = from_vec(j.at("z_pi").get<std::vector<float>>());
        s.z_d.kind = EmbedKind::Dynamics;
        s.z_d.values = from_vec(j.at("z_d").get<std::vector<float>>());
        s.G = j.at("G").get<float>();
        s.policy_id = j.at("policy_id").get<int>();
        s.env_index = j.at("env_index").get<int>();
        s.train_split = j.at("split").get<std::string>() == "train";
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

void Pipeline::aggregate() {
    auto cks = ensemble();
    auto ds = load_dataset();
    auto probe = probe_policy();
    for (int m : cfg_.model_seeds) {
        auto dyn = load_dyn_ae(m);
        auto pol = load_pol_ae(paths_.pol_ae(m));
        auto vf = load_vf(paths_.vf_noagg(m));
        ValueDataset vds;
        vds.samples =
            load_samples(paths_.value / ("samples_m" + std::to_string(m) + ".jsonl"));

        auto tenvs = train_envs();
        auto vmetrics = aggregate_value(vf, dyn, pol, probe, tenvs, vds, cfg_.value,
                                        cfg_.family_spec.n_probe,
                                        derive_seed(cfg_.base_seed, "agg-value", m));
        save_checkpoint(vf.params, paths_.vf_agg(m));
        record_checkpoint(paths_.vf_agg(m));

        auto dmetrics = aggregate_policy_decoder(
            pol, dyn, vf, cks, ds, probe, tenvs, cfg_.value,
            cfg_.family_spec.n_probe,
            derive_seed(cfg_.base_seed, "agg-decoder", m));
        save_checkpoint(pol.params, paths_.pol_agg(m));
        record_checkpoint(paths_.pol_agg(m));

        json j;
        j["value"] = {{"round_eval_loss", vmetrics.round_eval_loss},
                      {"best_round", vmetrics.best_round},
                      {"best_loss", vmetrics.best_loss},
                      {"median_ope_error_before", vmetrics.median_ope_error_before},
                      {"median_ope_error_after", vmetrics.median_ope_error_after},
                      {"aggregated_samples", vmetrics.aggregated_samples}};
        j["decoder"] = {{"round_eval_loss", dmetrics.round_eval_loss},
                        {"initial_eval_loss", dmetrics.initial_eval_loss},
                        {"best_round", dmetrics.best_round},
                        {"best_loss", dmetrics.best_loss},
                        {"aggregated_pairs", dmetrics.aggregated_pairs},
                        {"median_return_before", dmetrics.median_return_before},
                        {"median_return_after", dmetrics.median_return_after}};
        write_json_atomic(paths_.value /
                              ("agg_metrics_m" + std::to_string(m) + ".json"),
                          j);
    }
}

void Pipeline::evaluate() {
    // baseline prep: artifacts that depend on the learned embeddings
    for (int m : cfg_.model_seeds) {
        auto refs = load_env_refs(m);
        if (method_enabled(Method::PPOdyn) && !fs::exists(paths_.ppodyn(m))) {
            std::vector<EnvInstance> tenvs = train_envs();
            std::vector<EnvInstance*> ptrs;
            for (auto& e : tenvs) ptrs.push_back(&e);
            CheckpointMeta meta;
            meta.family = cfg_.family;
            auto cks = train_ppo_multi(ptrs, cfg_.ppo,
                                       derive_seed(cfg_.base_seed, "ppodyn", m),
                                       &refs, meta);
            save_policy_checkpoint(cks.back(), paths_.ppodyn(m));
        }
        if (method_enabled(Method::Kmeans)) {
            auto km = kmeans_clusters(refs, std::min(kmeans_k(), n_train_),
                                      derive_seed(cfg_.base_seed, "kmeans", m));
            json cj;
            cj["assignments"] = km.assignments;
            cj["centroids"] = json::array();
            for (const auto& c : km.centroids) cj["centroids"].push_back(to_vec(c));
            write_json_atomic(paths_.checkpoints /
                                  ("kmeans_m" + std::to_string(m) + ".json"),
                              cj);
            for (size_t c = 0; c < km.clusters.size(); ++c) {
                if (fs::exists(paths_.kmeans_policy(m, int(c)))) continue;
                std::vector<EnvInstance> cluster_envs;
                for (int e : km.clusters[c]) cluster_envs.push_back(make_env(e));
                if (cluster_envs.empty()) cluster_envs.push_back(make_env(0));
                std::vector<EnvInstance*> ptrs;
                for (auto& e : cluster_envs) ptrs.push_back(&e);
                CheckpointMeta meta;
                meta.family = cfg_.family;
                auto cks = train_ppo_multi(
                    ptrs, cfg_.ppo,
                    derive_seed(cfg_.base_seed, "kmeans-policy", m, int(c)),
                    nullptr, meta);
                save_policy_checkpoint(cks.back(), paths_.kmeans_policy(m, int(c)));
            }
        }
    }

    // integrity snapshot: evaluation must not touch any parameters
    auto snapshot = [&]() {
        std::map<std::string, std::string> hashes;
        for (const auto& entry : fs::directory_iterator(paths_.checkpoints))
            if (entry.path().extension() == ".bin")
                hashes[entry.path().filename().string()] = file_hash(entry.path());
        for (const auto& dir : {paths_.embeddings, paths_.value})
            for (const auto& entry : fs::directory_iterator(dir))
                if (entry.path().extension() == ".bin")
                    hashes[entry.path().filename().string()] =
                        file_hash(entry.path());
        return hashes;
    };
    auto before = snapshot();

    std::vector<SeedArtifacts> artifacts;
    for (int m : cfg_.model_seeds) {
        SeedArtifacts art;
        art.model_seed = m;
        art.n_probe = cfg_.family_spec.n_probe;
        art.dyn_ae = load_dyn_ae(m);
        art.pol_ae = load_pol_ae(paths_.pol_agg(m));
        art.pol_ae_noagg = load_pol_ae(paths_.pol_ae(m));
        art.vf = load_vf(paths_.vf_agg(m));
        art.vf_noagg = load_vf(paths_.vf_noagg(m));
        art.probe = probe_policy();
        art.env_z = load_env_refs(m);
        int rl_seed = cfg_.rl_seeds[size_t(m) % cfg_.rl_seeds.size()];
        int n_envs = cfg_.ppoenv_on_test ? int(envs_.size()) : n_train_;
        for (int e = 0; e < n_envs; ++e)
            art.ppoenv.push_back(
                load_policy(paths_.ppoenv(e, rl_seed, cfg_.ppo.total_steps)));
        if (method_enabled(Method::PPOall)) {
            art.ppoall = load_policy(paths_.ppoall(rl_seed));
            art.has_ppoall = true;
        }
        if (method_enabled(Method::PPOdyn)) {
            art.ppodyn =
                load_policy(paths_.ppodyn(m), cfg_.embed.d_emb_dynamics);
            art.has_ppodyn = true;
        }
        if (method_enabled(Method::Kmeans)) {
            json cj = read_json(paths_.checkpoints /
                                ("kmeans_m" + std::to_string(m) + ".json"));
            for (const auto& c : cj.at("centroids"))
                art.kmeans_centroids.push_back(
                    from_vec(c.get<std::vector<float>>()));
            for (size_t c = 0; c < art.kmeans_centroids.size(); ++c)
                art.kmeans_policies.push_back(
                    load_policy(paths_.kmeans_policy(m, int(c))));
        }
        artifacts.push_back(std::move(art));
    }

    std::vector<int> eval_envs;
    if (cfg_.eval_on_train)
        for (int e = 0; e < n_train_; ++e) eval_envs.push_back(e);
    for (int e = n_train_; e < int(envs_.size()); ++e) eval_envs.push_back(e);

    struct Row {
        std::string method;
        double env_d;
        int seed;
        int run;
        double ret;
        int probe_steps;
    };
    struct Task {
        Method method;
        int env_index;
        size_t art_index;
    };
    std::vector<Task> tasks;
    for (const auto& spec : cfg_.methods) {
        if (spec.method == Method::PPOenv && !cfg_.ppoenv_on_test &&
            !cfg_.eval_on_train)
            continue;
        for (int e : eval_envs)
            for (size_t a = 0; a < artifacts.size(); ++a)
                tasks.push_back({spec.method, e, a});
    }
    std::vector<std::vector<Row>> rows(tasks.size());
    parallel_for(int(tasks.size()), [&](int ti) {
        const auto& task = tasks[size_t(ti)];
        auto& art = artifacts[task.art_index];
        for (int run = 0; run < cfg_.eval_runs; ++run) {
            EnvInstance env = make_env(task.env_index);
            EpisodeTrace trace;
            double ret = evaluate_episode(task.method, env, task.env_index, art,
                                          &trace);
            rows[size_t(ti)].push_back({method_name(task.method),
                                        envs_[size_t(task.env_index)].d(),
                                        art.model_seed, run, ret,
                                        trace.probe_steps});
        }
    });

    std::ostringstream csv;
    csv << "method,family,env_d,seed,run,return\n";
    int min_probe = std::numeric_limits<int>::max(), max_probe = 0;
    for (const auto& task_rows : rows)
        for (const auto& r : task_rows) {
            char buf[192];
            std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,%d,%d,%.17g\n",
                          r.method.c_str(), family_name(cfg_.family).c_str(),
                          r.env_d, r.seed, r.run, r.ret);
            csv << buf;
            min_probe = std::min(min_probe, r.probe_steps);
            max_probe = std::max(max_probe, r.probe_steps);
        }
    write_text_atomic(paths_.results / "results.csv", csv.str());

    auto after = snapshot();
    json integrity;
    integrity["before"] = before;
    integrity["after"] = after;
    integrity["identical"] = before == after;
    integrity["probe_steps_min"] = min_probe;
    integrity["probe_steps_max"] = max_probe;
    integrity["n_probe"] = cfg_.family_spec.n_probe;
    write_json_atomic(paths_.results / "protocol.json", integrity);
}

void Pipeline::report() {
    std::ifstream is(paths_.results / "results.csv");
    require(is.good(), "report: cannot open results.csv");
    std::string line;
    std::getline(is, line);  // header
    // (method, env_d) -> seed -> runs
    std::map<std::pair<std::string, double>, std::map<int, std::vector<double>>>
        grouped;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string method, fam, env_d_s, seed_s, run_s, ret_s;
        std::getline(ls, method, ',');
        std::getline(ls, fam, ',');
        std::getline(ls, env_d_s, ',');
        std::getline(ls, seed_s, ',');
        std::getline(ls, run_s, ',');
        std::getline(ls, ret_s, ',');
        grouped[{method, std::stod(env_d_s)}][std::stoi(seed_s)].push_back(
            std::stod(ret_s));
    }
    auto env_index_of = [&](double d) {
        for (size_t e = 0; e < envs_.size(); ++e)
            if (envs_[e].d() == d) return int(e);
        return -1;
    };
    std::vector<EvalResult> results;
    for (const auto& [key, by_seed] : grouped) {
        EvalResult r;
        r.method = key.first;
        r.env_d = key.second;
        r.env_index = env_index_of(key.second);
        for (const auto& [seed, runs] : by_seed) {
            r.seeds.push_back(seed);
            r.per_seed_runs.push_back(runs);
        }
        r.finalize();
        results.push_back(std::move(r));
    }
    std::vector<int> test_idx;
    for (int e = n_train_; e < int(envs_.size()); ++e) test_idx.push_back(e);
    auto rep = summarize(results, cfg_.family, test_idx);
    write_text_atomic(paths_.results / "report.txt", rep.text);

    std::ostringstream sum;
    sum << "method,env_d,mean,std\n";
    for (const auto& r : results) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g\n", r.method.c_str(),
                      r.env_d, r.mean, r.stddev);
        sum << buf;
    }
    write_text_atomic(paths_.results / "summary.csv", sum.str());

    json wins;
    for (const auto& [m, w] : rep.pdvf_wins) wins[m] = w;
    write_json_atomic(paths_.results / "wins.json", wins);
}

fs::path Pipeline::do_export(const std::string& which, int model_seed) {
    require(manifest_.phase_complete("embed"),
            "export-embeddings: embed phase incomplete");
    require(which == "policy" || which == "dynamics" || which == "both",
            "export-embeddings: which must be policy|dynamics|both");
    auto ds = load_dataset();
    auto dyn = load_dyn_ae(model_seed);
    auto pol = load_pol_ae(paths_.pol_ae(model_seed));
    fs::path dir = paths_.embeddings / "export";
    fs::create_directories(dir);

    auto write_kind = [&](EmbedKind kind) {
        int dims = kind == EmbedKind::Dynamics ? cfg_.embed.d_emb_dynamics
                                               : cfg_.embed.d_emb_policy;
        fs::path path =
            dir / (kind == EmbedKind::Dynamics ? "export_dynamics.csv"
                                               : "export_policy.csv");
        std::ostringstream os;
        os << "kind,env_d,policy_id,seed";
        for (int i = 0; i < dims; ++i) os << ",dim_" << i;
        os << "\n";
        for (const auto& rec : ds.records) {
            if (rec.train_split) continue;  // held-out trajectories only
            const auto& traj = ds.trajectories[size_t(rec.traj)];
            auto emb = embed_record(dyn, pol, traj, cfg_.family_spec.n_probe);
            const VecF& z =
                kind == EmbedKind::Dynamics ? emb.z_d.values : emb.z_pi.values;
            char buf[64];
            os << (kind == EmbedKind::Dynamics ? "dynamics" : "policy") << ",";
            std::snprintf(buf, sizeof(buf), "%.17g",
                          envs_[size_t(rec.env_index)].d());
            os << buf << "," << rec.policy_id << "," << model_seed;
            for (Eigen::Index k = 0; k < z.size(); ++k) {
                std::snprintf(buf, sizeof(buf), "%.9g", double(z(k)));
                os << "," << buf;
            }
            os << "\n";
        }
        write_text_atomic(path, os.str());
        return path;
    };

    if (which == "policy") return write_kind(EmbedKind::Policy);
    if (which == "dynamics") return write_kind(EmbedKind::Dynamics);
    write_kind(EmbedKind::Dynamics);
    write_kind(EmbedKind::Policy);
    return dir;
}

}  // namespace

RunManifest run_phase(Phase phase, const ExperimentConfig& cfg, bool force) {
    Pipeline p(cfg, force);
    return p.run(phase);
}

RunManifest run_all(const ExperimentConfig& cfg, bool force) {
    RunManifest m;
    for (Phase p : {Phase::Rl, Phase::Collect, Phase::Embed, Phase::Value,
                    Phase::Aggregate, Phase::Evaluate, Phase::Report})
        m = run_phase(p, cfg, force);
    return m;
}

fs::path export_embeddings(const ExperimentConfig& cfg, const std::string& which,
                           int model_seed) {
    Pipeline p(cfg, false);
    return p.do_export(which, model_seed);
}

}  // namespace pdvf
