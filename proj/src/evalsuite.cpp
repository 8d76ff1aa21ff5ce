#include "pdvf/evalsuite.hpp"

#include <iomanip>
#include <sstream>

namespace pdvf {

std::string method_name(Method m) {
    switch (m) {
        case Method::PDVF: return "PDVF";
        case Method::PPOenv: return "PPOenv";
        case Method::PPOall: return "PPOall";
        case Method::PPOdyn: return "PPOdyn";
        case Method::NN: return "NN";
        case Method::Kmeans: return "Kmeans";
        case Method::NoAggValue: return "NoAggValue";
        case Method::NoAggPolicy: return "NoAggPolicy";
    }
    return "unknown";
}

Method method_from_name(const std::string& name) {
    for (Method m : {Method::PDVF, Method::PPOenv, Method::PPOall, Method::PPOdyn,
                     Method::NN, Method::Kmeans, Method::NoAggValue,
                     Method::NoAggPolicy})
        if (method_name(m) == name) return m;
    fail("unknown method '", name, "'");
}

namespace {

struct ProbeResult {
    double reward_sum = 0;
    VecF state;  // state after the probe
    Embedding z_d;
    VecF s0;
    int steps = 0;
};

ProbeResult run_probe(EnvInstance& env, const ActorCritic& probe,
                      Autoencoder& dyn_ae, int n_probe) {
    ProbeResult out;
    VecF s = env.reset();
    out.s0 = s;
    std::vector<Transition> steps;
    for (int t = 0; t < n_probe; ++t) {
        require(!env.done(), "evaluate_episode: episode ended during the probe");
        VecF a = probe.act(s, true, nullptr).action;
        auto r = env.step(a);
        steps.push_back({s, a, r.reward, r.state, r.done});
        out.reward_sum += r.reward;
        s = r.state;
        ++out.steps;
    }
    require(!env.done(), "evaluate_episode: episode ended during the probe");
    Trajectory tmp;
    tmp.steps = std::move(steps);
    out.z_d = encode_dynamics(dyn_ae, transition_matrix(tmp, n_probe), "probe");
    out.state = s;
    return out;
}

double act_to_end(EnvInstance& env, const std::function<VecF(const VecF&)>& act,
                  VecF s) {
    double total = 0;
    while (!env.done()) {
        auto r = env.step(act(s));
        total += r.reward;
        s = r.state;
    }
    return total;
}

double pdvf_variant(EnvInstance& env, SeedArtifacts& art, const ValueFunction& vf,
                    const Autoencoder& dec, EpisodeTrace* trace) {
    auto probe = run_probe(env, art.probe, art.dyn_ae, art.n_probe);
    auto form = build_A(vf, probe.s0, probe.z_d);
    auto z_star = optimal_policy_embedding(form);
    if (trace) {
        trace->probe_steps = probe.steps;
        trace->z_d = probe.z_d;
        trace->z_star = z_star;
    }
    double rest = act_to_end(
        env, [&](const VecF& s) { return decode_action(dec, s, z_star.values); },
        probe.state);
    return probe.reward_sum + rest;
}

}  // namespace

double evaluate_episode(Method method, EnvInstance& env, int env_index,
                        SeedArtifacts& art, EpisodeTrace* trace) {
    switch (method) {
        case Method::PDVF:
            return pdvf_variant(env, art, art.vf, art.pol_ae, trace);
        case Method::NoAggValue:
            return pdvf_variant(env, art, art.vf_noagg, art.pol_ae, trace);
        case Method::NoAggPolicy:
            return pdvf_variant(env, art, art.vf, art.pol_ae_noagg, trace);
        case Method::PPOenv: {
            // oracle: the policy trained on this very env; probe burned anyway
            auto probe = run_probe(env, art.probe, art.dyn_ae, art.n_probe);
            require(env_index >= 0 && size_t(env_index) < art.ppoenv.size(),
                    "evaluate_episode: PPOenv policy missing for env ", env_index,
                    "; required training stage: rl (ppoenv_on_test)");
            auto& ac = art.ppoenv[size_t(env_index)];
            if (trace) trace->probe_steps = probe.steps;
            return probe.reward_sum + act_to_end(env, [&](const VecF& s) {
                       return ac.act(s, true, nullptr).action;
                   }, probe.state);
        }
        case Method::PPOall: {
            require(art.has_ppoall,
                    "evaluate_episode: PPOall missing; required training stage: rl");
            auto probe = run_probe(env, art.probe, art.dyn_ae, art.n_probe);
            if (trace) trace->probe_steps = probe.steps;
            return probe.reward_sum + act_to_end(env, [&](const VecF& s) {
                       return art.ppoall.act(s, true, nullptr).action;
                   }, probe.state);
        }
        case Method::PPOdyn: {
            require(art.has_ppodyn, "evaluate_episode: PPOdyn missing; required "
                                    "training stage: evaluate (baseline prep)");
            auto probe = run_probe(env, art.probe, art.dyn_ae, art.n_probe);
            if (trace) {
                trace->probe_steps = probe.steps;
                trace->z_d = probe.z_d;
            }
            VecF z = probe.z_d.values;
            return probe.reward_sum + act_to_end(env, [&](const VecF& s) {
                       VecF in(s.size() + z.size());
                       in << s, z;
                       return art.ppodyn.act(in, true, nullptr).action;
                   }, probe.state);
        }
        case Method::NN: {
            auto probe = run_probe(env, art.probe, art.dyn_ae, art.n_probe);
            require(!art.env_z.empty(), "evaluate_episode: NN needs env embeddings;"
                                        " required training stage: embed");
            int pick = nearest_centroid(art.env_z, probe.z_d.values);
            require(size_t(pick) < art.ppoenv.size(),
                    "evaluate_episode: PPOenv policy missing for train env ", pick,
                    "; required training stage: rl");
            if (trace) {
                trace->probe_steps = probe.steps;
                trace->z_d = probe.z_d;
                trace->selected_policy = pick;
            }
            auto& ac = art.ppoenv[size_t(pick)];
            return probe.reward_sum + act_to_end(env, [&](const VecF& s) {
                       return ac.act(s, true, nullptr).action;
                   }, probe.state);
        }
        case Method::Kmeans: {
            auto probe = run_probe(env, art.probe, art.dyn_ae, art.n_probe);
            require(!art.kmeans_centroids.empty() &&
                        art.kmeans_centroids.size() == art.kmeans_policies.size(),
                    "evaluate_episode: Kmeans artifacts missing; required training "
                    "stage: evaluate (baseline prep)");
            int pick = nearest_centroid(art.kmeans_centroids, probe.z_d.values);
            if (trace) {
                trace->probe_steps = probe.steps;
                trace->z_d = probe.z_d;
                trace->selected_policy = pick;
            }
            auto& ac = art.kmeans_policies[size_t(pick)];
            return probe.reward_sum + act_to_end(env, [&](const VecF& s) {
                       return ac.act(s, true, nullptr).action;
                   }, probe.state);
        }
    }
    fail("evaluate_episode: unhandled method");
}

void EvalResult::finalize() {
    require(!per_seed_runs.empty(), "EvalResult: no runs");
    std::vector<double> seed_means;
    for (const auto& runs : per_seed_runs) {
        require(!runs.empty(), "EvalResult: empty run list");
        double m = 0;
        for (double g : runs) m += g;
        seed_means.push_back(m / double(runs.size()));
    }
    mean = 0;
    for (double m : seed_means) mean += m;
    mean /= double(seed_means.size());
    double var = 0;
    for (double m : seed_means) var += (m - mean) * (m - mean);
    stddev = std::sqrt(var / double(seed_means.size()));
}

int nearest_centroid(const std::vector<VecF>& centroids, const VecF& z) {
    require(!centroids.empty(), "nearest_centroid: empty centroid list");
    int best = 0;
    float best_d = std::numeric_limits<float>::max();
    for (size_t i = 0; i < centroids.size(); ++i) {
        float d = (centroids[i] - z).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = int(i);
        }
    }
    return best;
}

KmeansResult kmeans_clusters(const std::vector<VecF>& embeddings, int k,
                             uint64_t seed, int max_iters) {
    require(k >= 1, "kmeans_clusters: k >= 1");
    require(int(embeddings.size()) >= k, "kmeans_clusters: need at least ", k,
            " embeddings, got ", embeddings.size());
    int n = int(embeddings.size());
    Rng rng(seed);
    KmeansResult res;
    // k-means++ seeding
    res.centroids.push_back(embeddings[size_t(rng.uniform_int(n))]);
    while (int(res.centroids.size()) < k) {
        std::vector<double> d2(static_cast<size_t>(n));
        double total = 0;
        for (int i = 0; i < n; ++i) {
            float best = std::numeric_limits<float>::max();
            for (const auto& c : res.centroids)
                best = std::min(best, (embeddings[size_t(i)] - c).squaredNorm());
            d2[size_t(i)] = best;
            total += best;
        }
        double pickat = rng.uniform(0, total);
        int pick = n - 1;
        double acc = 0;
        for (int i = 0; i < n; ++i) {
            acc += d2[size_t(i)];
            if (acc >= pickat) {
                pick = i;
                break;
            }
        }
        res.centroids.push_back(embeddings[size_t(pick)]);
    }

    res.assignments.assign(size_t(n), -1);
    for (int iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int a = nearest_centroid(res.centroids, embeddings[size_t(i)]);
            if (a != res.assignments[size_t(i)]) {
                changed = true;
                res.assignments[size_t(i)] = a;
            }
        }
        std::vector<VecF> sums(size_t(k), VecF::Zero(embeddings[0].size()));
        std::vector<int> counts(size_t(k), 0);
        for (int i = 0; i < n; ++i) {
            sums[size_t(res.assignments[size_t(i)])] += embeddings[size_t(i)];
            counts[size_t(res.assignments[size_t(i)])] += 1;
        }
        for (int c = 0; c < k; ++c) {
            if (counts[size_t(c)] == 0) {
                // re-seed at the point farthest from its current centroid
                int far = 0;
                float far_d = -1;
                for (int i = 0; i < n; ++i) {
                    float d = (embeddings[size_t(i)] -
                               res.centroids[size_t(res.assignments[size_t(i)])])
                                  .squaredNorm();
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                res.centroids[size_t(c)] = embeddings[size_t(far)];
                changed = true;
            } else {
                res.centroids[size_t(c)] =
                    sums[size_t(c)] / float(counts[size_t(c)]);
            }
        }
        if (!changed) break;
    }
    res.clusters.assign(size_t(k), {});
    res.inertia = 0;
    for (int i = 0; i < n; ++i) {
        res.clusters[size_t(res.assignments[size_t(i)])].push_back(i);
        res.inertia +=
            double((embeddings[size_t(i)] -
                    res.centroids[size_t(res.assignments[size_t(i)])])
                       .squaredNorm());
    }
    return res;
}

MatD cross_return_matrix(std::vector<ActorCritic>& policies,
                         const std::vector<EnvInstance>& envs, int runs) {
    require(!policies.empty() && !envs.empty() && runs >= 1,
            "cross_return_matrix: empty inputs");
    MatD m(policies.size(), envs.size());
    for (size_t p = 0; p < policies.size(); ++p) {
        for (size_t e = 0; e < envs.size(); ++e) {
            double total = 0;
            int ok = 0;
            for (int r = 0; r < runs; ++r) {
                try {
                    EnvInstance env(envs[e].family(), envs[e].d(), envs[e].seed());
                    auto traj = rollout_episode(
                        env,
                        [&](const VecF& s) {
                            return policies[p].act(s, true, nullptr).action;
                        },
                        uint64_t(r));
                    total += traj.G;
                    ++ok;
                } catch (const std::exception&) {
                    // failed rollout: entry falls back to the successful runs
                }
            }
            m(Eigen::Index(p), Eigen::Index(e)) =
                ok > 0 ? total / ok : std::numeric_limits<double>::quiet_NaN();
        }
    }
    return m;
}

Report summarize(const std::vector<EvalResult>& results, Family family,
                 const std::vector<int>& test_env_indices) {
    require(!results.empty(), "summarize: no results");
    Report rep;
    std::ostringstream csv;
    csv << "method,family,env_d,seed,run,return\n";
    for (const auto& r : results) {
        for (size_t si = 0; si < r.seeds.size(); ++si)
            for (size_t run = 0; run < r.per_seed_runs[si].size(); ++run) {
                char buf[160];
                std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,%d,%d,%.17g\n",
                              r.method.c_str(), family_name(family).c_str(),
                              r.env_d, r.seeds[si], int(run),
                              r.per_seed_runs[si][run]);
                csv << buf;
            }
    }
    rep.csv = csv.str();

    // env -> method -> (mean, std)
    std::map<int, std::map<std::string, std::pair<double, double>>> table;
    std::vector<std::string> methods;
    for (const auto& r : results) {
        table[r.env_index][r.method] = {r.mean, r.stddev};
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
            methods.push_back(r.method);
    }

    std::ostringstream txt;
    txt << "family: " << family_name(family) << "\n";
    txt << std::left << std::setw(10) << "env_d";
    for (const auto& m : methods) txt << std::setw(22) << m;
    txt << "\n";
    for (const auto& [env_index, row] : table) {
        double env_d = 0;
        for (const auto& r : results)
            if (r.env_index == env_index) env_d = r.env_d;
        bool is_test = std::find(test_env_indices.begin(), test_env_indices.end(),
                                 env_index) != test_env_indices.end();
        std::ostringstream label;
        label << std::fixed << std::setprecision(3) << env_d << (is_test ? "*" : "");
        txt << std::setw(10) << label.str();
        for (const auto& m : methods) {
            auto it = row.find(m);
            if (it == row.end()) {
                txt << std::setw(22) << "-";
            } else {
                char buf[64];
                std::snprintf(buf, sizeof(buf), "%.3f +- %.3f", it->second.first,
                              it->second.second);
                txt << std::setw(22) << buf;
            }
        }
        txt << "\n";
    }
    txt << "(* = held-out test environment; PPOenv on test envs has oracle "
           "access: it was trained on them)\n";

    for (const auto& m : methods) {
        if (m == "PDVF") continue;
        int wins = 0;
        for (int e : test_env_indices) {
            auto it = table.find(e);
            if (it == table.end()) continue;
            auto pd = it->second.find("PDVF");
            auto other = it->second.find(m);
            if (pd != it->second.end() && other != it->second.end() &&
                pd->second.first >= other->second.first)
                ++wins;
        }
        rep.pdvf_wins[m] = wins;
    }
    if (!rep.pdvf_wins.empty()) {
        txt << "PDVF wins on test envs:";
        for (const auto& [m, w] : rep.pdvf_wins)
            txt << " vs " << m << ": " << w << "/" << test_env_indices.size();
        txt << "\n";
    }
    rep.text = txt.str();
    return rep;
}

}  // namespace pdvf
