#pragma once

#include "pdvf/pdvf.hpp"

#include <map>

namespace pdvf {

enum class Method {
    PDVF,
    PPOenv,
    PPOall,
    PPOdyn,
    NN,
    Kmeans,
    NoAggValue,
    NoAggPolicy,
};

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct MethodSpec {
    Method method = Method::PDVF;
    int kmeans_k = 5;

    void validate() const { require(kmeans_k >= 1, "MethodSpec: K >= 1"); }
};

// Everything one model seed needs to evaluate every method. PPOenv policies
// are indexed by env position in the family list (train envs first); test-env
// entries exist only when the config trained the oracle policies.
struct SeedArtifacts {
    int model_seed = 0;
    int n_probe = 1;
    Autoencoder dyn_ae;
    Autoencoder pol_ae;         // decoder after aggregation
    Autoencoder pol_ae_noagg;   // decoder before aggregation
    ValueFunction vf;           // after value aggregation
    ValueFunction vf_noagg;     // before value aggregation
    ActorCritic probe;
    std::vector<VecF> env_z;    // per train env reference dynamics embedding
    std::vector<ActorCritic> ppoenv;  // per env (family order), may be shorter
    ActorCritic ppoall;
    bool has_ppoall = false;
    ActorCritic ppodyn;         // conditioned on z_d
    bool has_ppodyn = false;
    std::vector<VecF> kmeans_centroids;
    std::vector<ActorCritic> kmeans_policies;
};

struct EpisodeTrace {
    int probe_steps = 0;
    int selected_policy = -1;  // env index (NN) or cluster id (Kmeans)
    Embedding z_d;
    Embedding z_star;  // PDVF variants only
};

// Runs one full episode of `method` on env (env_index is the env's position
// in the family list). Every method burns exactly n_probe probe-policy steps
// first; the return includes those rewards.
double evaluate_episode(Method method, EnvInstance& env, int env_index,
                        SeedArtifacts& art, EpisodeTrace* trace = nullptr);

struct EvalResult {
    std::string method;
    int env_index = -1;
    double env_d = 0;
    std::vector<int> seeds;
    std::vector<std::vector<double>> per_seed_runs;  // aligned with seeds
    double mean = 0;    // mean over seeds of the per-seed run average
    double stddev = 0;  // population std of per-seed averages across seeds

    void finalize();
};

// Lloyd iterations with k-means++ style seeding; deterministic given seed.
// Empty clusters are re-seeded at the farthest point from its centroid.
struct KmeansResult {
    std::vector<int> assignments;
    std::vector<VecF> centroids;
    std::vector<std::vector<int>> clusters;  // member indices per cluster
    double inertia = 0;
};

KmeansResult kmeans_clusters(const std::vector<VecF>& embeddings, int k,
                             uint64_t seed, int max_iters = 100);

int nearest_centroid(const std::vector<VecF>& centroids, const VecF& z);

// Mean return of each policy on each env over `runs` deterministic episodes.
MatD cross_return_matrix(std::vector<ActorCritic>& policies,
                         const std::vector<EnvInstance>& envs, int runs);

struct Report {
    std::string csv;   // method,family,env_d,seed,run,return
    std::string text;  // per-env, per-method mean +- std table
    std::map<std::string, int> pdvf_wins;  // vs each other method, test envs
};

Report summarize(const std::vector<EvalResult>& results, Family family,
                 const std::vector<int>& test_env_indices);

}  // namespace pdvf
