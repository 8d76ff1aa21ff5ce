#pragma once

#include "pdvf/embed.hpp"

namespace pdvf {

// PSD matrix A = L L^T scoring policy embeddings for one (s0, z_d).
struct QuadraticForm {
    MatF A;
    VecF s0;
    VecF z_d;
};

struct ValueSample {
    VecF s0;
    Embedding z_pi;
    Embedding z_d;
    float G = 0.f;  // pair-level Monte-Carlo mean, unshifted
    int policy_id = -1;
    int env_index = -1;
    bool train_split = false;
};

struct ValueConfig {
    float lr = 5e-3f;
    int batch = 128;
    int epochs_initial = 200;
    int epochs_per_aggregation = 100;
    int max_aggregation_rounds = 20;
    int n_traj = 20;          // value-phase trajectories per pair
    float target_shift = 0.f; // per-family offset keeping targets non-negative
    // policy-decoder aggregation knobs
    int decoder_rounds = 20;
    int decoder_epochs = 100;
    int decoder_batch = 2048;
    float decoder_lr = 1e-2f;
    int decoder_policy_sample = 8;

    void validate() const {
        require(lr > 0 && batch > 0, "ValueConfig: lr/batch must be positive");
        require(epochs_initial > 0 && epochs_per_aggregation > 0,
                "ValueConfig: epoch counts must be positive");
        require(max_aggregation_rounds >= 1 && n_traj >= 2,
                "ValueConfig: rounds and n_traj");
        require(decoder_rounds >= 1 && decoder_epochs > 0 && decoder_batch > 0 &&
                    decoder_lr > 0 && decoder_policy_sample >= 1,
                "ValueConfig: decoder aggregation knobs");
    }
};

// The trained estimator psi.
struct ValueFunction {
    ValueTrunkSpec spec;
    ParamSetF params;
};

ValueFunction make_value_function(int state_dim, int d_emb_dynamics,
                                  int d_emb_policy, int hidden, uint64_t seed);

QuadraticForm build_A(const ValueFunction& vf, const VecF& s0, const Embedding& z_d);

// G_hat = z_pi^T A z_pi; always >= 0, invariant under z -> -z.
float predict_return(const ValueFunction& vf, const VecF& s0, const Embedding& z_pi,
                     const Embedding& z_d);

// Sign-normalized top eigenvector of A; the all-zero form falls back to e1
// with a warning on stderr.
Embedding optimal_policy_embedding(const QuadraticForm& form);

struct ValueDataset {
    std::vector<ValueSample> samples;
    std::vector<Trajectory> trajectories;  // raw logs backing the targets
};

// Per (checkpoint, env) pair: n_traj stochastic episodes whose mean return is
// the shared target G of all the pair's samples; z_d comes from each
// trajectory's first n_probe transitions, z_pi from its full (s, a) set.
ValueDataset make_value_dataset(const std::vector<PolicyCheckpoint>& checkpoints,
                                const std::vector<EnvInstance>& train_envs,
                                Autoencoder& dyn_ae, Autoencoder& pol_ae,
                                int n_traj, int n_probe, uint64_t base_seed);

struct ValueTrainMetrics {
    std::vector<double> eval_loss;  // shifted-target MSE; index 0 untrained
    int best_epoch = 0;
    double best_loss = 0;
    double eval_r2 = 0;  // on the eval split, shift-invariant
};

// Supervised regression of the shifted return; keeps the lowest-eval-loss
// snapshot.
ValueTrainMetrics train_value(ValueFunction& vf,
                              const std::vector<ValueSample>& samples,
                              const ValueConfig& cfg, uint64_t seed);

// One full PD-VF episode: probe for n_probe steps, infer z_d, build A at the
// episode's initial state, decode the OPE until termination. The returned G
// includes the probe-step rewards.
struct PdvfEpisode {
    double G = 0;
    Embedding z_d;
    Embedding z_star;
    VecF s0;
    int probe_steps = 0;
    std::vector<VecF> decoded_states;  // states where the decoder acted
};

PdvfEpisode run_pdvf_episode(EnvInstance& env, const ActorCritic& probe,
                             Autoencoder& dyn_ae, const Autoencoder& pol_ae,
                             const ValueFunction& vf, int n_probe);

struct AggregateValueMetrics {
    std::vector<double> round_eval_loss;  // on the original eval split
    int best_round = 0;                   // 1-based; round whose snapshot won
    double best_loss = 0;
    double median_ope_error_before = 0;  // median |G_hat - (G + shift)| over envs
    double median_ope_error_after = 0;
    int aggregated_samples = 0;
};

// DAgger-style loop for the value function: each round collects one decoded
// OPE episode per train env, appends (s0, z*, z_d, observed G) to the
// training pool and retrains. Keeps the lowest-eval-loss round snapshot.
AggregateValueMetrics aggregate_value(ValueFunction& vf, Autoencoder& dyn_ae,
                                      const Autoencoder& pol_ae,
                                      const ActorCritic& probe,
                                      std::vector<EnvInstance>& train_envs,
                                      const ValueDataset& base,
                                      const ValueConfig& cfg, int n_probe,
                                      uint64_t seed);

struct AggregateDecoderMetrics {
    std::vector<double> round_eval_loss;  // decoder loss on the original eval split
    double initial_eval_loss = 0;
    int best_round = 0;
    double best_loss = 0;
    int aggregated_pairs = 0;
    double median_return_before = 0;  // decoded-OPE returns over train envs
    double median_return_after = 0;
};

// DAgger-style loop for the policy decoder: roll out decoded OPE policies,
// relabel the visited states with the original checkpoint policies' actions
// and retrain the decoder (encoder frozen) on original plus aggregated pairs.
AggregateDecoderMetrics aggregate_policy_decoder(
    Autoencoder& pol_ae, Autoencoder& dyn_ae, const ValueFunction& vf,
    const std::vector<PolicyCheckpoint>& checkpoints,
    const EmbedDataset& embed_data, const ActorCritic& probe,
    std::vector<EnvInstance>& train_envs, const ValueConfig& cfg, int n_probe,
    uint64_t seed);

}  // namespace pdvf
