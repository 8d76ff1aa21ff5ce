#pragma once

#include "pdvf/actor_critic.hpp"
#include "pdvf/nets.hpp"
#include "pdvf/ppo.hpp"
#include "pdvf/rollout.hpp"

#include <optional>

namespace pdvf {

enum class EmbedKind { Policy, Dynamics };

// Unit-l2 vector summarizing either a policy's behavior or an environment's
// hidden transition parameter, with a provenance tag.
struct Embedding {
    EmbedKind kind = EmbedKind::Dynamics;
    VecF values;
    std::string source;

    bool unit_norm(float tol = 1e-6f) const {
        return std::abs(values.norm() - 1.f) <= tol;
    }
};

struct EmbedRecord {
    int traj = 0;  // index into EmbedDataset::trajectories
    int env_index = -1;
    int policy_id = -1;
    double G = 0;
    bool train_split = false;
};

struct EmbedDataset {
    std::vector<Trajectory> trajectories;
    std::vector<EmbedRecord> records;
    std::vector<std::string> skipped_pairs;

    size_t size() const { return records.size(); }
};

struct EmbedConfig {
    float lr_dynamics = 1e-3f;
    float lr_policy = 1e-2f;
    int batch_dynamics = 8;
    int batch_policy = 2048;
    int max_epochs = 200;
    int d_emb_policy = 8;
    int d_emb_dynamics = 2;
    int n_traj = 20;  // trajectories per (policy, env) pair

    void validate() const {
        require(lr_dynamics > 0 && lr_policy > 0, "EmbedConfig: lrs must be positive");
        require(batch_dynamics > 0 && batch_policy > 0, "EmbedConfig: batch sizes");
        require(max_epochs > 0 && n_traj > 0, "EmbedConfig: epochs and n_traj");
        require(d_emb_policy > 0 && d_emb_dynamics > 0, "EmbedConfig: d_emb");
    }
};

// Network-shape knobs shared by the encoders, decoders and value trunk.
struct ArchConfig {
    int d_model = 64;
    int ff_hidden = 64;
    float dropout = 0.1f;
    int decoder_hidden = 64;
    int value_hidden = 64;

    void validate() const {
        require(d_model > 0 && ff_hidden > 0, "ArchConfig: widths must be positive");
        require(dropout >= 0.f && dropout < 1.f, "ArchConfig: dropout in [0,1)");
    }
};

// One autoencoder: "enc.*" set-encoder tensors plus "dec.*" decoder tensors
// in a single ParamSet so they train under one optimizer. "norm.*" tensors
// hold per-feature input/target normalizers (identity until fitted from the
// training split); they receive no gradients and ride along in checkpoints.
struct Autoencoder {
    SetEncoderSpec enc_spec;
    MlpSpec dec_spec;
    ParamSetF params;

    MatF normalize_enc(const MatF& elements) const;
    MatF normalize_dec_in(const MatF& sa) const;  // the non-embedding part
    MatF normalize_out(const MatF& targets) const;
    MatF denormalize_out(const MatF& out) const;
    // Fits all three normalizers; rows are raw feature vectors.
    void fit_normalizers(const MatF& enc_rows, const MatF& dec_in_rows,
                         const MatF& target_rows);
};

Autoencoder make_dynamics_autoencoder(int state_dim, int action_dim,
                                      const EmbedConfig& cfg, const ArchConfig& arch,
                                      uint64_t seed);
Autoencoder make_policy_autoencoder(int state_dim, int action_dim,
                                    const EmbedConfig& cfg, const ArchConfig& arch,
                                    uint64_t seed);

// Eval-mode embedding of a set of (s, a, s') triples, one per row.
Embedding encode_dynamics(Autoencoder& ae, const MatF& transitions,
                          std::string source = {});
// Eval-mode embedding of a set of (s, a) pairs, one per row.
Embedding encode_policy(Autoencoder& ae, const MatF& state_actions,
                        std::string source = {});

VecF decode_next_state(const Autoencoder& ae, const VecF& s, const VecF& a,
                       const VecF& z_d);
VecF decode_action(const Autoencoder& ae, const VecF& s, const VecF& z_pi);

// Collects n_traj stochastic rollouts for every (checkpoint, env) pair; the
// first half of each pair goes to the train split. Pairs whose rollout fails
// are skipped and recorded. Environments must all be train environments.
EmbedDataset collect_embedding_dataset(const std::vector<PolicyCheckpoint>& checkpoints,
                                       const std::vector<EnvInstance>& train_envs,
                                       int n_traj, uint64_t base_seed);

struct EmbedTrainMetrics {
    std::vector<double> eval_loss;  // index 0 is the untrained model
    int best_epoch = 0;             // index into eval_loss
    double best_loss = 0;
};

// Trains one autoencoder on the dataset with l2 reconstruction loss and
// returns the snapshot with the lowest eval loss. Dynamics encoders see
// prefix sets of k transitions with k ~ U{n_probe..min(T, 8)} per batch and
// are evaluated at the test-time operating point (k = n_probe, decoding the
// full trajectory). Policy encoders see full-episode (s, a) sets.
EmbedTrainMetrics train_dynamics_autoencoder(Autoencoder& ae,
                                             const EmbedDataset& dataset,
                                             const EmbedConfig& cfg, int n_probe,
                                             uint64_t seed);
EmbedTrainMetrics train_policy_autoencoder(Autoencoder& ae,
                                           const EmbedDataset& dataset,
                                           const EmbedConfig& cfg, uint64_t seed);

// Convenience wrapper training both autoencoders (independently).
struct AutoencoderPair {
    Autoencoder dynamics;
    Autoencoder policy;
    EmbedTrainMetrics dynamics_metrics;
    EmbedTrainMetrics policy_metrics;
};

AutoencoderPair train_autoencoders(const EmbedDataset& dataset, const EmbedConfig& cfg,
                                   const ArchConfig& arch, int state_dim,
                                   int action_dim, int n_probe, uint64_t seed);

// Embeds a record at the test-time operating point: z_d from the first
// n_probe transitions, z_pi from the full (s, a) set.
struct RecordEmbedding {
    Embedding z_d;
    Embedding z_pi;
};
RecordEmbedding embed_record(Autoencoder& dyn, Autoencoder& pol,
                             const Trajectory& traj, int n_probe);

// 1-nearest-centroid classification: centroids from (train_emb, train_label),
// accuracy over (eval_emb, eval_label). Labels are arbitrary ints.
double nearest_centroid_accuracy(const std::vector<VecF>& train_emb,
                                 const std::vector<int>& train_label,
                                 const std::vector<VecF>& eval_emb,
                                 const std::vector<int>& eval_label);

}  // namespace pdvf
