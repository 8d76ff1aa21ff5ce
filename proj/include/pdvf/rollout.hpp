#pragma once

#include "pdvf/envs.hpp"
#include "pdvf/rng.hpp"

#include <filesystem>
#include <functional>
#include <vector>

namespace pdvf {

// Ordered transitions of one episode plus its undiscounted return.
struct Trajectory {
    Family family = Family::Spaceship;
    double d = 0.0;
    int env_index = -1;   // index into the family's env list
    int policy_id = -1;   // index into the checkpoint ensemble, -1 if n/a
    uint64_t seed = 0;    // rollout seed
    std::vector<Transition> steps;
    double G = 0.0;

    int length() const { return static_cast<int>(steps.size()); }
};

using ActionFn = std::function<VecF(const VecF& state)>;

// Runs one episode to termination with the given action function.
Trajectory rollout_episode(EnvInstance& env, const ActionFn& act, uint64_t seed,
                           int env_index = -1, int policy_id = -1);

// JSON-lines format: a header line {family, d, seed, policy_id, env_index, G}
// followed by one object per transition with keys s, a, r, s_next, done.
// Floats are printed with enough digits to round-trip float32 exactly.
void append_trajectory_jsonl(std::ostream& os, const Trajectory& traj);
std::vector<Trajectory> read_trajectories_jsonl(const std::filesystem::path& path);
void write_trajectories_jsonl(const std::filesystem::path& path,
                              const std::vector<Trajectory>& trajs);

// Concatenated (s, a, s') rows for the dynamics encoder; one row per
// transition of steps[0..count).
MatF transition_matrix(const Trajectory& traj, int count);
// Concatenated (s, a) rows for the policy encoder over the full episode.
MatF state_action_matrix(const Trajectory& traj);

}  // namespace pdvf
