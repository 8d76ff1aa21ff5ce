#pragma once

#include "pdvf/embed.hpp"
#include "pdvf/evalsuite.hpp"
#include "pdvf/ppo.hpp"

#include <filesystem>

namespace pdvf {

// One experiment: family, phase hyperparameters, seeds and output layout.
// Loaded from a single JSON document; unknown keys are rejected.
struct ExperimentConfig {
    Family family = Family::Spaceship;
    FamilySpec family_spec;  // derived from family; n_probe overridable
    std::vector<int> rl_seeds = {0, 1, 2};
    std::vector<int> model_seeds = {0, 1, 2};
    int eval_runs = 10;
    int probe_env_index = 0;  // probe policy: this train env's PPOenv ...
    int probe_seed = 0;       // ... trained with this seed, final checkpoint
    std::string out_dir = "out";
    uint64_t base_seed = 0;
    PPOConfig ppo;
    ArchConfig arch;
    EmbedConfig embed;
    ValueConfig value;
    std::vector<MethodSpec> methods;
    bool ppoenv_on_test = true;  // oracle PPOenv policies for test envs
    bool eval_on_train = false;

    void validate() const;
    // Switches desk defaults to the reported training magnitudes.
    void apply_paper_scale();
    uint64_t hash() const;

    std::filesystem::path out() const { return out_dir; }
};

ExperimentConfig default_config(Family family);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& text);

}  // namespace pdvf
