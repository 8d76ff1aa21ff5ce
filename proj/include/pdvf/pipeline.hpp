#pragma once

#include "pdvf/config.hpp"
#include "pdvf/manifest.hpp"

namespace pdvf {

enum class Phase { Rl, Collect, Embed, Value, Aggregate, Evaluate, Report };

std::string phase_name(Phase p);
Phase phase_from_name(const std::string& name);

// Executes one phase of the pipeline. Upstream phases must be complete;
// re-running a completed phase with the same config is a no-op. A config-hash
// mismatch against an existing manifest is refused unless force is set.
RunManifest run_phase(Phase phase, const ExperimentConfig& cfg, bool force = false);

// Runs every phase in order.
RunManifest run_all(const ExperimentConfig& cfg, bool force = false);

// Writes held-out trajectory embeddings of one model seed as CSV. `which` is
// "policy", "dynamics" or "both"; returns the written file (or, for "both",
// the directory containing the two files).
std::filesystem::path export_embeddings(const ExperimentConfig& cfg,
                                        const std::string& which, int model_seed);

}  // namespace pdvf
