#include "pdvf/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace pdvf;

int main(int argc, char** argv) {
    CLI::App app{"Policy-dynamics value function pipeline"};
    app.require_subcommand(1);

    std::string config_path, phase, out_dir, which = "both", family = "spaceship";
    int seed = -1;
    bool force = false, paper_scale = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config JSON");
        cmd->add_option("--seed", seed, "override the model seed list with one seed");
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_flag("--force", force, "proceed despite a config-hash mismatch");
        cmd->add_flag("--paper-scale", paper_scale,
                      "switch desk defaults to the reported training magnitudes");
        cmd->add_option("--family", family, "family when no config file is given")
            ->check(CLI::IsMember({"spaceship", "windpoint", "draggrid"}));
    };

    auto* run = app.add_subcommand("run", "run pipeline phases");
    add_common(run);
    run->add_option("--phase", phase,
                    "phase to run (rl|collect|embed|value|aggregate|evaluate|"
                    "report); all phases when omitted");

    auto* exp = app.add_subcommand("export-embeddings",
                                   "write held-out trajectory embeddings as CSV");
    add_common(exp);
    exp->add_option("--which", which, "policy|dynamics|both")
        ->check(CLI::IsMember({"policy", "dynamics", "both"}));

    auto* show = app.add_subcommand("show-config",
                                    "print the effective config as JSON");
    add_common(show);

    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentConfig cfg = config_path.empty()
                                   ? default_config(family_from_name(family))
                                   : load_config(config_path);
        if (paper_scale) cfg.apply_paper_scale();
        if (seed >= 0) cfg.model_seeds = {seed};
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        cfg.validate();

        if (show->parsed()) {
            std::cout << config_to_json(cfg) << "\n";
            return 0;
        }
        if (exp->parsed()) {
            int m = seed >= 0 ? seed : cfg.model_seeds.front();
            auto path = export_embeddings(cfg, which, m);
            std::cout << path.string() << "\n";
            return 0;
        }
        if (phase.empty()) {
            run_all(cfg, force);
            std::cout << "pipeline complete: " << cfg.out_dir << "\n";
        } else {
            run_phase(phase_from_name(phase), cfg, force);
            std::cout << "phase " << phase << " complete: " << cfg.out_dir << "\n";
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
