#include "pdvf/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>

namespace pdvf {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where,
                const std::set<std::string>& allowed) {
    for (auto it = j.begin(); it != j.end(); ++it)
        require(allowed.count(it.key()), "config: unknown key '", where, ".",
                it.key(), "'");
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json ppo_to_json(const PPOConfig& c) {
    return {{"lr", c.lr},
            {"entropy_coef", c.entropy_coef},
            {"value_coef", c.value_coef},
            {"ppo_epochs", c.ppo_epochs},
            {"rollout_steps", c.rollout_steps},
            {"minibatches", c.minibatches},
            {"gamma", c.gamma},
            {"gae_lambda", c.gae_lambda},
            {"clip_ratio", c.clip_ratio},
            {"total_steps", c.total_steps},
            {"linear_lr_decay", c.linear_lr_decay},
            {"checkpoint_count", c.checkpoint_count},
            {"max_grad_norm", c.max_grad_norm}};
}

PPOConfig ppo_from_json(const json& j) {
    PPOConfig c;
    check_keys(j, "ppo",
               {"lr", "entropy_coef", "value_coef", "ppo_epochs", "rollout_steps",
                "minibatches", "gamma", "gae_lambda", "clip_ratio", "total_steps",
                "linear_lr_decay", "checkpoint_count", "max_grad_norm"});
    get_if(j, "lr", c.lr);
    get_if(j, "entropy_coef", c.entropy_coef);
    get_if(j, "value_coef", c.value_coef);
    get_if(j, "ppo_epochs", c.ppo_epochs);
    get_if(j, "rollout_steps", c.rollout_steps);
    get_if(j, "minibatches", c.minibatches);
    get_if(j, "gamma", c.gamma);
    get_if(j, "gae_lambda", c.gae_lambda);
    get_if(j, "clip_ratio", c.clip_ratio);
    get_if(j, "total_steps", c.total_steps);
    get_if(j, "linear_lr_decay", c.linear_lr_decay);
    get_if(j, "checkpoint_count", c.checkpoint_count);
    get_if(j, "max_grad_norm", c.max_grad_norm);
    return c;
}

json embed_to_json(const EmbedConfig& c) {
    return {{"lr_dynamics", c.lr_dynamics},
            {"lr_policy", c.lr_policy},
            {"batch_dynamics", c.batch_dynamics},
            {"batch_policy", c.batch_policy},
            {"max_epochs", c.max_epochs},
            {"d_emb_policy", c.d_emb_policy},
            {"d_emb_dynamics", c.d_emb_dynamics},
            {"n_traj", c.n_traj}};
}

EmbedConfig embed_from_json(const json& j) {
    EmbedConfig c;
    check_keys(j, "embed",
               {"lr_dynamics", "lr_policy", "batch_dynamics", "batch_policy",
                "max_epochs", "d_emb_policy", "d_emb_dynamics", "n_traj"});
    get_if(j, "lr_dynamics", c.lr_dynamics);
    get_if(j, "lr_policy", c.lr_policy);
    get_if(j, "batch_dynamics", c.batch_dynamics);
    get_if(j, "batch_policy", c.batch_policy);
    get_if(j, "max_epochs", c.max_epochs);
    get_if(j, "d_emb_policy", c.d_emb_policy);
    get_if(j, "d_emb_dynamics", c.d_emb_dynamics);
    get_if(j, "n_traj", c.n_traj);
    return c;
}

json arch_to_json(const ArchConfig& c) {
    return {{"d_model", c.d_model},
            {"ff_hidden", c.ff_hidden},
            {"dropout", c.dropout},
            {"decoder_hidden", c.decoder_hidden},
            {"value_hidden", c.value_hidden}};
}

ArchConfig arch_from_json(const json& j) {
    ArchConfig c;
    check_keys(j, "arch",
               {"d_model", "ff_hidden", "dropout", "decoder_hidden", "value_hidden"});
    get_if(j, "d_model", c.d_model);
    get_if(j, "ff_hidden", c.ff_hidden);
    get_if(j, "dropout", c.dropout);
    get_if(j, "decoder_hidden", c.decoder_hidden);
    get_if(j, "value_hidden", c.value_hidden);
    return c;
}

json value_to_json(const ValueConfig& c) {
    return {{"lr", c.lr},
            {"batch", c.batch},
            {"epochs_initial", c.epochs_initial},
            {"epochs_per_aggregation", c.epochs_per_aggregation},
            {"max_aggregation_rounds", c.max_aggregation_rounds},
            {"n_traj", c.n_traj},
            {"target_shift", c.target_shift},
            {"decoder_rounds", c.decoder_rounds},
            {"decoder_epochs", c.decoder_epochs},
            {"decoder_batch", c.decoder_batch},
            {"decoder_lr", c.decoder_lr},
            {"decoder_policy_sample", c.decoder_policy_sample}};
}

ValueConfig value_from_json(const json& j) {
    ValueConfig c;
    check_keys(
        j, "value",
        {"lr", "batch", "epochs_initial", "epochs_per_aggregation",
         "max_aggregation_rounds", "n_traj", "target_shift", "decoder_rounds",
         "decoder_epochs", "decoder_batch", "decoder_lr", "decoder_policy_sample"});
    get_if(j, "lr", c.lr);
    get_if(j, "batch", c.batch);
    get_if(j, "epochs_initial", c.epochs_initial);
    get_if(j, "epochs_per_aggregation", c.epochs_per_aggregation);
    get_if(j, "max_aggregation_rounds", c.max_aggregation_rounds);
    get_if(j, "n_traj", c.n_traj);
    get_if(j, "target_shift", c.target_shift);
    get_if(j, "decoder_rounds", c.decoder_rounds);
    get_if(j, "decoder_epochs", c.decoder_epochs);
    get_if(j, "decoder_batch", c.decoder_batch);
    get_if(j, "decoder_lr", c.decoder_lr);
    get_if(j, "decoder_policy_sample", c.decoder_policy_sample);
    return c;
}

}  // namespace

void ExperimentConfig::validate() const {
    ppo.validate();
    arch.validate();
    embed.validate();
    value.validate();
    for (const auto& m : methods) m.validate();
    require(!rl_seeds.empty() && !model_seeds.empty(), "config: seeds must be set");
    require(eval_runs >= 1, "config: eval_runs >= 1");
    require(probe_env_index >= 0 &&
                size_t(probe_env_index) < family_spec.train_d.size(),
            "config: probe_env_index out of range");
    require(std::count(rl_seeds.begin(), rl_seeds.end(), probe_seed) > 0,
            "config: probe_seed must be one of rl_seeds");
    require(family_spec.n_probe >= 1 &&
                family_spec.n_probe <= family_spec.episode_cap,
            "config: n_probe must be in [1, episode_cap]");
    for (double dt : family_spec.train_d)
        for (double de : family_spec.test_d)
            require(dt != de, "config: train/test split overlaps at d=", dt);
    require(!out_dir.empty(), "config: out_dir must be set");
}

void ExperimentConfig::apply_paper_scale() {
    ppo.total_steps = 3000000;
    rl_seeds = {0, 1, 2, 3, 4};
    model_seeds = {0, 1, 2, 3, 4};
    embed.n_traj = 200;
    embed.max_epochs = 200;
    embed.batch_policy = 2048;
    value.n_traj = 40;
    value.epochs_initial = 200;
    value.epochs_per_aggregation = 100;
    value.max_aggregation_rounds = 20;
    value.decoder_rounds = 20;
    value.decoder_epochs = 100;
}

uint64_t ExperimentConfig::hash() const {
    // out_dir excluded so a tree can be relocated without invalidating it
    auto copy = *this;
    copy.out_dir = "";
    return hash_str(config_to_json(copy));
}

ExperimentConfig default_config(Family family) {
    ExperimentConfig cfg;
    cfg.family = family;
    cfg.family_spec = default_family_spec(family);
    if (family == Family::DragGrid) cfg.embed.d_emb_dynamics = 8;
    if (family != Family::Spaceship) cfg.value.target_shift = 160.f;
    for (Method m : {Method::PDVF, Method::PPOenv, Method::PPOall, Method::PPOdyn,
                     Method::NN, Method::Kmeans, Method::NoAggValue,
                     Method::NoAggPolicy})
        cfg.methods.push_back({m, 5});
    return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["family"] = family_name(cfg.family);
    j["n_probe"] = cfg.family_spec.n_probe;
    j["rl_seeds"] = cfg.rl_seeds;
    j["model_seeds"] = cfg.model_seeds;
    j["eval_runs"] = cfg.eval_runs;
    j["probe_env_index"] = cfg.probe_env_index;
    j["probe_seed"] = cfg.probe_seed;
    j["out_dir"] = cfg.out_dir;
    j["base_seed"] = cfg.base_seed;
    j["ppo"] = ppo_to_json(cfg.ppo);
    j["arch"] = arch_to_json(cfg.arch);
    j["embed"] = embed_to_json(cfg.embed);
    j["value"] = value_to_json(cfg.value);
    std::vector<std::string> names;
    int kmeans_k = 5;
    for (const auto& m : cfg.methods) {
        names.push_back(method_name(m.method));
        if (m.method == Method::Kmeans) kmeans_k = m.kmeans_k;
    }
    j["methods"] = names;
    j["kmeans_k"] = kmeans_k;
    j["ppoenv_on_test"] = cfg.ppoenv_on_test;
    j["eval_on_train"] = cfg.eval_on_train;
    return j.dump(2);
}

ExperimentConfig config_from_json(const std::string& text) {
    json j = json::parse(text);
    check_keys(j, "",
               {"family", "n_probe", "rl_seeds", "model_seeds", "eval_runs",
                "probe_env_index", "probe_seed", "out_dir", "base_seed", "ppo",
                "arch", "embed", "value", "methods", "kmeans_k", "ppoenv_on_test",
                "eval_on_train", "paper_scale"});
    Family family = Family::Spaceship;
    if (j.contains("family")) family = family_from_name(j.at("family"));
    ExperimentConfig cfg = default_config(family);
    cfg.methods.clear();
    if (j.contains("paper_scale") && j.at("paper_scale").get<bool>())
        cfg.apply_paper_scale();
    if (j.contains("n_probe")) cfg.family_spec.n_probe = j.at("n_probe").get<int>();
    get_if(j, "rl_seeds", cfg.rl_seeds);
    get_if(j, "model_seeds", cfg.model_seeds);
    get_if(j, "eval_runs", cfg.eval_runs);
    get_if(j, "probe_env_index", cfg.probe_env_index);
    get_if(j, "probe_seed", cfg.probe_seed);
    get_if(j, "out_dir", cfg.out_dir);
    get_if(j, "base_seed", cfg.base_seed);
    if (j.contains("ppo")) cfg.ppo = ppo_from_json(j.at("ppo"));
    if (j.contains("arch")) cfg.arch = arch_from_json(j.at("arch"));
    if (j.contains("embed")) cfg.embed = embed_from_json(j.at("embed"));
    if (j.contains("value")) cfg.value = value_from_json(j.at("value"));
    int kmeans_k = 5;
    get_if(j, "kmeans_k", kmeans_k);
    if (j.contains("methods")) {
        for (const auto& name : j.at("methods"))
            cfg.methods.push_back({method_from_name(name.get<std::string>()), kmeans_k});
    } else {
        cfg.methods = default_config(family).methods;
        for (auto& m : cfg.methods) m.kmeans_k = kmeans_k;
    }
    get_if(j, "ppoenv_on_test", cfg.ppoenv_on_test);
    get_if(j, "eval_on_train", cfg.eval_on_train);
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    require(is.good(), "load_config: cannot open ", path.string());
    std::string text((std::istreambuf_iterator<char>(is)), {});
    return config_from_json(text);
}

void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        require(os.good(), "save_config: cannot open ", tmp.string());
        os << config_to_json(cfg) << "\n";
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace pdvf
