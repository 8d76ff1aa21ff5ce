#include "pdvf/rollout.hpp"

#include <json.hpp>

#include <cinttypes>
#include <cstdio>
#include <fstream>

namespace pdvf {

using nlohmann::json;

namespace {

void append_float(std::string& out, float v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", double(v));
    out += buf;
}

void append_vec(std::string& out, const VecF& v) {
    out += '[';
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        append_float(out, v(i));
    }
    out += ']';
}

VecF vec_from_json(const json& j) {
    VecF v(j.size());
    for (size_t i = 0; i < j.size(); ++i) v(Eigen::Index(i)) = j[i].get<float>();
    return v;
}

}  // namespace

Trajectory rollout_episode(EnvInstance& env, const ActionFn& act, uint64_t seed,
                           int env_index, int policy_id) {
    Trajectory traj;
    traj.family = env.family();
    traj.d = env.d();
    traj.env_index = env_index;
    traj.policy_id = policy_id;
    traj.seed = seed;
    VecF s = env.reset();
    while (!env.done()) {
        VecF a = act(s);
        StepResult r = env.step(a);
        traj.steps.push_back({s, a, r.reward, r.state, r.done});
        traj.G += r.reward;
        s = r.state;
    }
    return traj;
}

void append_trajectory_jsonl(std::ostream& os, const Trajectory& traj) {
    char head[256];
    std::snprintf(head, sizeof(head),
                  "{\"family\":\"%s\",\"d\":%.17g,\"seed\":%" PRIu64
                  ",\"policy_id\":%d,\"env_index\":%d,\"G\":%.17g}\n",
                  family_name(traj.family).c_str(), traj.d, traj.seed,
                  traj.policy_id, traj.env_index, traj.G);
    os << head;
    std::string line;
    for (const auto& t : traj.steps) {
        line.clear();
        line += "{\"s\":";
        append_vec(line, t.s);
        line += ",\"a\":";
        append_vec(line, t.a);
        line += ",\"r\":";
        append_float(line, t.r);
        line += ",\"s_next\":";
        append_vec(line, t.s_next);
        line += ",\"done\":";
        line += t.done ? "true" : "false";
        line += "}\n";
        os << line;
    }
}

void write_trajectories_jsonl(const std::filesystem::path& path,
                              const std::vector<Trajectory>& trajs) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        require(os.good(), "write_trajectories_jsonl: cannot open ", tmp.string());
        for (const auto& t : trajs) append_trajectory_jsonl(os, t);
        require(os.good(), "write_trajectories_jsonl: write failed");
    }
    std::filesystem::rename(tmp, path);
}

std::vector<Trajectory> read_trajectories_jsonl(const std::filesystem::path& path) {
    std::ifstream is(path);
    require(is.good(), "read_trajectories_jsonl: cannot open ", path.string());
    std::vector<Trajectory> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        if (j.contains("family")) {
            Trajectory t;
            t.family = family_from_name(j.at("family").get<std::string>());
            t.d = j.at("d").get<double>();
            t.seed = j.at("seed").get<uint64_t>();
            t.policy_id = j.at("policy_id").get<int>();
            t.env_index = j.at("env_index").get<int>();
            t.G = j.at("G").get<double>();
            out.push_back(std::move(t));
        } else {
            require(!out.empty(), "read_trajectories_jsonl: transition before header");
            Transition t;
            t.s = vec_from_json(j.at("s"));
            t.a = vec_from_json(j.at("a"));
            t.r = j.at("r").get<float>();
            t.s_next = vec_from_json(j.at("s_next"));
            t.done = j.at("done").get<bool>();
            out.back().steps.push_back(std::move(t));
        }
    }
    return out;
}

MatF transition_matrix(const Trajectory& traj, int count) {
    require(count >= 1 && count <= traj.length(),
            "transition_matrix: count ", count, " out of range for length ",
            traj.length());
    const auto& first = traj.steps.front();
    Eigen::Index cols = first.s.size() + first.a.size() + first.s_next.size();
    MatF m(count, cols);
    for (int i = 0; i < count; ++i) {
        const auto& t = traj.steps[i];
        m.row(i) << t.s.transpose(), t.a.transpose(), t.s_next.transpose();
    }
    return m;
}

MatF state_action_matrix(const Trajectory& traj) {
    require(traj.length() >= 1, "state_action_matrix: empty trajectory");
    const auto& first = traj.steps.front();
    MatF m(traj.length(), first.s.size() + first.a.size());
    for (int i = 0; i < traj.length(); ++i) {
        const auto& t = traj.steps[i];
        m.row(i) << t.s.transpose(), t.a.transpose();
    }
    return m;
}

}  // namespace pdvf
