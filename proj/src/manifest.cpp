#include "pdvf/manifest.hpp"

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <sstream>

namespace pdvf {

using nlohmann::json;

std::string file_hash(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "file_hash: cannot open ", path.string());
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (is) {
        is.read(buf, sizeof(buf));
        for (std::streamsize i = 0; i < is.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    require(is.good(), "manifest: cannot open ", path.string());
    json j = json::parse(is);
    RunManifest m;
    m.config_hash = j.at("config_hash").get<uint64_t>();
    for (auto it = j.at("phases").begin(); it != j.at("phases").end(); ++it)
        m.phases[it.key()] = it.value().get<bool>();
    if (j.contains("artifacts"))
        for (auto it = j.at("artifacts").begin(); it != j.at("artifacts").end(); ++it)
            m.artifacts[it.key()] = it.value().get<std::string>();
    if (j.contains("checkpoint_hashes"))
        for (auto it = j.at("checkpoint_hashes").begin();
             it != j.at("checkpoint_hashes").end(); ++it)
            m.checkpoint_hashes[it.key()] = it.value().get<std::string>();
    return m;
}

void RunManifest::save_atomic(const std::filesystem::path& path) const {
    json j;
    j["config_hash"] = config_hash;
    j["phases"] = phases;
    j["artifacts"] = artifacts;
    j["checkpoint_hashes"] = checkpoint_hashes;
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        require(os.good(), "manifest: cannot open ", tmp.string());
        os << j.dump(2) << "\n";
        require(os.good(), "manifest: write failed");
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace pdvf
