#pragma once

#include "pdvf/tensor.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace pdvf {

// FNV-1a over the file bytes, hex-encoded; the content hash used for
// checkpoint integrity checks.
std::string file_hash(const std::filesystem::path& path);

// Tracks phase completion and artifact integrity for one output directory.
// A phase may only start once all upstream phases are marked complete.
struct RunManifest {
    uint64_t config_hash = 0;
    std::map<std::string, bool> phases;
    std::map<std::string, std::string> artifacts;          // name -> relative path
    std::map<std::string, std::string> checkpoint_hashes;  // rel path -> hash

    bool phase_complete(const std::string& name) const {
        auto it = phases.find(name);
        return it != phases.end() && it->second;
    }

    static RunManifest load(const std::filesystem::path& path);
    void save_atomic(const std::filesystem::path& path) const;
};

}  // namespace pdvf
