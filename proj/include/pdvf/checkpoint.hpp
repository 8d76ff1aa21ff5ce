#pragma once

#include "pdvf/tensor.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace pdvf {

// Binary checkpoint layout (all integers little-endian):
//   magic "PDVF" | version u32 | tensor count u32
//   per tensor: name_len u16 | name bytes | rank u8 | dims u32 x rank |
//               f32 payload, row-major
// Save/load round-trips bit-exactly.
inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void write_le(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    for (size_t i = 0; i < sizeof(T); ++i)
        buf[i] = static_cast<unsigned char>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return static_cast<T>(v);
}

inline void write_f32(std::ostream& os, float f) {
    uint32_t bits;
    static_assert(sizeof(bits) == sizeof(f));
    std::memcpy(&bits, &f, sizeof(bits));
    write_le(os, bits);
}

inline float read_f32(std::istream& is) {
    uint32_t bits = read_le<uint32_t>(is);
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    return f;
}

}  // namespace detail

inline void save_checkpoint(const ParamSetF& params, const std::filesystem::path& path) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        require(os.good(), "save_checkpoint: cannot open ", tmp.string());
        os.write("PDVF", 4);
        detail::write_le<uint32_t>(os, kCheckpointVersion);
        detail::write_le<uint32_t>(os, static_cast<uint32_t>(params.size()));
        for (const auto& t : params.tensors()) {
            require(t.name.size() <= 0xffff, "save_checkpoint: name too long");
            detail::write_le<uint16_t>(os, static_cast<uint16_t>(t.name.size()));
            os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
            detail::write_le<uint8_t>(os, static_cast<uint8_t>(t.dims.size()));
            for (uint32_t d : t.dims) detail::write_le<uint32_t>(os, d);
            for (Eigen::Index r = 0; r < t.value.rows(); ++r)
                for (Eigen::Index c = 0; c < t.value.cols(); ++c)
                    detail::write_f32(os, t.value(r, c));
        }
        require(os.good(), "save_checkpoint: write failed for ", tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline ParamSetF load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "load_checkpoint: cannot open ", path.string());
    char magic[4];
    is.read(magic, 4);
    require(is.good() && std::string_view(magic, 4) == "PDVF",
            "load_checkpoint: bad magic in ", path.string());
    uint32_t version = detail::read_le<uint32_t>(is);
    require(version == kCheckpointVersion, "load_checkpoint: unsupported version ",
            version);
    uint32_t count = detail::read_le<uint32_t>(is);
    ParamSetF params;
    for (uint32_t i = 0; i < count; ++i) {
        uint16_t name_len = detail::read_le<uint16_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        uint8_t rank = detail::read_le<uint8_t>(is);
        require(rank == 1 || rank == 2, "load_checkpoint: bad rank ", int(rank));
        std::vector<uint32_t> dims(rank);
        for (auto& d : dims) d = detail::read_le<uint32_t>(is);
        Tensor<float> t;
        t.name = name;
        t.dims = dims;
        uint32_t rows = rank == 2 ? dims[0] : 1;
        uint32_t cols = rank == 2 ? dims[1] : dims[0];
        t.value.resize(rows, cols);
        t.grad = MatF::Zero(rows, cols);
        for (uint32_t r = 0; r < rows; ++r)
            for (uint32_t c = 0; c < cols; ++c) t.value(r, c) = detail::read_f32(is);
        require(is.good(), "load_checkpoint: truncated file ", path.string());
        params.add(std::move(t));
    }
    return params;
}

}  // namespace pdvf
