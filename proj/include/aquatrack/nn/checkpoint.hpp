// Single-file weight archive: magic, format version, a JSON metadata blob,
// then named float64 arrays. Layout (little-endian):
//
//   "AQCK" | u32 version | u64 meta_len | meta bytes (JSON)
//   u32 count | { u32 name_len | name | u32 rank | u32 dims[] | f64 data[] }*
#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "aquatrack/nn/layers.hpp"

namespace aquatrack {

constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& path) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
    return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const ParamStore& params,
                            const std::string& meta_json) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
    os.write("AQCK", 4);
    detail::write_pod<uint32_t>(os, kCheckpointVersion);
    detail::write_pod<uint64_t>(os, meta_json.size());
    os.write(meta_json.data(), static_cast<std::streamsize>(meta_json.size()));
    detail::write_pod<uint32_t>(os, static_cast<uint32_t>(params.all().size()));
    for (const auto& [name, var] : params.all()) {
        const Tensor& t = var.value();
        detail::write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_pod<uint32_t>(os, static_cast<uint32_t>(t.rank()));
        for (int d : t.shape()) detail::write_pod<uint32_t>(os, static_cast<uint32_t>(d));
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

struct Checkpoint {
    std::string meta_json;
    std::map<std::string, Tensor> arrays;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "AQCK", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    uint32_t version = detail::read_pod<uint32_t>(is, path);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) +
                                 " in " + path);
    Checkpoint ck;
    uint64_t meta_len = detail::read_pod<uint64_t>(is, path);
    ck.meta_json.resize(meta_len);
    is.read(ck.meta_json.data(), static_cast<std::streamsize>(meta_len));
    uint32_t count = detail::read_pod<uint32_t>(is, path);
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = detail::read_pod<uint32_t>(is, path);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        uint32_t rank = detail::read_pod<uint32_t>(is, path);
        std::vector<int> shape(rank);
        for (uint32_t d = 0; d < rank; ++d)
            shape[d] = static_cast<int>(detail::read_pod<uint32_t>(is, path));
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!is) throw std::runtime_error("checkpoint: truncated arrays in " + path);
        ck.arrays.emplace(std::move(name), std::move(t));
    }
    return ck;
}

// Loads values into an existing store; every store parameter must be present.
inline void restore_params(ParamStore& params, const Checkpoint& ck, const std::string& path) {
    for (auto& [name, var] : params.all()) {
        auto it = ck.arrays.find(name);
        if (it == ck.arrays.end())
            throw std::runtime_error("checkpoint: missing array '" + name + "' in " + path);
        require_same_shape(var.value(), it->second, "restore_params");
        var.mutable_value() = it->second;
    }
}

}  // namespace aquatrack
