#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "sems/common.hpp"
#include "sems/decoders.hpp"
#include "sems/tensor.hpp"

namespace sems {

// Checkpoint layout: magic "SEMP", version u32, parameter count u64; then per
// parameter: name length u32, name bytes, rank u32, dims (i32 each), values
// as f64. Run metadata travels as scalar pseudo-parameters under "__meta.".

inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
    std::vector<int> shape;
    std::vector<double> values;
};

using Checkpoint = std::map<std::string, CheckpointEntry>;

inline void save_checkpoint(const std::vector<NamedParam>& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), "checkpoint: cannot open " + path);
    out.write("SEMP", 4);
    uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    uint64_t count = params.size();
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const NamedParam& p : params) {
        uint32_t name_len = static_cast<uint32_t>(p.name.size());
        out.write(reinterpret_cast<const char*>(&name_len), sizeof(name_len));
        out.write(p.name.data(), name_len);
        uint32_t rank = static_cast<uint32_t>(p.tensor.shape().size());
        out.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
        for (int d : p.tensor.shape()) {
            int32_t dim = d;
            out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
        }
        out.write(reinterpret_cast<const char*>(p.tensor.values().data()),
                  static_cast<std::streamsize>(p.tensor.size() * sizeof(double)));
    }
    require(static_cast<bool>(out), "checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("checkpoint not found: " + path);
    char magic[4];
    in.read(magic, 4);
    require(in.gcount() == 4 && std::memcmp(magic, "SEMP", 4) == 0, "checkpoint: bad magic in " + path);
    uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    require(version == kCheckpointVersion, "checkpoint: unsupported version in " + path);
    uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    Checkpoint ckpt;
    for (uint64_t i = 0; i < count; ++i) {
        uint32_t name_len = 0;
        in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
        require(static_cast<bool>(in) && name_len < 4096, "checkpoint: corrupt entry in " + path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        uint32_t rank = 0;
        in.read(reinterpret_cast<char*>(&rank), sizeof(rank));
        require(static_cast<bool>(in) && rank <= 8, "checkpoint: corrupt rank in " + path);
        CheckpointEntry entry;
        size_t total = 1;
        for (uint32_t r = 0; r < rank; ++r) {
            int32_t dim = 0;
            in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
            require(dim > 0, "checkpoint: corrupt dimension in " + path);
            entry.shape.push_back(dim);
            total *= static_cast<size_t>(dim);
        }
        entry.values.resize(total);
        in.read(reinterpret_cast<char*>(entry.values.data()),
                static_cast<std::streamsize>(total * sizeof(double)));
        require(static_cast<bool>(in), "checkpoint: truncated values in " + path);
        ckpt.emplace(std::move(name), std::move(entry));
    }
    return ckpt;
}

inline const CheckpointEntry& checkpoint_get(const Checkpoint& ckpt, const std::string& name) {
    auto it = ckpt.find(name);
    if (it == ckpt.end()) throw ValidationError("checkpoint: missing parameter " + name);
    return it->second;
}

/// Copies stored values into an existing parameter tensor (shape-checked).
inline void checkpoint_restore(const Checkpoint& ckpt, const std::string& name, Tensor& tensor) {
    const CheckpointEntry& e = checkpoint_get(ckpt, name);
    require(e.shape == tensor.shape(), "checkpoint: shape mismatch for " + name);
    tensor.values() = e.values;
}

inline double checkpoint_meta(const Checkpoint& ckpt, const std::string& key) {
    return checkpoint_get(ckpt, "__meta." + key).values.at(0);
}

inline bool checkpoint_has(const Checkpoint& ckpt, const std::string& name) {
    return ckpt.count(name) > 0;
}

}  // namespace sems
