#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "sems/channel.hpp"
#include "sems/config.hpp"
#include "sems/grid.hpp"

namespace sems {

// Binary dataset layout (little-endian):
//   magic "SEMS", version u32, task u8, n_classes u8, N u16, M u16,
//   frame_count u64, master_seed u64, config digest (32 bytes);
//   then per frame: N*M cells as (f32 re, f32 im) row-major in (slot,
//   subcarrier), class label u8, dominant-path delay f64 (seconds).
// The stored grid is the true channel response; noise and pilot multiplexing
// are applied at train/eval time so one file serves every SNR point.

inline constexpr uint32_t kDatasetVersion = 1;

struct DatasetHeader {
    TaskKind task = TaskKind::Classification;
    uint8_t n_classes = kNumClasses;
    uint16_t n_slots = 0;
    uint16_t n_subcarriers = 0;
    uint64_t frame_count = 0;
    uint64_t master_seed = 0;
    std::array<uint8_t, 32> config_digest{};
};

struct Frame {
    TFGrid channel;
    uint8_t class_label = 0;
    double delay_s = 0.0;
};

struct Dataset {
    DatasetHeader header;
    std::vector<Frame> frames;
};

struct SplitIndices {
    std::vector<int> train, val, test;
};

/// Deterministic 8:1:1 split of [0, count) driven by the "split" seed stream.
inline SplitIndices split_indices(int count, uint64_t master_seed) {
    require(count > 0, "split: count must be positive");
    std::vector<int> order(count);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(spawn_seed(SeedSpec{master_seed}, "split", 0));
    for (int i = count - 1; i > 0; --i) {
        int j = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(i) + 1));
        std::swap(order[i], order[j]);
    }
    const int n_train = count * 8 / 10;
    const int n_val = count / 10;
    SplitIndices s;
    s.train.assign(order.begin(), order.begin() + n_train);
    s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    s.test.assign(order.begin() + n_train + n_val, order.end());
    return s;
}

namespace detail {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace detail

/// Samples `count` frames and writes them to `path`. Classification frames
/// cycle through the classes round-robin so labels stay balanced; delay
/// frames draw the class uniformly. Frame i depends only on (seed, i), so
/// generation order is irrelevant.
inline void generate_dataset(const FrameConfig& cfg, TaskKind task, int count,
                             const ScenarioFlags& scenario, uint64_t master_seed,
                             const std::string& path) {
    require(count > 0, "generate_dataset: count must be positive");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), "generate_dataset: cannot open " + path);

    out.write("SEMS", 4);
    detail::write_pod(out, kDatasetVersion);
    detail::write_pod(out, static_cast<uint8_t>(task));
    detail::write_pod(out, static_cast<uint8_t>(kNumClasses));
    detail::write_pod(out, static_cast<uint16_t>(cfg.n_slots()));
    detail::write_pod(out, static_cast<uint16_t>(cfg.n_subcarriers()));
    detail::write_pod(out, static_cast<uint64_t>(count));
    detail::write_pod(out, master_seed);
    auto digest = config_digest(cfg);
    out.write(reinterpret_cast<const char*>(digest.data()), digest.size());

    SeedSpec seeds{master_seed};
    std::vector<float> cells(static_cast<size_t>(cfg.grid_cells()) * 2);
    for (int i = 0; i < count; ++i) {
        int cls = task == TaskKind::Classification ? i % kNumClasses : -1;
        Scene scene = sample_scene(task, cls, cfg, scenario, spawn_seed(seeds, "scene", i));
        TFGrid h = synthesize_channel(scene, cfg);
        Label label = semantic_label(scene, task);
        for (size_t c = 0; c < h.size(); ++c) {
            cells[2 * c] = static_cast<float>(h.data()[c].real());
            cells[2 * c + 1] = static_cast<float>(h.data()[c].imag());
        }
        out.write(reinterpret_cast<const char*>(cells.data()), cells.size() * sizeof(float));
        detail::write_pod(out, static_cast<uint8_t>(label.class_label));
        detail::write_pod(out, label.delay_s);
    }
    require(static_cast<bool>(out), "generate_dataset: write failed for " + path);
}

inline Dataset load_dataset(const std::string& path, const FrameConfig* expected_cfg = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("dataset not found: " + path);

    char magic[4];
    in.read(magic, 4);
    require(in.gcount() == 4 && std::memcmp(magic, "SEMS", 4) == 0,
            "dataset: bad magic in " + path);
    uint32_t version = 0;
    detail::read_pod(in, version);
    require(version == kDatasetVersion, "dataset: unsupported version in " + path);

    Dataset ds;
    uint8_t task = 0;
    detail::read_pod(in, task);
    require(task <= 1, "dataset: bad task byte");
    ds.header.task = static_cast<TaskKind>(task);
    detail::read_pod(in, ds.header.n_classes);
    detail::read_pod(in, ds.header.n_slots);
    detail::read_pod(in, ds.header.n_subcarriers);
    detail::read_pod(in, ds.header.frame_count);
    detail::read_pod(in, ds.header.master_seed);
    in.read(reinterpret_cast<char*>(ds.header.config_digest.data()), 32);
    require(static_cast<bool>(in), "dataset: truncated header in " + path);

    if (expected_cfg) {
        require(ds.header.config_digest == config_digest(*expected_cfg),
                "dataset: config digest mismatch for " + path);
    }

    const int n = ds.header.n_slots, m = ds.header.n_subcarriers;
    const size_t cells = static_cast<size_t>(n) * m;
    std::vector<float> buf(cells * 2);
    ds.frames.reserve(ds.header.frame_count);
    for (uint64_t i = 0; i < ds.header.frame_count; ++i) {
        Frame f;
        f.channel = TFGrid(n, m);
        in.read(reinterpret_cast<char*>(buf.data()), buf.size() * sizeof(float));
        detail::read_pod(in, f.class_label);
        detail::read_pod(in, f.delay_s);
        require(static_cast<bool>(in), "dataset: truncated frame data in " + path);
        for (size_t c = 0; c < cells; ++c)
            f.channel.data()[c] = cplx(buf[2 * c], buf[2 * c + 1]);
        ds.frames.push_back(std::move(f));
    }
    in.peek();
    require(in.eof(), "dataset: trailing bytes after declared frames in " + path);
    return ds;
}

/// Rewrites a loaded dataset; used to verify byte round-trips.
inline void save_dataset(const Dataset& ds, const FrameConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), "save_dataset: cannot open " + path);
    out.write("SEMS", 4);
    detail::write_pod(out, kDatasetVersion);
    detail::write_pod(out, static_cast<uint8_t>(ds.header.task));
    detail::write_pod(out, ds.header.n_classes);
    detail::write_pod(out, ds.header.n_slots);
    detail::write_pod(out, ds.header.n_subcarriers);
    detail::write_pod(out, ds.header.frame_count);
    detail::write_pod(out, ds.header.master_seed);
    out.write(reinterpret_cast<const char*>(ds.header.config_digest.data()), 32);
    (void)cfg;
    for (const Frame& f : ds.frames) {
        for (size_t c = 0; c < f.channel.size(); ++c) {
            float re = static_cast<float>(f.channel.data()[c].real());
            float im = static_cast<float>(f.channel.data()[c].imag());
            detail::write_pod(out, re);
            detail::write_pod(out, im);
        }
        detail::write_pod(out, f.class_label);
        detail::write_pod(out, f.delay_s);
    }
}

}  // namespace sems
