#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sems/common.hpp"
#include "sems/rng.hpp"

namespace sems {

enum class TaskKind : uint8_t { Classification = 0, DelayEstimation = 1 };

inline const char* task_name(TaskKind t) {
    return t == TaskKind::Classification ? "classification" : "delay";
}

inline TaskKind task_from_name(const std::string& s) {
    if (s == "classification") return TaskKind::Classification;
    if (s == "delay") return TaskKind::DelayEstimation;
    throw ValidationError("unknown task: " + s);
}

inline constexpr int kNumClasses = 3;  // pedestrian, car, drone

/// User-supplied frame parameters; everything else is derived.
struct FrameParams {
    int n_slots = 32;
    int n_subcarriers = 64;
    double bandwidth_hz = 30e6;
    double carrier_hz = 3e9;
    double slot_interval_s = 1e-3;
    double noise_variance = 0.0;
    double pilot_energy = 1.0;
    double data_energy = 1.0;
    cplx pilot_symbol{1.0, 0.0};
};

/// Frame/waveform configuration with derived quantities populated.
/// Immutable in spirit: derive() returns a fresh value and nothing mutates it
/// afterwards, so it can be shared across threads by const reference.
struct FrameConfig {
    FrameParams raw;
    double subcarrier_spacing_hz = 0.0;  // bandwidth / M
    double wavelength_m = 0.0;           // c / f_c

    int n_slots() const { return raw.n_slots; }
    int n_subcarriers() const { return raw.n_subcarriers; }
    int grid_cells() const { return raw.n_slots * raw.n_subcarriers; }
    double bandwidth_hz() const { return raw.bandwidth_hz; }
    double carrier_hz() const { return raw.carrier_hz; }
    double slot_interval_s() const { return raw.slot_interval_s; }
    double noise_variance() const { return raw.noise_variance; }
    double pilot_energy() const { return raw.pilot_energy; }
    double data_energy() const { return raw.data_energy; }
    cplx pilot_symbol() const { return raw.pilot_symbol; }

    /// Unambiguous delay support of the discretized frequency axis.
    double delay_support_s() const { return 1.0 / subcarrier_spacing_hz; }

    double snr_db() const {
        return 10.0 * std::log10(raw.pilot_energy / raw.noise_variance);
    }

    FrameConfig with_snr_db(double db) const {
        FrameConfig c = *this;
        c.raw.noise_variance = raw.pilot_energy * std::pow(10.0, -db / 10.0);
        return c;
    }

    FrameConfig with_noise_variance(double var) const {
        FrameConfig c = *this;
        c.raw.noise_variance = var;
        return c;
    }
};

inline FrameConfig derive_config(const FrameParams& raw) {
    require(raw.n_slots >= 2, "n_slots must be >= 2");
    require(raw.n_subcarriers >= 2, "n_subcarriers must be >= 2");
    require(raw.bandwidth_hz > 0, "bandwidth_hz must be positive");
    require(raw.carrier_hz > 0, "carrier_hz must be positive");
    require(raw.slot_interval_s > 0, "slot_interval_s must be positive");
    require(raw.noise_variance >= 0, "noise_variance must be non-negative");
    require(raw.pilot_energy >= 0, "pilot_energy must be non-negative");
    require(raw.data_energy >= 0, "data_energy must be non-negative");
    FrameConfig cfg;
    cfg.raw = raw;
    cfg.subcarrier_spacing_hz = raw.bandwidth_hz / raw.n_subcarriers;
    cfg.wavelength_m = kSpeedOfLight / raw.carrier_hz;
    return cfg;
}

/// 32-byte digest of the frame parameters, stored in dataset headers so a
/// loaded file can be checked against the config that is about to use it.
inline std::array<uint8_t, 32> config_digest(const FrameConfig& cfg) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "N=%d;M=%d;B=%.17g;fc=%.17g;T=%.17g;Ep=%.17g;Ed=%.17g;sp=%.17g,%.17g",
                  cfg.n_slots(), cfg.n_subcarriers(), cfg.bandwidth_hz(), cfg.carrier_hz(),
                  cfg.slot_interval_s(), cfg.pilot_energy(), cfg.data_energy(),
                  cfg.pilot_symbol().real(), cfg.pilot_symbol().imag());
    std::array<uint8_t, 32> digest{};
    for (int lane = 0; lane < 4; ++lane) {
        uint64_t h = fnv1a64(buf) + 0x9E3779B97F4A7C15ULL * static_cast<uint64_t>(lane + 1);
        uint64_t v = splitmix64(h);
        for (int b = 0; b < 8; ++b) digest[lane * 8 + b] = static_cast<uint8_t>(v >> (8 * b));
    }
    return digest;
}

// ---------------------------------------------------------------------------
// Seed derivation
// ---------------------------------------------------------------------------

/// Named sub-streams derivable from one master seed. Every stochastic stage
/// owns a label, so reordering or parallelizing stages cannot change draws.
struct SeedSpec {
    uint64_t master_seed = 0;
    std::vector<std::string> stream_labels = default_labels();

    static std::vector<std::string> default_labels() {
        return {"scene", "noise", "gumbel", "init", "split", "data", "snr", "svm", "eval", "batch"};
    }
};

inline uint64_t spawn_seed(const SeedSpec& spec, std::string_view label, uint64_t index) {
    bool known = std::any_of(spec.stream_labels.begin(), spec.stream_labels.end(),
                             [&](const std::string& l) { return l == label; });
    if (!known) throw ValidationError("spawn_seed: undeclared stream label '" + std::string(label) + "'");
    uint64_t x = spec.master_seed;
    x = splitmix64(x += fnv1a64(label));
    uint64_t y = x;
    y = splitmix64(y += index * 0xD1B54A32D192ED03ULL + 1);
    return y;
}

// ---------------------------------------------------------------------------
// INI-style configuration files: sections [frame], [train], [sweep].
// Unknown sections or keys are a hard error.
// ---------------------------------------------------------------------------

struct TrainConfig {
    int epochs = 30;
    int batch_size = 256;
    double learning_rate = 0.01;
    int n_pilots = 32;
    double snr_db_train = 20.0;  // delay task; classification mixes over the sweep grid
    uint64_t master_seed = 0;
    double temperature_init = 1.0;
    double temperature_decay = 0.97;
    double temperature_min = 0.1;
};

struct SweepConfig {
    int frames = 3000;
    int seeds = 5;
    std::vector<double> snr_db_grid = {-10, -5, 0, 5, 10, 15, 20, 25, 30};
    std::vector<int> budget_grid = {2, 8, 16, 32, 64, 128};
    int workers = 1;
};

struct AppConfig {
    FrameConfig frame = derive_config(FrameParams{});
    TrainConfig train;
    SweepConfig sweep;
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ValidationError("config: bad numeric value for " + key + ": '" + v + "'");
    }
}

inline long long parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        long long d = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ValidationError("config: bad integer value for " + key + ": '" + v + "'");
    }
}

/// Comma list or lo:step:hi range, e.g. "-10:5:30".
inline std::vector<double> parse_grid(const std::string& key, const std::string& v) {
    std::vector<double> out;
    if (v.find(':') != std::string::npos) {
        std::istringstream iss(v);
        std::string a, b, c;
        std::getline(iss, a, ':');
        std::getline(iss, b, ':');
        std::getline(iss, c, ':');
        double lo = parse_double(key, trim(a)), step = parse_double(key, trim(b)),
               hi = parse_double(key, trim(c));
        require(step > 0, "config: grid step must be positive for " + key);
        for (double x = lo; x <= hi + 1e-9; x += step) out.push_back(x);
        return out;
    }
    std::istringstream iss(v);
    std::string item;
    while (std::getline(iss, item, ',')) out.push_back(parse_double(key, trim(item)));
    require(!out.empty(), "config: empty grid for " + key);
    return out;
}

}  // namespace detail

inline AppConfig parse_app_config(std::istream& in) {
    AppConfig cfg;
    FrameParams frame = cfg.frame.raw;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = detail::trim(line);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[' && s.back() == ']') {
            section = s.substr(1, s.size() - 2);
            require(section == "frame" || section == "train" || section == "sweep",
                    "config: unknown section [" + section + "]");
            continue;
        }
        size_t eq = s.find('=');
        require(eq != std::string::npos, "config: expected key=value at line " + std::to_string(lineno));
        std::string key = detail::trim(s.substr(0, eq));
        std::string val = detail::trim(s.substr(eq + 1));
        require(!section.empty(), "config: key '" + key + "' outside any section");
        using namespace detail;
        if (section == "frame") {
            if (key == "n_slots") frame.n_slots = static_cast<int>(parse_int(key, val));
            else if (key == "n_subcarriers") frame.n_subcarriers = static_cast<int>(parse_int(key, val));
            else if (key == "bandwidth_hz") frame.bandwidth_hz = parse_double(key, val);
            else if (key == "carrier_hz") frame.carrier_hz = parse_double(key, val);
            else if (key == "slot_interval_s") frame.slot_interval_s = parse_double(key, val);
            else if (key == "noise_variance") frame.noise_variance = parse_double(key, val);
            else if (key == "pilot_energy") frame.pilot_energy = parse_double(key, val);
            else if (key == "data_energy") frame.data_energy = parse_double(key, val);
            else if (key == "pilot_symbol_re") frame.pilot_symbol.real(parse_double(key, val));
            else if (key == "pilot_symbol_im") frame.pilot_symbol.imag(parse_double(key, val));
            else throw ValidationError("config: unknown key '" + key + "' in [frame]");
        } else if (section == "train") {
            if (key == "epochs") cfg.train.epochs = static_cast<int>(parse_int(key, val));
            else if (key == "batch_size") cfg.train.batch_size = static_cast<int>(parse_int(key, val));
            else if (key == "learning_rate") cfg.train.learning_rate = parse_double(key, val);
            else if (key == "n_pilots") cfg.train.n_pilots = static_cast<int>(parse_int(key, val));
            else if (key == "snr_db_train") cfg.train.snr_db_train = parse_double(key, val);
            else if (key == "master_seed") cfg.train.master_seed = static_cast<uint64_t>(parse_int(key, val));
            else if (key == "temperature_init") cfg.train.temperature_init = parse_double(key, val);
            else if (key == "temperature_decay") cfg.train.temperature_decay = parse_double(key, val);
            else if (key == "temperature_min") cfg.train.temperature_min = parse_double(key, val);
            else throw ValidationError("config: unknown key '" + key + "' in [train]");
        } else {  // sweep
            if (key == "frames") cfg.sweep.frames = static_cast<int>(parse_int(key, val));
            else if (key == "seeds") cfg.sweep.seeds = static_cast<int>(parse_int(key, val));
            else if (key == "snr_db_grid") cfg.sweep.snr_db_grid = parse_grid(key, val);
            else if (key == "budget_grid") {
                cfg.sweep.budget_grid.clear();
                for (double d : parse_grid(key, val)) cfg.sweep.budget_grid.push_back(static_cast<int>(d));
            } else if (key == "workers") cfg.sweep.workers = static_cast<int>(parse_int(key, val));
            else throw ValidationError("config: unknown key '" + key + "' in [sweep]");
        }
    }
    cfg.frame = derive_config(frame);
    require(!cfg.sweep.snr_db_grid.empty(), "config: empty snr grid");
    require(!cfg.sweep.budget_grid.empty(), "config: empty budget grid");
    return cfg;
}

inline AppConfig load_app_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("config file not found: " + path);
    return parse_app_config(in);
}

}  // namespace sems
