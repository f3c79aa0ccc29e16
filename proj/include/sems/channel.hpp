#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sems/common.hpp"
#include "sems/config.hpp"
#include "sems/grid.hpp"
#include "sems/rng.hpp"

namespace sems {

/// One propagation path: bulk kinematics plus a first-order sinusoidal
/// micro-motion term (limb swing, rotor rotation) that modulates the phase.
struct PathParams {
    cplx gain{0.0, 0.0};          // alpha
    double delay_s = 0.0;         // tau
    double doppler_hz = 0.0;      // nu
    double micro_amp_m = 0.0;     // A, equivalent spatial displacement
    double micro_omega_rad_s = 0.0;  // omega
    double micro_phase_rad = 0.0;    // phi in [0, 2*pi)
};

struct ScenarioFlags {
    bool micro_doppler = true;  // false forces A = 0 on every path
    bool clutter = false;       // adds static clutter paths
    bool single_path = false;   // one target path instead of the multipath cluster
};

struct Scene {
    std::vector<PathParams> paths;  // target paths first, clutter paths appended
    int class_label = 0;            // 0 pedestrian, 1 car, 2 drone
    int dominant_path = 0;          // largest |gain| among non-clutter paths
    int clutter_count = 0;

    int target_path_count() const { return static_cast<int>(paths.size()) - clutter_count; }
};

/// Per-class kinematic ranges: range (m), bulk velocity (m/s), micro-motion
/// rate (Hz) and displacement (m). Car has no micro-motion component.
struct ClassKinematics {
    double v_lo, v_hi;
    double micro_hz_lo, micro_hz_hi;
    double micro_amp_lo, micro_amp_hi;
};

inline const ClassKinematics& class_kinematics(int class_label) {
    static const ClassKinematics table[kNumClasses] = {
        {0.0, 2.0, 1.0, 3.0, 0.01, 0.1},     // pedestrian
        {10.0, 20.0, 0.0, 0.0, 0.0, 0.0},    // car
        {5.0, 10.0, 80.0, 120.0, 0.005, 0.05},  // drone
    };
    require(class_label >= 0 && class_label < kNumClasses, "class index out of range");
    return table[class_label];
}

inline constexpr double kRangeMaxM = 200.0;
inline constexpr double kPathSpreadM = 30.0;
inline constexpr int kPathsPerTarget = 3;
inline constexpr int kClutterPaths = 5;
inline constexpr double kVelocityJitter = 0.1;

inline double range_to_delay(double range_m) { return 2.0 * range_m / kSpeedOfLight; }

/// Round-trip delay of the farthest target; the regression grid spans it.
inline constexpr double kMaxTargetDelayS = 2.0 * kRangeMaxM / kSpeedOfLight;

inline int compute_dominant_path(const Scene& scene) {
    int best = 0;
    double best_mag = -1.0;
    for (int l = 0; l < scene.target_path_count(); ++l) {
        double mag = std::abs(scene.paths[l].gain);
        if (mag > best_mag) {
            best_mag = mag;
            best = l;
        }
    }
    return best;
}

/// Draws a scene for one frame. Class targets contribute kPathsPerTarget
/// paths sharing the class kinematics with per-path velocity jitter,
/// independent initial phases and delays within a 30 m spread. Gains are
/// CN(0, 1/P) with P the total path count, so the expected aggregate power
/// is 1 regardless of clutter.
inline Scene sample_scene(TaskKind task, int class_or_negative, const FrameConfig& cfg,
                          const ScenarioFlags& scenario, uint64_t rng_seed) {
    Rng rng(rng_seed);
    Scene scene;
    scene.class_label = class_or_negative >= 0 ? class_or_negative
                                               : static_cast<int>(rng.uniform_index(kNumClasses));
    const ClassKinematics& kin = class_kinematics(scene.class_label);

    const int n_target = scenario.single_path ? 1 : kPathsPerTarget;
    scene.clutter_count = scenario.clutter ? kClutterPaths : 0;
    const int n_paths = n_target + scene.clutter_count;
    const double gain_var = 1.0 / n_paths;

    const double base_range = rng.uniform(0.0, kRangeMaxM - kPathSpreadM);
    const double base_velocity = rng.uniform(kin.v_lo, kin.v_hi);
    const double micro_hz = kin.micro_hz_hi > 0 ? rng.uniform(kin.micro_hz_lo, kin.micro_hz_hi) : 0.0;

    for (int l = 0; l < n_target; ++l) {
        PathParams p;
        p.gain = rng.complex_normal(gain_var);
        double range = base_range + rng.uniform(0.0, kPathSpreadM);
        p.delay_s = range_to_delay(range);
        double v = base_velocity * (1.0 + rng.uniform(-kVelocityJitter, kVelocityJitter));
        v = std::min(kin.v_hi, std::max(kin.v_lo, v));
        p.doppler_hz = v / cfg.wavelength_m;
        if (scenario.micro_doppler && kin.micro_amp_hi > 0) {
            p.micro_amp_m = rng.uniform(kin.micro_amp_lo, kin.micro_amp_hi);
            p.micro_omega_rad_s = kTwoPi * micro_hz;
            p.micro_phase_rad = rng.uniform(0.0, kTwoPi);
        }
        scene.paths.push_back(p);
    }
    for (int l = 0; l < scene.clutter_count; ++l) {
        PathParams p;
        p.gain = rng.complex_normal(gain_var);
        p.delay_s = range_to_delay(rng.uniform(0.0, kRangeMaxM));
        scene.paths.push_back(p);
    }
    scene.dominant_path = compute_dominant_path(scene);
    (void)task;
    return scene;
}

/// Time-frequency channel response of a scene:
///   H[n,m] = sum_l alpha_l exp(-j 2 pi m df tau_l) exp(j 2 pi nu_l n T)
///                    exp(j (4 pi / lambda) A_l sin(omega_l n T + phi_l))
inline TFGrid synthesize_channel(const Scene& scene, const FrameConfig& cfg) {
    const int n_slots = cfg.n_slots();
    const int n_sub = cfg.n_subcarriers();
    const double df = cfg.subcarrier_spacing_hz;
    const double slot_t = cfg.slot_interval_s();
    const double micro_scale = 4.0 * kPi / cfg.wavelength_m;

    TFGrid h(n_slots, n_sub);
    std::vector<cplx> freq(n_sub), time(n_slots);
    for (const PathParams& p : scene.paths) {
        require(p.delay_s >= 0.0 && p.delay_s < cfg.delay_support_s(),
                "path delay outside unambiguous support");
        for (int m = 0; m < n_sub; ++m)
            freq[m] = std::polar(1.0, -kTwoPi * m * df * p.delay_s);
        for (int n = 0; n < n_slots; ++n) {
            double t = n * slot_t;
            double phase = kTwoPi * p.doppler_hz * t;
            if (p.micro_amp_m != 0.0)
                phase += micro_scale * p.micro_amp_m * std::sin(p.micro_omega_rad_s * t + p.micro_phase_rad);
            time[n] = p.gain * std::polar(1.0, phase);
        }
        for (int n = 0; n < n_slots; ++n) {
            const cplx tn = time[n];
            cplx* row = h.data() + static_cast<size_t>(n) * n_sub;
            for (int m = 0; m < n_sub; ++m) row[m] += tn * freq[m];
        }
    }
    return h;
}

/// Y = H (.) X + V with V i.i.d. circularly-symmetric complex Gaussian of
/// per-cell variance noise_variance.
inline TFGrid receive(const TFGrid& h, const TFGrid& x_s, double noise_variance,
                      uint64_t rng_seed) {
    require(h.same_shape(x_s), "receive: grid shape mismatch");
    require(noise_variance >= 0.0, "receive: negative noise variance");
    TFGrid y(h.n_slots(), h.n_subcarriers());
    Rng rng(rng_seed);
    for (size_t i = 0; i < y.size(); ++i) {
        cplx v = noise_variance > 0 ? rng.complex_normal(noise_variance) : cplx{0.0, 0.0};
        y.data()[i] = h.data()[i] * x_s.data()[i] + v;
    }
    return y;
}

struct Label {
    int class_label = 0;
    double delay_s = 0.0;
};

/// Classification -> stored class; DelayEstimation -> delay of the dominant
/// (largest |gain|) non-clutter path, ties resolved toward the lowest index.
inline Label semantic_label(const Scene& scene, TaskKind task) {
    require(scene.target_path_count() >= 1, "scene has no target paths");
    Label label;
    label.class_label = scene.class_label;
    label.delay_s = scene.paths[compute_dominant_path(scene)].delay_s;
    (void)task;
    return label;
}

}  // namespace sems
