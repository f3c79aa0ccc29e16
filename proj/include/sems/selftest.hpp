#pragma once

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "sems/baselines.hpp"
#include "sems/channel.hpp"
#include "sems/config.hpp"
#include "sems/decoders.hpp"
#include "sems/encoder.hpp"
#include "sems/tensor.hpp"

namespace sems {

/// Fast consistency battery: gradient checks on every differentiable
/// primitive plus the closed-form channel and estimator oracles. Returns the
/// number of failures and prints one line per check.
inline int selftest() {
    int failures = 0;
    auto check = [&](const std::string& name, bool ok) {
        std::printf("[%s] %s\n", ok ? "ok" : "FAIL", name.c_str());
        if (!ok) ++failures;
    };

    Rng rng(42);
    auto random_leaf = [&](std::vector<int> shape) {
        return Tensor::gaussian(std::move(shape), 1.0, rng);
    };

    // gradient checks
    {
        Tensor w = random_leaf({4, 3});
        Tensor b = random_leaf({3});
        check("grad dense", grad_check([&](const Tensor& x) { return sum(dense(x, w, b)); },
                                       random_leaf({5, 4})) < 1e-5);
        Tensor k2 = random_leaf({3, 2, 3, 3});
        check("grad conv2d", grad_check([&](const Tensor& x) { return sum(conv2d(x, k2)); },
                                        random_leaf({2, 5, 6})) < 1e-5);
        Tensor k1 = random_leaf({2, 3, 3});
        check("grad conv1d", grad_check([&](const Tensor& x) { return sum(conv1d(x, k1)); },
                                        random_leaf({3, 7})) < 1e-5);
        Tensor shift = affine(random_leaf({6}), 0.2, 1.0);  // keep away from the relu kink
        check("grad relu",
              grad_check([&](const Tensor& x) { return sum(relu(add_const_vec(x, std::vector<double>(6, 0.5)))); },
                         random_leaf({6})) < 1e-5);
        check("grad softmax-ce",
              grad_check([&](const Tensor& x) { return cross_entropy(softmax(x), 1); },
                         random_leaf({5})) < 1e-5);
        check("grad softargmax",
              grad_check([&](const Tensor& x) {
                  return soft_argmax(x, std::vector<double>{0.0, 0.5, 1.0, 1.5});
              },
                         random_leaf({4})) < 1e-5);
    }

    // channel closed form
    {
        FrameConfig cfg = derive_config(FrameParams{});
        Scene scene;
        scene.paths.push_back({cplx{1.0, 0.0}, 1.0 / (cfg.n_subcarriers() * cfg.subcarrier_spacing_hz),
                               0.0, 0.0, 0.0, 0.0});
        TFGrid h = synthesize_channel(scene, cfg);
        double worst = 0.0;
        for (int m = 0; m < cfg.n_subcarriers(); ++m) {
            cplx expected = std::polar(1.0, -kTwoPi * m / cfg.n_subcarriers());
            worst = std::max(worst, std::abs(h.at(3, m) - expected));
        }
        check("channel closed form", worst < 1e-12);
    }

    // estimator oracles: noiseless on-grid single path
    {
        FrameConfig cfg = derive_config(FrameParams{});
        DelayDictionary dict = build_delay_dictionary(cfg, 64, 0.9 / cfg.subcarrier_spacing_hz);
        std::vector<std::pair<int, int>> cells;
        for (int slot = 0; slot < 4; ++slot)
            for (int sub = 0; sub < 8; ++sub) cells.emplace_back(slot * 8, sub);
        PilotPattern pattern(cfg.n_slots(), cfg.n_subcarriers(), std::move(cells));

        bool omp_ok = true, music_ok = true;
        for (int trial = 0; trial < 20; ++trial) {
            Rng trng(1000 + trial);
            int q_true = 1 + static_cast<int>(trng.uniform_index(dict.n_grid() - 1));
            Scene scene;
            scene.paths.push_back({cplx{1.0, 0.3}, dict.grid()[q_true], 0.0, 0.0, 0.0, 0.0});
            TFGrid h = synthesize_channel(scene, cfg);
            TFGrid x = multiplex(pattern, random_qpsk(cfg.n_slots(), cfg.n_subcarriers(), trial), cfg);
            TFGrid y = receive(h, x, 0.0, 0);
            auto pilots = normalize_pilots(y, pattern, cfg.pilot_symbol());
            auto omp = omp_delay(pilots, cfg.n_slots(), cfg.n_subcarriers(), dict, pattern, 1);
            if (omp.size() != 1 || std::abs(omp[0] - dict.grid()[q_true]) > 1e-15) omp_ok = false;
            double mu = music_delay(pilots, cfg.n_slots(), cfg.n_subcarriers(), pattern, 1, dict);
            if (std::abs(mu - dict.grid()[q_true]) > dict.grid_spacing() / 2) music_ok = false;
        }
        check("omp exact recovery", omp_ok);
        check("music peak at truth", music_ok);
    }

    // straight-through budget invariant
    {
        FrameConfig cfg = derive_config(FrameParams{});
        SelectorParams sel = init_selector(32, cfg, {}, 5);
        SelectorForward fwd = selector_forward(sel, 1.0, 77);
        double total = 0.0;
        for (double v : fwd.mask.values()) total += v;
        check("selector budget", fwd.pattern.n_pilots() == 32 && std::abs(total - 32.0) < 1e-12);
    }
    return failures;
}

}  // namespace sems
