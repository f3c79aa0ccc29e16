#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sems/channel.hpp"
#include "sems/decoders.hpp"
#include "sems/encoder.hpp"

using namespace sems;

namespace {

FrameConfig default_cfg() { return derive_config(FrameParams{}); }

PilotPattern full_grid_pattern(const FrameConfig& cfg) {
    std::vector<std::pair<int, int>> cells;
    for (int n = 0; n < cfg.n_slots(); ++n)
        for (int m = 0; m < cfg.n_subcarriers(); ++m) cells.emplace_back(n, m);
    return PilotPattern(cfg.n_slots(), cfg.n_subcarriers(), std::move(cells));
}

}  // namespace

TEST_CASE("normalize_pilots keeps pilot cells and zeroes the rest") {
    FrameConfig cfg = default_cfg();
    Scene ones;
    ones.paths.push_back({cplx{1.0, 0.0}, 0.0, 0.0, 0.0, 0.0, 0.0});
    TFGrid h = synthesize_channel(ones, cfg);
    PilotPattern pattern(cfg.n_slots(), cfg.n_subcarriers(), {{0, 0}, {3, 17}});
    TFGrid x = multiplex(pattern, random_qpsk(cfg.n_slots(), cfg.n_subcarriers(), 7), cfg);
    TFGrid y = receive(h, x, 0.0, 0);

    auto t = normalize_pilots(y, pattern, cfg.pilot_symbol());
    const size_t plane = h.size();
    for (int n = 0; n < cfg.n_slots(); ++n)
        for (int m = 0; m < cfg.n_subcarriers(); ++m) {
            size_t idx = static_cast<size_t>(n) * cfg.n_subcarriers() + m;
            if (pattern.is_pilot(n, m)) {
                CHECK(t[idx] == Catch::Approx(1.0));
                CHECK(t[plane + idx] == Catch::Approx(0.0).margin(1e-15));
            } else {
                CHECK(t[idx] == 0.0);
                CHECK(t[plane + idx] == 0.0);
            }
        }

    // halving under s_p = 2 and the zero-symbol error
    auto t2 = normalize_pilots(y, pattern, cplx{2.0, 0.0});
    CHECK(t2[0] == Catch::Approx(0.5 * t[0]));
    CHECK_THROWS_AS(normalize_pilots(y, pattern, cplx{0.0, 0.0}), ValidationError);
}

TEST_CASE("classifier probabilities live on the simplex") {
    FrameConfig cfg = default_cfg();
    ClassifierParams params = ClassifierParams::init(cfg, 3);
    Rng rng(8);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor input = Tensor::gaussian({2, cfg.n_slots(), cfg.n_subcarriers()}, 1.0, rng, false);
        ClassifierOutput out = classify(input, params);
        double total = 0.0;
        for (double v : out.probs.values()) {
            CHECK(v >= 0.0);
            total += v;
        }
        CHECK(total == Catch::Approx(1.0).epsilon(1e-9));
        CHECK(out.latent.size() == kLatentDim);
    }
}

TEST_CASE("fresh classifier on zero input is near-uniform") {
    FrameConfig cfg = default_cfg();
    ClassifierParams params = ClassifierParams::init(cfg, 5);
    Tensor zero = Tensor::zeros({2, cfg.n_slots(), cfg.n_subcarriers()}, false);
    auto probs = classify(zero, params).probs.values();
    double mx = *std::max_element(probs.begin(), probs.end());
    double mn = *std::min_element(probs.begin(), probs.end());
    CHECK(mx - mn < 0.05);
}

TEST_CASE("classifier overfits a 32-frame batch to full accuracy") {
    FrameConfig cfg = default_cfg();
    ClassifierParams params = ClassifierParams::init(cfg, 11);
    std::vector<Tensor> params_list;
    for (const NamedParam& p : params.named()) params_list.push_back(p.tensor);
    AdamState adam = AdamState::init(params_list, 0.01);

    Rng rng(13);
    std::vector<Tensor> inputs;
    std::vector<int> labels;
    for (int i = 0; i < 32; ++i) {
        inputs.push_back(Tensor::gaussian({2, cfg.n_slots(), cfg.n_subcarriers()}, 1.0, rng, false));
        labels.push_back(i % kNumClasses);
    }
    for (int step = 0; step < 150; ++step) {
        zero_grad(params_list);
        for (int i = 0; i < 32; ++i)
            backward(cross_entropy(classify(inputs[i], params).probs, labels[i]), 1.0 / 32);
        adam_step(params_list, adam);
    }
    int correct = 0;
    for (int i = 0; i < 32; ++i) {
        auto probs = classify(inputs[i], params).probs.values();
        if (static_cast<int>(argmax_index(probs)) == labels[i]) ++correct;
    }
    CHECK(correct == 32);
}

TEST_CASE("delay dictionary columns") {
    FrameConfig cfg = default_cfg();
    DelayDictionary dict = build_delay_dictionary(cfg, 256, kMaxTargetDelayS);
    CHECK(dict.n_grid() == 256);
    CHECK(dict.grid().front() == 0.0);
    CHECK(dict.grid().back() == Catch::Approx(kMaxTargetDelayS));
    // tau = 0 column is all ones
    for (int m = 0; m < cfg.n_subcarriers(); ++m)
        CHECK(std::abs(dict.at(m, 0) - cplx{1.0, 0.0}) < 1e-15);
    // unit-modulus entries; self inner product equals M
    cplx self{0, 0};
    for (int m = 0; m < cfg.n_subcarriers(); ++m) {
        CHECK(std::abs(std::abs(dict.at(m, 100)) - 1.0) < 1e-12);
        self += dict.at(m, 100) * std::conj(dict.at(m, 100));
    }
    CHECK(self.real() == Catch::Approx(static_cast<double>(cfg.n_subcarriers())));

    CHECK_THROWS_AS(build_delay_dictionary(cfg, 1, kMaxTargetDelayS), ValidationError);
    CHECK_THROWS_AS(build_delay_dictionary(cfg, 64, cfg.delay_support_s()), ValidationError);
}

TEST_CASE("dictionary cross-correlation follows the dirichlet kernel") {
    FrameConfig cfg = default_cfg();
    DelayDictionary dict = build_delay_dictionary(cfg, 64, 1.2e-6);
    const int m_count = cfg.n_subcarriers();
    const double df = cfg.subcarrier_spacing_hz;
    for (auto [qa, qb] : {std::pair{3, 17}, std::pair{0, 40}, std::pair{25, 26}}) {
        cplx acc{0, 0};
        for (int m = 0; m < m_count; ++m) acc += dict.at(m, qa) * std::conj(dict.at(m, qb));
        double delta = dict.grid()[qb] - dict.grid()[qa];
        double expected = std::abs(std::sin(kPi * m_count * df * delta) / std::sin(kPi * df * delta));
        CHECK(std::abs(acc) == Catch::Approx(expected).epsilon(1e-9).margin(1e-9));
    }
}

TEST_CASE("soft-argmax expectation") {
    std::vector<double> grid = {0.0, 1.0, 2.0, 3.0};
    std::vector<double> spike(4, 0.0);
    spike[2] = 50.0;
    CHECK(soft_argmax_value(spike, grid) == Catch::Approx(2.0).margin(1e-9));
    CHECK(soft_argmax_value({0.3, 0.3, 0.3, 0.3}, grid) == Catch::Approx(1.5));
    std::vector<double> two(4, 0.0);
    two[0] = 40.0;
    two[3] = 40.0;
    CHECK(soft_argmax_value(two, grid) == Catch::Approx(1.5));
    CHECK_THROWS_AS(soft_argmax(Tensor::leaf({3}, {1, 2, 3}), grid), ValidationError);

    // tape version agrees and is differentiable
    Tensor z = Tensor::leaf({4}, {0.1, 0.9, -0.4, 0.2});
    CHECK(soft_argmax(z, grid).value() == Catch::Approx(soft_argmax_value(z.values(), grid)));
    CHECK(grad_check([&](const Tensor& x) { return soft_argmax(x, grid); }, z) < 1e-6);
}

TEST_CASE("correlation map peaks at the true delay bin under identity projection") {
    FrameConfig cfg = default_cfg();
    auto dict = build_delay_dictionary(cfg, 4 * cfg.n_subcarriers(), kMaxTargetDelayS);
    RegressorParams params = RegressorParams::init(cfg, 17);
    // identity-style projection: feature i reads slot i
    for (auto& v : params.w_proj.values()) v = 0.0;
    for (int i = 0; i < kRegressorFeatures; ++i)
        params.w_proj.values()[static_cast<size_t>(i) * cfg.n_slots() + i] = 1.0;

    const int q_true = 123;
    Scene scene;
    scene.paths.push_back({cplx{0.8, -0.6}, dict.grid()[q_true], 0.0, 0.0, 0.0, 0.0});
    TFGrid h = synthesize_channel(scene, cfg);
    PilotPattern pattern = full_grid_pattern(cfg);
    TFGrid y = receive(h, multiplex(pattern, random_qpsk(32, 64, 3), cfg), 0.0, 0);
    Tensor input = Tensor::constant({2, cfg.n_slots(), cfg.n_subcarriers()},
                                    normalize_pilots(y, pattern, cfg.pilot_symbol()));
    Tensor corr = delay_correlation_map(input, params, dict);
    // column energy across the 4 magnitude rows
    int best = -1;
    double best_e = -1.0;
    for (int q = 0; q < dict.n_grid(); ++q) {
        double e = 0.0;
        for (int i = 0; i < kRegressorFeatures; ++i)
            e += corr.values()[static_cast<size_t>(i) * dict.n_grid() + q];
        if (e > best_e) {
            best_e = e;
            best = q;
        }
    }
    CHECK(best == q_true);
}

TEST_CASE("estimate_delay stays on the grid range and ignores data cells") {
    FrameConfig cfg = default_cfg();
    auto dict = build_delay_dictionary(cfg, 4 * cfg.n_subcarriers(), kMaxTargetDelayS);
    RegressorParams params = RegressorParams::init(cfg, 19);
    Rng rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor input = Tensor::gaussian({2, cfg.n_slots(), cfg.n_subcarriers()}, 1.0, rng, false);
        double tau = estimate_delay(input, params, dict).value();
        CHECK(tau >= 0.0);
        CHECK(tau <= dict.grid().back());
    }

    // permuting non-pilot contents cannot change the estimate
    PilotPattern pattern(cfg.n_slots(), cfg.n_subcarriers(),
                         {{0, 0}, {0, 5}, {1, 9}, {4, 40}, {7, 63}});
    Scene scene = sample_scene(TaskKind::DelayEstimation, -1, cfg, {}, 51);
    TFGrid h = synthesize_channel(scene, cfg);
    TFGrid y1 = receive(h, multiplex(pattern, random_qpsk(32, 64, 1), cfg), 0.0, 0);
    TFGrid y2 = receive(h, multiplex(pattern, random_qpsk(32, 64, 2), cfg), 0.0, 0);
    Tensor i1 = Tensor::constant({2, 32, 64}, normalize_pilots(y1, pattern, cfg.pilot_symbol()));
    Tensor i2 = Tensor::constant({2, 32, 64}, normalize_pilots(y2, pattern, cfg.pilot_symbol()));
    CHECK(estimate_delay(i1, params, dict).value() == estimate_delay(i2, params, dict).value());
}

TEST_CASE("a trained regressor resolves a noiseless on-grid path") {
    FrameConfig cfg = default_cfg();
    auto dict = build_delay_dictionary(cfg, 4 * cfg.n_subcarriers(), kMaxTargetDelayS);
    RegressorParams params = RegressorParams::init(cfg, 29);
    std::vector<Tensor> plist;
    for (const NamedParam& p : params.named()) plist.push_back(p.tensor);
    AdamState adam = AdamState::init(plist, 0.01);

    PilotPattern pattern = full_grid_pattern(cfg);
    const double tau_max = dict.grid().back();
    Rng rng(31);
    std::vector<Tensor> inputs;
    std::vector<double> taus;
    for (int i = 0; i < 48; ++i) {
        int q = 4 + static_cast<int>(rng.uniform_index(dict.n_grid() - 8));
        Scene scene;
        scene.paths.push_back({rng.complex_normal(1.0), dict.grid()[q], 0.0, 0.0, 0.0, 0.0});
        TFGrid h = synthesize_channel(scene, cfg);
        TFGrid y = receive(h, multiplex(pattern, random_qpsk(32, 64, i), cfg), 0.0, 0);
        inputs.push_back(Tensor::constant({2, 32, 64}, normalize_pilots(y, pattern, cfg.pilot_symbol())));
        taus.push_back(dict.grid()[q]);
    }
    for (int step = 0; step < 220; ++step) {
        zero_grad(plist);
        for (size_t i = 0; i < inputs.size(); ++i)
            backward(loss_mse(estimate_delay(inputs[i], params, dict), taus[i], tau_max),
                     1.0 / inputs.size());
        adam_step(plist, adam);
    }
    double worst = 0.0;
    for (size_t i = 0; i < inputs.size(); ++i) {
        double tau = estimate_delay(inputs[i], params, dict).value();
        worst = std::max(worst, std::abs(tau - taus[i]));
    }
    CHECK(worst < dict.grid_spacing());
}

TEST_CASE("normalized delay mse and its gradient") {
    const double tau_max = 1.0e-6;
    CHECK(loss_mse(Tensor::scalar(0.4e-6), 0.4e-6, tau_max).value() == Catch::Approx(0.0).margin(1e-18));
    CHECK(loss_mse(Tensor::scalar(tau_max), 0.0, tau_max).value() == Catch::Approx(1.0));
    Tensor pred = Tensor::leaf({1}, {0.7e-6});
    Tensor loss = loss_mse(pred, 0.2e-6, tau_max);
    backward(loss);
    CHECK(pred.grad()[0] == Catch::Approx(2.0 * (0.7e-6 - 0.2e-6) / (tau_max * tau_max)).epsilon(1e-9));
}

TEST_CASE("regressor front-end gradients match finite differences") {
    FrameConfig cfg = derive_config([] {
        FrameParams raw;
        raw.n_slots = 6;
        raw.n_subcarriers = 8;
        raw.bandwidth_hz = 8e6;
        return raw;
    }());
    auto dict = build_delay_dictionary(cfg, 12, 0.8 / cfg.subcarrier_spacing_hz);
    Rng rng(37);
    Tensor w = Tensor::gaussian({kRegressorFeatures, cfg.n_slots()}, 0.6, rng);
    Tensor x = Tensor::gaussian({2, cfg.n_slots(), cfg.n_subcarriers()}, 0.8, rng);
    CHECK(grad_check([&](const Tensor& t) {
              return sum(dict_correlate_mag(time_projection(t, w), dict));
          }, x) < 1e-5);
    CHECK(grad_check([&](const Tensor& wt) {
              return sum(dict_correlate_mag(time_projection(x, wt), dict));
          }, w) < 1e-5);
}

TEST_CASE("channel reconstruction loss") {
    FrameConfig cfg = default_cfg();
    Scene scene = sample_scene(TaskKind::Classification, 0, cfg, {}, 41);
    TFGrid h = synthesize_channel(scene, cfg);

    // exact prediction has zero loss
    Tensor perfect = Tensor::constant({2, 32, 64}, grid_to_stacked(h));
    CHECK(loss_channel_mse(perfect, h).value() == Catch::Approx(0.0).margin(1e-18));

    // zero predictor: loss approaches the mean per-cell channel power,
    // which the gain normalization pins near 1 (Monte Carlo oracle)
    double acc = 0.0;
    const int n_frames = 400;
    Tensor zero = Tensor::zeros({2, 32, 64}, false);
    for (int i = 0; i < n_frames; ++i) {
        Scene s = sample_scene(TaskKind::Classification, i % 3, cfg, {},
                               spawn_seed(SeedSpec{77}, "scene", i));
        acc += loss_channel_mse(zero, synthesize_channel(s, cfg)).value() / n_frames;
    }
    CHECK(acc == Catch::Approx(1.0).epsilon(0.12));

    // gradients through the decoder parameters
    ReconParams params = ReconParams::init(cfg, 43);
    Tensor input = Tensor::constant({2, 32, 64}, grid_to_stacked(h));
    Rng coord_rng(5);
    Tensor k = params.blocks[0].k1;
    Tensor loss = loss_channel_mse(reconstruct_channel(input, params), h);
    backward(loss);
    auto analytic = k.grad();
    k.node()->grad.clear();
    int checked = 0;
    for (int c = 0; c < 5; ++c) {
        size_t idx = coord_rng.uniform_index(k.size());
        const double hstep = 1e-5;
        const double saved = k.values()[idx];
        k.values()[idx] = saved + hstep;
        double fp = loss_channel_mse(reconstruct_channel(input, params), h).value();
        k.values()[idx] = saved - hstep;
        double fm = loss_channel_mse(reconstruct_channel(input, params), h).value();
        k.values()[idx] = saved;
        double fd = (fp - fm) / (2 * hstep);
        double denom = std::max({1.0, std::abs(fd), std::abs(analytic[idx])});
        CHECK(std::abs(fd - analytic[idx]) / denom < 1e-3);
        ++checked;
    }
    CHECK(checked == 5);
}
