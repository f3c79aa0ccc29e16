#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "sems/encoder.hpp"
#include "sems/train.hpp"

using namespace sems;

namespace {

FrameConfig default_cfg() { return derive_config(FrameParams{}); }

}  // namespace

TEST_CASE("init_selector shapes and budget validation") {
    FrameConfig cfg = default_cfg();
    SelectorParams p = init_selector(32, cfg, {}, 1);
    CHECK(p.scores.shape() == std::vector<int>{32, 32, 64});
    CHECK(p.n_pilots == 32);
    SelectorParams full = init_selector(cfg.grid_cells(), cfg, {}, 1);
    CHECK(full.scores.shape()[0] == cfg.grid_cells());
    CHECK_THROWS_AS(init_selector(cfg.grid_cells() + 1, cfg, {}, 1), ValidationError);
    // gaussian(0, 0.01) init: sample std close to 0.1
    double acc = 0.0;
    for (double v : p.scores.values()) acc += v * v;
    CHECK(std::sqrt(acc / p.scores.size()) == Catch::Approx(0.1).epsilon(0.1));
}

TEST_CASE("soft masks are normalized per head") {
    FrameConfig cfg = default_cfg();
    SelectorParams p = init_selector(8, cfg, {}, 2);
    auto heads = soft_masks(p, 0.7, 33);
    REQUIRE(heads.size() == 8);
    for (const auto& h : heads) {
        double total = 0.0;
        for (double v : h.soft.values()) total += v;
        CHECK(total == Catch::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("strongly peaked scores pin the hard indices") {
    FrameConfig cfg = default_cfg();
    SelectorParams p = init_selector(4, cfg, {}, 3);
    const int cells = cfg.grid_cells();
    std::vector<int> targets = {5, 100, 700, 2000};
    for (int r = 0; r < 4; ++r)
        p.scores.values()[static_cast<size_t>(r) * cells + targets[r]] = 25.0;
    int hits = 0, draws = 0;
    for (uint64_t seed = 0; seed < 500; ++seed) {
        auto heads = soft_masks(p, 1.0, seed);
        for (int r = 0; r < 4; ++r) {
            ++draws;
            if (static_cast<int>(heads[r].hard_index) == targets[r]) ++hits;
        }
    }
    CHECK(static_cast<double>(hits) / draws > 0.99);
}

TEST_CASE("large temperature flattens the soft masks") {
    FrameConfig cfg = default_cfg();
    SelectorParams p = init_selector(3, cfg, {}, 4);
    for (auto& v : p.scores.values()) v = 0.0;
    auto heads = soft_masks(p, 100.0, 9);
    for (const auto& h : heads) {
        double mx = 0.0;
        for (double v : h.soft.values()) mx = std::max(mx, v);
        CHECK(mx < 2.0 / cfg.grid_cells());
    }
}

TEST_CASE("combine_masks keeps distinct picks verbatim") {
    std::vector<double> a(12, 0.0), b(12, 0.0);
    a[3] = 5.0;
    b[7] = 5.0;
    auto assigned = combine_masks({&a, &b}, 12);
    CHECK(assigned == std::vector<int>{3, 7});
}

TEST_CASE("colliding head falls back to its own next-best cell") {
    // both heads prefer cell 0; head 1's second choice is cell 1
    std::vector<double> h0(12, 0.0), h1(12, 0.0);
    h0[0] = 9.0;
    h1[0] = 8.0;
    h1[1] = 7.0;
    auto assigned = combine_masks({&h0, &h1}, 12);
    CHECK(assigned == std::vector<int>{0, 1});
}

TEST_CASE("full-budget selection covers the grid regardless of scores") {
    FrameConfig cfg = default_cfg();
    std::vector<std::vector<double>> scores(cfg.grid_cells(),
                                            std::vector<double>(cfg.grid_cells(), 0.25));
    std::vector<const std::vector<double>*> ptrs;
    for (auto& s : scores) ptrs.push_back(&s);
    auto assigned = combine_masks(ptrs, cfg.grid_cells());
    std::set<int> unique(assigned.begin(), assigned.end());
    CHECK(static_cast<int>(unique.size()) == cfg.grid_cells());
}

TEST_CASE("multiplex places pilots and scales data cells") {
    FrameConfig cfg = default_cfg();
    TFGrid x(cfg.n_slots(), cfg.n_subcarriers());
    Rng rng(5);
    for (size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.complex_normal(1.0);

    PilotPattern empty(cfg.n_slots(), cfg.n_subcarriers(), {});
    TFGrid no_pilots = multiplex(empty, x, cfg);
    for (size_t i = 0; i < x.size(); ++i)
        CHECK(no_pilots.data()[i] == std::sqrt(cfg.data_energy()) * x.data()[i]);

    std::vector<std::pair<int, int>> all;
    for (int n = 0; n < cfg.n_slots(); ++n)
        for (int m = 0; m < cfg.n_subcarriers(); ++m) all.emplace_back(n, m);
    TFGrid full_grid = multiplex(PilotPattern(cfg.n_slots(), cfg.n_subcarriers(), all), x, cfg);
    for (size_t i = 0; i < x.size(); ++i)
        CHECK(full_grid.data()[i] == std::sqrt(cfg.pilot_energy()) * cfg.pilot_symbol());

    PilotPattern one(cfg.n_slots(), cfg.n_subcarriers(), {{0, 0}});
    TFGrid y = multiplex(one, x, cfg);
    CHECK(y.at(0, 0) == cplx{1.0, 0.0});
    CHECK(y.at(1, 1) == x.at(1, 1));
}

TEST_CASE("export_pattern is deterministic with documented tie-breaks") {
    FrameConfig cfg = default_cfg();
    SelectorParams p = init_selector(6, cfg, {}, 7);
    PilotPattern a = export_pattern(p);
    PilotPattern b = export_pattern(p);
    CHECK(a.cells() == b.cells());

    // unique per-head maxima are taken verbatim
    const int cells = cfg.grid_cells();
    for (auto& v : p.scores.values()) v = 0.0;
    std::vector<int> targets = {11, 1200, 64, 5, 2047, 900};
    for (int r = 0; r < 6; ++r)
        p.scores.values()[static_cast<size_t>(r) * cells + targets[r]] = 3.0;
    PilotPattern c = export_pattern(p);
    for (int r = 0; r < 6; ++r) {
        CHECK(c.cells()[r].first == targets[r] / cfg.n_subcarriers());
        CHECK(c.cells()[r].second == targets[r] % cfg.n_subcarriers());
    }

    // all-equal scores: first cells in row-major order
    for (auto& v : p.scores.values()) v = 0.5;
    PilotPattern uniform = export_pattern(p);
    for (int r = 0; r < 6; ++r) {
        CHECK(uniform.cells()[r].first == 0);
        CHECK(uniform.cells()[r].second == r);
    }
}

TEST_CASE("exported patterns always hold exactly the pilot budget") {
    FrameConfig cfg = default_cfg();
    for (int budget : {1, 2, 32, 100}) {
        for (uint64_t seed = 0; seed < 5; ++seed) {
            SelectorParams p = init_selector(budget, cfg, {}, seed);
            PilotPattern pat = export_pattern(p);
            CHECK(pat.n_pilots() == budget);
            std::set<std::pair<int, int>> unique(pat.cells().begin(), pat.cells().end());
            CHECK(static_cast<int>(unique.size()) == budget);
        }
    }
}

TEST_CASE("selector forward keeps the budget on the tape mask") {
    FrameConfig cfg = default_cfg();
    SelectorParams p = init_selector(16, cfg, {}, 11);
    for (uint64_t seed = 0; seed < 10; ++seed) {
        SelectorForward fwd = selector_forward(p, 0.8, seed);
        double total = 0.0;
        for (double v : fwd.mask.values()) {
            CHECK((v == 0.0 || v == 1.0));
            total += v;
        }
        CHECK(total == 16.0);
        CHECK(fwd.pattern.n_pilots() == 16);
    }
}

TEST_CASE("straight-through gradients agree in sign with the soft relaxation") {
    FrameConfig cfg = default_cfg();
    SelectorParams p = init_selector(4, cfg, {}, 13);
    const int cells = cfg.grid_cells();
    Rng rng(21);
    std::vector<double> c(cells), t(cells);
    for (int i = 0; i < cells; ++i) {
        c[i] = 0.5 + rng.uniform();
        t[i] = rng.uniform() - 0.5;
    }
    auto loss_of_mask = [&](const Tensor& mask) {
        Tensor d = sub(mask, Tensor::constant({cells}, t));
        return sum(mul(mul(d, d), Tensor::constant({cells}, c)));
    };
    const uint64_t gumbel_seed = 17;

    backward(loss_of_mask(selector_forward(p, 1.0, gumbel_seed).mask));
    std::vector<double> g_st = p.scores.grad();
    p.scores.node()->grad.clear();

    // finite differences through the soft-blended forward with the same draw
    Rng pick(3);
    int agree = 0;
    const int n_coords = 10;
    for (int k = 0; k < n_coords; ++k) {
        size_t idx = pick.uniform_index(p.scores.size());
        const double h = 1e-4;
        const double saved = p.scores.values()[idx];
        p.scores.values()[idx] = saved + h;
        double fp = loss_of_mask(selector_soft_mask(p, 1.0, gumbel_seed)).value();
        p.scores.values()[idx] = saved - h;
        double fm = loss_of_mask(selector_soft_mask(p, 1.0, gumbel_seed)).value();
        p.scores.values()[idx] = saved;
        double fd = (fp - fm) / (2.0 * h);
        if ((fd >= 0) == (g_st[idx] >= 0) || (std::abs(fd) < 1e-9 && std::abs(g_st[idx]) < 1e-9))
            ++agree;
    }
    CHECK(agree >= 9);
}

TEST_CASE("task gradients reach the selector scores through the channel") {
    FrameConfig cfg = default_cfg();
    SelectorParams sel = init_selector(8, cfg, {}, 19);
    ClassifierParams cls = ClassifierParams::init(cfg, 23);

    Scene scene = sample_scene(TaskKind::Classification, 1, cfg, {}, 31);
    TFGrid h = synthesize_channel(scene, cfg);
    SelectorForward fwd = selector_forward(sel, 1.0, 37);
    Tensor input = detail::masked_input(fwd.mask, h, cfg, 0.01, 41, 43);
    Tensor loss = cross_entropy(classify(input, cls).probs, 1);
    backward(loss);
    double norm = 0.0;
    for (double g : sel.scores.grad()) norm += g * g;
    CHECK(norm > 0.0);
}
