#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "sems/config.hpp"

using namespace sems;

TEST_CASE("derive_config computes spacing and wavelength") {
    FrameParams raw;
    raw.bandwidth_hz = 30e6;
    raw.n_subcarriers = 64;
    raw.carrier_hz = 3e9;
    FrameConfig cfg = derive_config(raw);
    CHECK(cfg.subcarrier_spacing_hz == Catch::Approx(468750.0).epsilon(1e-15));
    CHECK(cfg.wavelength_m == Catch::Approx(0.0999308).epsilon(1e-4));
    CHECK(cfg.wavelength_m == Catch::Approx(0.1).epsilon(1e-2));
    CHECK(cfg.wavelength_m == kSpeedOfLight / raw.carrier_hz);
    // spacing times M reproduces the bandwidth to ulp scale
    CHECK(std::abs(cfg.subcarrier_spacing_hz * raw.n_subcarriers - raw.bandwidth_hz) <=
          1e-9 * raw.bandwidth_hz);
}

TEST_CASE("derive_config trivial division") {
    FrameParams raw;
    raw.bandwidth_hz = 30e6;
    raw.n_subcarriers = 30;
    FrameConfig cfg = derive_config(raw);
    CHECK(cfg.subcarrier_spacing_hz == 1e6);
}

TEST_CASE("derive_config rejects degenerate inputs") {
    FrameParams raw;
    raw.bandwidth_hz = 0.0;
    CHECK_THROWS_AS(derive_config(raw), ValidationError);
    raw.bandwidth_hz = 30e6;
    raw.n_subcarriers = 1;
    CHECK_THROWS_AS(derive_config(raw), ValidationError);
    raw.n_subcarriers = 64;
    raw.pilot_energy = -1.0;
    CHECK_THROWS_AS(derive_config(raw), ValidationError);
}

TEST_CASE("config derivation is idempotent") {
    FrameParams raw;
    raw.bandwidth_hz = 17e6;
    raw.n_subcarriers = 48;
    raw.carrier_hz = 2.2e9;
    FrameConfig once = derive_config(raw);
    FrameConfig twice = derive_config(once.raw);
    CHECK(twice.subcarrier_spacing_hz == once.subcarrier_spacing_hz);
    CHECK(twice.wavelength_m == once.wavelength_m);
    CHECK(twice.raw.bandwidth_hz == once.raw.bandwidth_hz);
}

TEST_CASE("snr round-trips through noise variance") {
    FrameConfig cfg = derive_config(FrameParams{});
    for (double db : {-10.0, 0.0, 3.7, 20.0, 30.0}) {
        FrameConfig c = cfg.with_snr_db(db);
        CHECK(c.snr_db() == Catch::Approx(db).epsilon(1e-12));
    }
}

TEST_CASE("spawn_seed is deterministic and stream-separated") {
    SeedSpec spec{7};
    CHECK(spawn_seed(spec, "scene", 0) == spawn_seed(spec, "scene", 0));
    CHECK(spawn_seed(spec, "scene", 0) != spawn_seed(spec, "noise", 0));
    SeedSpec other{8};
    CHECK(spawn_seed(spec, "scene", 0) != spawn_seed(other, "scene", 0));
    CHECK_THROWS_AS(spawn_seed(spec, "bogus", 0), ValidationError);
}

TEST_CASE("spawn_seed has no collisions over a million draws") {
    SeedSpec spec{1234};
    std::unordered_set<uint64_t> seen;
    seen.reserve(1 << 21);
    for (const char* label : {"scene", "noise"})
        for (uint64_t i = 0; i < 500000; ++i) seen.insert(spawn_seed(spec, label, i));
    CHECK(seen.size() == 1000000);
}

TEST_CASE("ini config parses sections and grids") {
    std::istringstream in(
        "# comment\n"
        "[frame]\n"
        "n_slots = 16\n"
        "n_subcarriers = 32\n"
        "bandwidth_hz = 15e6\n"
        "[train]\n"
        "epochs = 3\n"
        "n_pilots = 8\n"
        "[sweep]\n"
        "snr_db_grid = -10:5:30\n"
        "budget_grid = 2,8,32\n");
    AppConfig cfg = parse_app_config(in);
    CHECK(cfg.frame.n_slots() == 16);
    CHECK(cfg.frame.subcarrier_spacing_hz == Catch::Approx(15e6 / 32));
    CHECK(cfg.train.epochs == 3);
    CHECK(cfg.train.n_pilots == 8);
    REQUIRE(cfg.sweep.snr_db_grid.size() == 9);
    CHECK(cfg.sweep.snr_db_grid.front() == -10.0);
    CHECK(cfg.sweep.snr_db_grid.back() == 30.0);
    REQUIRE(cfg.sweep.budget_grid.size() == 3);
    CHECK(cfg.sweep.budget_grid[2] == 32);
}

TEST_CASE("ini config rejects unknown keys") {
    std::istringstream in("[frame]\nn_slots = 16\nbogus_key = 1\n");
    CHECK_THROWS_AS(parse_app_config(in), ValidationError);
    std::istringstream in2("[nosuch]\nx = 1\n");
    CHECK_THROWS_AS(parse_app_config(in2), ValidationError);
}

TEST_CASE("config digest tracks the frame parameters") {
    FrameConfig a = derive_config(FrameParams{});
    FrameParams raw;
    raw.bandwidth_hz = 31e6;
    FrameConfig b = derive_config(raw);
    CHECK(config_digest(a) == config_digest(a));
    CHECK(config_digest(a) != config_digest(b));
}

TEST_CASE("missing config file raises a missing-artifact error") {
    CHECK_THROWS_AS(load_app_config("/nonexistent/p2r.ini"), MissingArtifactError);
}
