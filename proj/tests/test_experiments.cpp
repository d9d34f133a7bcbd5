#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "hbnode/hbnode.hpp"

using namespace hbnode;
using Catch::Approx;

TEST_CASE("race sample grid", "[experiments]") {
    const Vec t = race_sample_times(0.25, 1.0);
    CHECK(t == Vec{0.0, 0.25, 0.5, 0.75, 1.0});
    const Vec u = race_sample_times(0.3, 1.0);
    CHECK(u.front() == 0.0);
    CHECK(u.back() == Approx(1.0));
}

TEST_CASE("race settings", "[experiments]") {
    const auto r = RaceSettings::defaults(Objective::rosenbrock);
    CHECK(r.gamma == 0.9);
    const auto b = RaceSettings::defaults(Objective::beale);
    CHECK(b.gamma == 0.7);
    CHECK(b.horizon == 2.0);
    RaceSettings bad = r;
    bad.dt = 0.0;
    CHECK_THROWS_AS(run_race(bad), std::invalid_argument);
}

TEST_CASE("race trajectories start together", "[experiments]") {
    RaceSettings s = RaceSettings::defaults(Objective::rosenbrock);
    s.dt = 0.1;
    const auto tr = run_race(s);
    REQUIRE(tr[0].samples.size() == 11);
    REQUIRE(tr[1].samples.size() == 11);
    CHECK(tr[0].samples[0].value == tr[1].samples[0].value);
    CHECK(tr[0].samples[0].value == objective_value(Objective::rosenbrock, 0.0, 0.0));
    CHECK(tr[0].samples.back().value < tr[0].samples[0].value);
}

TEST_CASE("blow-up experiment", "[experiments]") {
    BlowupConfig cfg;
    cfg.horizon = 10.0;
    const std::vector<Family> fams{Family::node, Family::hbnode, Family::ghbnode};
    const auto traces = run_blowup(0, fams, cfg);
    REQUIRE(traces.size() == 3);
    for (const auto& tr : traces) {
        CHECK(!tr.samples.empty());
        CHECK(tr.samples.front().first == 0.0);
        CHECK(tr.accepted_steps > 0);
    }
    const auto& g = traces[2];
    CHECK(g.family == Family::ghbnode);
    CHECK(!g.blew_up);
    CHECK(g.max_bound_excess <= 1e-9);
    for (const auto& [t, n] : g.samples) CHECK(std::isfinite(n));

    const auto again = run_blowup(0, fams, cfg);
    CHECK(again[1].samples == traces[1].samples);
}

TEST_CASE("series preparation", "[experiments]") {
    TimeseriesConfig cfg;
    cfg.length = 400;
    cfg.window = 32;
    cfg.forecast = 4;
    cfg.stride = 33;
    const auto raw = gen_oscillator_series(0, cfg.length, cfg.drop_fraction);
    const auto p = prepare_series(raw, cfg);
    CHECK(p.obs_dim == 3);
    CHECK(p.time_unit == Approx(0.1));
    CHECK(!p.train.empty());
    CHECK(!p.test.empty());
    for (const auto& w : p.train) {
        CHECK(w.obs_times.size() == 32);
        CHECK(w.target_times.size() == 4);
    }
    // Training split is standardised.
    double mean = 0.0;
    std::size_t count = 0;
    for (const auto& w : p.train)
        for (std::size_t r = 0; r < w.obs_values.rows(); ++r) {
            mean += w.obs_values(r, 1);
            ++count;
        }
    CHECK(std::abs(mean / static_cast<double>(count)) < 0.5);

    cfg.window = 300;
    CHECK_THROWS_AS(prepare_series(raw, cfg), RangeError);
}

TEST_CASE("short time-series run", "[experiments]") {
    TimeseriesConfig cfg;
    cfg.length = 300;
    cfg.window = 16;
    cfg.forecast = 4;
    cfg.stride = 17;
    cfg.latent = 3;
    cfg.train.epochs = 2;
    const auto run = run_timeseries(Family::hbnode, 1, cfg);
    CHECK(!run.log.failed);
    CHECK(run.log.epochs.size() == 2);
    CHECK(std::isfinite(run.test_mse));
    CHECK(run.mean_backward_nfe > 0.0);
    CHECK(run.train_windows > 0);
}

TEST_CASE("random block matrices respect their ranges", "[experiments]") {
    Rng rng(1);
    SpectrumConfig cfg;
    cfg.max_n = 3;
    cfg.max_gamma = 0.5;
    cfg.min_span = 2.0;
    cfg.max_span = 4.0;
    for (int k = 0; k < 200; ++k) {
        const auto M = random_block_matrix(rng, cfg);
        CHECK(M.n >= 1);
        CHECK(M.n <= 3);
        CHECK(M.gamma >= 0.0);
        CHECK(M.gamma <= 0.5);
        CHECK(M.T - M.t >= 2.0);
        CHECK(M.T - M.t <= 4.0);
        for (std::size_t i = 0; i < M.n; ++i) {
            CHECK(M.J_bar(i, i) > 0.0);
            CHECK(M.J_bar(i, i) <= 1.0);
        }
    }
    cfg.min_span = 0.0;
    CHECK_THROWS_AS(random_block_matrix(rng, cfg), std::invalid_argument);
    cfg.min_span = 5.0;
    CHECK_THROWS_AS(random_block_matrix(rng, cfg), std::invalid_argument);
}

TEST_CASE("linear model helper", "[experiments]") {
    const auto s = make_linear_model(Family::hbnode, -2.0, 0.5);
    CHECK(s.gamma() == Approx(0.5));
    CHECK(!s.trains_gamma());
    CHECK_THROWS_AS(make_linear_model(Family::sonode, -2.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(make_linear_model(Family::node, -2.0, 0.0), std::invalid_argument);
}

TEST_CASE("nfe measurement", "[experiments]") {
    Rng rng(0);
    const auto m = make_point_cloud_model(Family::hbnode, rng);
    PointCloudConfig pc;
    pc.n_inner = 5;
    pc.n_outer = 5;
    const auto d = ClassificationData::from_points(sample_point_cloud(0, pc));
    const auto nfe = measure_nfe(m, d, Vec{1e-3, 1e-6});
    REQUIRE(nfe.size() == 2);
    CHECK(nfe[0].tolerance == 1e-3);
    CHECK(nfe[0].forward_nfe > 0.0);
    CHECK(nfe[1].forward_nfe >= nfe[0].forward_nfe);
    CHECK(nfe[1].backward_nfe >= nfe[0].backward_nfe);
}
