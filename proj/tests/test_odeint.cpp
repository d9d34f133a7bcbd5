#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "hbnode/hbnode.hpp"

using namespace hbnode;
using Catch::Approx;

namespace {

struct Decay {
    std::size_t calls = 0;
    void operator()(double, std::span<const double> y, std::span<double> dy) {
        ++calls;
        for (std::size_t i = 0; i < y.size(); ++i) dy[i] = -y[i];
    }
};

void rotation(double, std::span<const double> y, std::span<double> dy) {
    dy[0] = y[1];
    dy[1] = -y[0];
}

}  // namespace

TEST_CASE("constant solution", "[odeint]") {
    auto zero = [](double, std::span<const double>, std::span<double> dy) {
        std::fill(dy.begin(), dy.end(), 0.0);
    };
    const auto r = integrate(zero, Vec{1.0, 2.0}, Vec{0.0, 1.0}, SolverConfig::dopri(1e-6));
    CHECK(r.final_state() == Vec{1.0, 2.0});
    CHECK(r.nfe > 0);
    CHECK(r.nfe < 100);
}

TEST_CASE("exponential decay", "[odeint]") {
    Decay f;
    const auto r = integrate(f, Vec{1.0}, Vec{0.0, 1.0}, SolverConfig::dopri(1e-8));
    CHECK(std::abs(r.final_state()[0] - 0.36787944117) <= 1e-6);
    CHECK(std::abs(r.final_state()[0] - std::exp(-1.0)) <= 1e-7);
}

TEST_CASE("global error scales with tolerance", "[odeint]") {
    for (int k = 3; k <= 9; ++k) {
        const double tol = std::pow(10.0, -k);
        Decay f;
        const auto r = integrate(f, Vec{1.0}, Vec{0.0, 1.0}, SolverConfig::dopri(tol));
        INFO("rtol " << tol);
        CHECK(std::abs(r.final_state()[0] - std::exp(-1.0)) <= 10.0 * tol);
    }
}

TEST_CASE("harmonic oscillator returns after one period", "[odeint]") {
    const auto r = integrate(rotation, Vec{1.0, 0.0}, Vec{0.0, 2.0 * std::numbers::pi},
                             SolverConfig::dopri(1e-8));
    const auto& y = r.final_state();
    CHECK(y[0] == Approx(1.0).margin(1e-6));
    CHECK(y[1] == Approx(0.0).margin(1e-6));
    CHECK(std::abs(y[0] * y[0] + y[1] * y[1] - 1.0) <= 1e-5);
}

TEST_CASE("checkpoints land on requested times", "[odeint]") {
    const Vec times{0.0, 0.1, 0.35, 0.351, 1.7, 3.0};
    Decay f;
    const auto r = integrate(f, Vec{2.0}, times, SolverConfig::dopri(1e-9));
    REQUIRE(r.checkpoints.size() == times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
        CHECK(r.checkpoints[i].time == times[i]);
        CHECK(r.checkpoints[i].state[0] == Approx(2.0 * std::exp(-times[i])).epsilon(1e-8));
    }
}

TEST_CASE("decreasing times integrate backward", "[odeint]") {
    Decay f;
    const auto r = integrate(f, Vec{std::exp(-1.0)}, Vec{1.0, 0.5, 0.0}, SolverConfig::dopri(1e-10));
    CHECK(r.checkpoints[1].time == 0.5);
    CHECK(r.final_time() == 0.0);
    CHECK(r.final_state()[0] == Approx(1.0).epsilon(1e-9));
}

TEST_CASE("dopri nfe accounting identity", "[odeint]") {
    for (double tol : {1e-3, 1e-6, 1e-9}) {
        Decay f;
        const auto r = integrate(f, Vec{1.0, -3.0}, Vec{0.0, 0.2, 5.0}, SolverConfig::dopri(tol));
        CHECK(r.nfe == f.calls);
        CHECK(r.nfe == 1 + 6 * (r.accepted_steps + r.rejected_steps));
    }
    // A stiff-ish start forces rejections.
    auto stiff = [](double, std::span<const double> y, std::span<double> dy) { dy[0] = -50.0 * y[0]; };
    SolverConfig cfg = SolverConfig::dopri(1e-8);
    cfg.initial_step = 1.0;
    const auto r = integrate(stiff, Vec{1.0}, Vec{0.0, 1.0}, cfg);
    CHECK(r.rejected_steps > 0);
    CHECK(r.nfe == 1 + 6 * (r.accepted_steps + r.rejected_steps));
}

TEST_CASE("rk4 fixed step", "[odeint]") {
    Decay f;
    const auto r = integrate(f, Vec{1.0}, Vec{0.0, 0.5, 1.0}, SolverConfig::rk4(0.01));
    CHECK(r.nfe == 4 * r.accepted_steps);
    CHECK(r.nfe == f.calls);
    CHECK(r.accepted_steps == 100);
    CHECK(r.final_state()[0] == Approx(std::exp(-1.0)).epsilon(1e-9));
    // Step truncated at a checkpoint that is not a multiple of the step.
    Decay g;
    const auto s = integrate(g, Vec{1.0}, Vec{0.0, 0.025}, SolverConfig::rk4(0.01));
    CHECK(s.accepted_steps == 3);
    CHECK(s.final_time() == 0.025);
}

TEST_CASE("step_dopri45 single steps", "[odeint]") {
    SECTION("zero field") {
        auto zero = [](double, std::span<const double>, std::span<double> dy) {
            std::fill(dy.begin(), dy.end(), 0.0);
        };
        const Vec y{1.0, -2.0};
        const auto r = step_dopri45(zero, 0.0, y, 0.3);
        CHECK(r.y5 == y);
        CHECK(r.err == Vec{0.0, 0.0});
    }
    SECTION("constant field is exact") {
        auto one = [](double, std::span<const double>, std::span<double> dy) { dy[0] = 1.0; };
        const auto r = step_dopri45(one, 0.0, Vec{2.0}, 0.25);
        CHECK(r.y5[0] == Approx(2.25).margin(1e-15));
        CHECK(std::abs(r.err[0]) <= 1e-15);
    }
    SECTION("polynomial in t of degree four is exact") {
        auto quartic = [](double t, std::span<const double>, std::span<double> dy) { dy[0] = 5 * t * t * t * t; };
        const auto r = step_dopri45(quartic, 0.5, Vec{std::pow(0.5, 5)}, 0.5);
        CHECK(r.y5[0] == Approx(1.0).margin(1e-14));
    }
    SECTION("decay step") {
        Decay f;
        const auto r = step_dopri45(f, 0.0, Vec{1.0}, 0.1);
        CHECK(std::abs(r.y5[0] - std::exp(-0.1)) <= 1e-9);
        CHECK(r.k_last[0] == Approx(-r.y5[0]));
        CHECK(f.calls == 7);
        Decay g;
        const Vec k1{-1.0};
        (void)step_dopri45(g, 0.0, Vec{1.0}, 0.1, std::span<const double>(k1));
        CHECK(g.calls == 6);
    }
    SECTION("zero step rejected") {
        Decay f;
        CHECK_THROWS_AS(step_dopri45(f, 0.0, Vec{1.0}, 0.0), DimensionError);
    }
}

TEST_CASE("mixed error norm", "[odeint]") {
    const Vec err{1e-6, -2e-6}, y{1.0, 0.0}, y5{1.0, 1.0};
    const double n = mixed_error_norm(err, y, y5, 1e-6, 1e-6);
    CHECK(n == Approx(std::sqrt((0.25 + 1.0) / 2.0)));
}

TEST_CASE("step controller scale is clamped", "[odeint]") {
    // From a tiny initial step the proposal grows by at most max_scale.
    SolverConfig cfg = SolverConfig::dopri(1e-3);
    cfg.initial_step = 1e-6;
    std::vector<double> steps;
    double last = 0.0;
    AcceptHook hook = [&](double t, std::span<double>) {
        steps.push_back(t - last);
        last = t;
        return false;
    };
    Decay f;
    (void)integrate(f, Vec{1.0}, Vec{0.0, 1.0}, cfg, hook);
    REQUIRE(steps.size() >= 3);
    CHECK(steps[0] == Approx(1e-6));
    CHECK(steps[1] <= 10.0 * steps[0] * (1 + 1e-12));
    CHECK(steps[1] == Approx(1e-5));
}

TEST_CASE("accept hook rewrite costs one evaluation", "[odeint]") {
    Decay f;
    AcceptHook hook = [](double, std::span<double> y) {
        y[0] = std::min(y[0], 10.0);
        return true;
    };
    const auto r = integrate(f, Vec{1.0}, Vec{0.0, 1.0}, SolverConfig::dopri(1e-6), hook);
    CHECK(r.nfe == 1 + 6 * (r.accepted_steps + r.rejected_steps) + r.accepted_steps);
}

TEST_CASE("solver errors", "[odeint]") {
    SECTION("step limit carries partial result") {
        SolverConfig cfg = SolverConfig::dopri(1e-10);
        cfg.max_steps = 5;
        Decay f;
        try {
            (void)integrate(f, Vec{1.0}, Vec{0.0, 10.0}, cfg);
            FAIL("expected StepLimitError");
        } catch (const StepLimitError& e) {
            REQUIRE(!e.partial().checkpoints.empty());
            CHECK(e.partial().checkpoints.front().time == 0.0);
            CHECK(e.partial().accepted_steps + e.partial().rejected_steps == 5);
        }
    }
    SECTION("non-finite state is a blow-up") {
        auto sq = [](double, std::span<const double> y, std::span<double> dy) { dy[0] = y[0] * y[0]; };
        try {
            (void)integrate(sq, Vec{1.0}, Vec{0.0, 2.0}, SolverConfig::rk4(0.1));
            FAIL("expected BlowUpError");
        } catch (const BlowUpError& e) {
            CHECK(e.last_finite_time() > 0.5);
            CHECK(e.last_finite_time() < 2.0);
        }
        CHECK_THROWS_AS(integrate(sq, Vec{1e200}, Vec{0.0, 1.0}, SolverConfig::dopri(1e-6)), BlowUpError);
    }
    SECTION("bad inputs") {
        Decay f;
        CHECK_THROWS_AS(integrate(f, Vec{1.0}, Vec{0.0, 0.0}, SolverConfig::dopri(1e-6)), std::invalid_argument);
        CHECK_THROWS_AS(integrate(f, Vec{1.0}, Vec{0.0, 1.0, 0.5}, SolverConfig::dopri(1e-6)), std::invalid_argument);
        CHECK_THROWS_AS(integrate(f, Vec{NAN}, Vec{0.0, 1.0}, SolverConfig::dopri(1e-6)), std::invalid_argument);
        CHECK_THROWS_AS(integrate(f, Vec{1.0}, Vec{0.0, 1.0}, SolverConfig::dopri(0.0)), std::invalid_argument);
        SolverConfig bad = SolverConfig::dopri(1e-6);
        bad.safety = 1.5;
        CHECK_THROWS_AS(integrate(f, Vec{1.0}, Vec{0.0, 1.0}, bad), std::invalid_argument);
        CHECK_THROWS_AS(integrate(f, Vec{1.0}, Vec{0.0, 1.0}, SolverConfig::rk4(-1.0)), std::invalid_argument);
    }
}

TEST_CASE("integration is deterministic", "[odeint]") {
    auto run = [] {
        return integrate(rotation, Vec{0.3, -0.8}, Vec{0.0, 1.0, 7.5}, SolverConfig::dopri(1e-7));
    };
    const auto a = run(), b = run();
    CHECK(a.nfe == b.nfe);
    CHECK(a.accepted_steps == b.accepted_steps);
    CHECK(a.rejected_steps == b.rejected_steps);
    for (std::size_t i = 0; i < a.checkpoints.size(); ++i) CHECK(a.checkpoints[i].state == b.checkpoints[i].state);
}
