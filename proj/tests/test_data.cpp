#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "hbnode/hbnode.hpp"

using namespace hbnode;
using Catch::Approx;

namespace {

std::string write_temp(const std::string& name, const std::string& body) {
    const auto dir = std::filesystem::temp_directory_path() / "hbnode_test_data";
    std::filesystem::create_directories(dir);
    const auto p = dir / name;
    std::ofstream(p) << body;
    return p.string();
}

double radius(const std::array<double, 2>& p) { return std::hypot(p[0], p[1]); }

}  // namespace

TEST_CASE("point cloud sizes and radii", "[data][points]") {
    const auto set = sample_point_cloud(0);
    REQUIRE(set.size() == 120);
    std::size_t inner = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const double r = radius(set.points[i]);
        if (set.labels[i] == PointLabel::inner) {
            ++inner;
            CHECK(r <= 0.5);
        } else {
            CHECK(r >= 0.85);
            CHECK(r <= 1.0);
        }
    }
    CHECK(inner == 40);
}

TEST_CASE("point cloud is uniform in area", "[data][points]") {
    PointCloudConfig cfg;
    cfg.n_inner = 100000;
    cfg.n_outer = 100000;
    const auto set = sample_point_cloud(11, cfg);
    double in2 = 0.0, out2 = 0.0, mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const double r2 = set.points[i][0] * set.points[i][0] + set.points[i][1] * set.points[i][1];
        (set.labels[i] == PointLabel::inner ? in2 : out2) += r2;
        mx += set.points[i][0];
        my += set.points[i][1];
    }
    CHECK(in2 / 1e5 == Approx(0.125).epsilon(0.01));
    CHECK(out2 / 1e5 == Approx((0.85 * 0.85 + 1.0) / 2.0).epsilon(0.01));
    CHECK(std::abs(mx / 2e5) < 0.01);
    CHECK(std::abs(my / 2e5) < 0.01);
}

TEST_CASE("point cloud determinism and validation", "[data][points]") {
    const auto a = sample_point_cloud(5), b = sample_point_cloud(5), c = sample_point_cloud(6);
    CHECK(a.points == b.points);
    CHECK(a.points != c.points);
    PointCloudConfig bad;
    bad.outer_lo = 0.3;
    CHECK_THROWS_AS(sample_point_cloud(0, bad), std::invalid_argument);
}

TEST_CASE("oscillator grid and dropping", "[data][oscillator]") {
    const auto full = gen_oscillator_series(1, 50, 0.0);
    REQUIRE(full.length() == 50);
    CHECK(full.attributes() == 3);
    CHECK(full.attribute_names == std::vector<std::string>{"u", "x", "v"});
    for (std::size_t i = 0; i < 50; ++i) CHECK(full.times[i] == Approx(0.1 * static_cast<double>(i)));

    const auto dropped = gen_oscillator_series(1, 1000, 0.1);
    CHECK(dropped.length() == 900);
    CHECK(dropped.times.front() == 0.0);
    CHECK(dropped.times.back() == Approx(99.9));
    CHECK_NOTHROW(dropped.validate());

    const auto odd = gen_oscillator_series(2, 7, 0.3);
    CHECK(odd.length() == 4);

    CHECK_THROWS_AS(gen_oscillator_series(1, 10, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(gen_oscillator_series(1, 1, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(gen_oscillator_series(1, 3, 0.9), std::invalid_argument);
}

TEST_CASE("unforced oscillator matches the closed form", "[data][oscillator]") {
    OscillatorConfig cfg;
    cfg.forcing.amplitude = 0.0;
    cfg.forcing.noise_std = 0.0;
    const auto s = gen_oscillator_series(3, 300, 0.2, cfg);
    const double w = std::sqrt(1.0 - 0.01);
    for (std::size_t i = 0; i < s.length(); ++i) {
        const double t = s.times[i];
        const double e = std::exp(-0.1 * t);
        CHECK(s.values(i, 0) == 0.0);
        CHECK(std::abs(s.values(i, 1) - e * (std::cos(w * t) + 0.1 / w * std::sin(w * t))) <= 1e-6);
        CHECK(std::abs(s.values(i, 2) + e * std::sin(w * t) / w) <= 1e-6);
    }
}

TEST_CASE("oscillator forcing", "[data][oscillator]") {
    OscillatorConfig cfg;
    cfg.forcing.noise_std = 0.0;
    cfg.forcing.omega = 2.0;
    cfg.forcing.phase = 0.3;
    const auto s = gen_oscillator_series(4, 40, 0.0, cfg);
    for (std::size_t i = 0; i < s.length(); ++i)
        CHECK(s.values(i, 0) == Approx(std::sin(2.0 * s.times[i] + 0.3)).margin(1e-15));

    const auto noisy = gen_oscillator_series(4, 40, 0.0);
    double diff = 0.0;
    for (std::size_t i = 0; i < noisy.length(); ++i)
        diff = std::max(diff, std::abs(noisy.values(i, 0) - std::sin(noisy.times[i])));
    CHECK(diff > 0.0);
    CHECK(diff < 1.0);

    const auto again = gen_oscillator_series(4, 40, 0.0);
    CHECK(again.values.data() == noisy.values.data());
}

TEST_CASE("csv loading", "[data][csv]") {
    SECTION("two rows") {
        const auto p = write_temp("two.csv", "t,a,b\n0,1.5,2\n1,3,4e-1\n");
        const auto s = load_csv_series(p, "t");
        REQUIRE(s.length() == 2);
        CHECK(s.attribute_names == std::vector<std::string>{"a", "b"});
        CHECK(s.times == Vec{0.0, 1.0});
        CHECK(s.values(0, 0) == 1.5);
        CHECK(s.values(1, 1) == 0.4);
    }
    SECTION("column selection and sorting") {
        const auto p = write_temp("sort.csv", "a,time,b\n9,2.5,1\n8,0.5,2\n\n7,1,3\n");
        const auto s = load_csv_series(p, "time", {"b"});
        CHECK(s.times == Vec{0.5, 1.0, 2.5});
        CHECK(s.values.data() == Vec{2.0, 3.0, 1.0});
        CHECK(s.attribute_names == std::vector<std::string>{"b"});
    }
    SECTION("duplicate time") {
        const auto p = write_temp("dup.csv", "t,x\n0,1\n1,2\n1,3\n");
        CHECK_THROWS_AS(load_csv_series(p, "t"), ValidationError);
    }
    SECTION("missing column") {
        const auto p = write_temp("miss.csv", "t,x\n0,1\n");
        CHECK_THROWS_AS(load_csv_series(p, "time"), SchemaError);
        CHECK_THROWS_AS(load_csv_series(p, "t", {"y"}), SchemaError);
    }
    SECTION("empty file") {
        const auto p = write_temp("empty.csv", "");
        CHECK_THROWS_AS(load_csv_series(p, "t"), SchemaError);
    }
    SECTION("bad cell reports its row") {
        const auto p = write_temp("bad.csv", "t,x\n0,1\n1,2\n2,abc\n");
        try {
            (void)load_csv_series(p, "t");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.row() == 3);
        }
        const auto q = write_temp("ragged.csv", "t,x\n0,1,2\n");
        CHECK_THROWS_AS(load_csv_series(q, "t"), ParseError);
    }
    SECTION("missing file") {
        CHECK_THROWS_AS(load_csv_series("/nonexistent/series.csv", "t"), std::runtime_error);
    }
}

TEST_CASE("series validation and slicing", "[data]") {
    IrregularSeries s;
    s.times = {0.0, 1.0, 1.0};
    s.values = Matrix(3, 1);
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s.times = {0.0, 1.0, 2.0};
    CHECK_NOTHROW(s.validate());
    s.values(1, 0) = NAN;
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s.values = Matrix(2, 1);
    CHECK_THROWS_AS(s.validate(), DimensionError);

    const auto full = gen_oscillator_series(0, 10, 0.0);
    const auto mid = full.slice(2, 5);
    CHECK(mid.length() == 3);
    CHECK(mid.times.front() == full.times[2]);
    CHECK(mid.values(2, 1) == full.values(4, 1));
    CHECK_THROWS_AS(full.slice(5, 2), RangeError);
    CHECK_THROWS_AS(full.slice(0, 11), RangeError);
}

TEST_CASE("windowing", "[data][window]") {
    const auto s = gen_oscillator_series(0, 130, 0.0);
    const auto w = window_series(s, 64, 8, 65);
    REQUIRE(w.size() == 1);
    CHECK(w[0].start == 0);
    CHECK(w[0].input_times.size() == 64);
    CHECK(w[0].input_times.front() == s.times[0]);
    CHECK(w[0].input_times.back() == s.times[63]);
    CHECK(w[0].target_times.size() == 8);
    CHECK(w[0].target_times.front() == s.times[64]);
    CHECK(w[0].target_values.rows() == 8);
    CHECK(w[0].target_values(0, 1) == s.values(64, 1));

    const auto zero = window_series(s, 64, 0, 64);
    REQUIRE(zero.size() == 2);
    CHECK(zero[1].start == 64);
    CHECK(zero[1].target_times.empty());
    CHECK(zero[1].target_values.rows() == 0);
    CHECK(zero[1].target_values.cols() == 3);

    const auto ten = gen_oscillator_series(0, 10, 0.0);
    const auto dense = window_series(ten, 4, 1, 1);
    CHECK(dense.size() == 6);
    CHECK(dense.back().start == 5);

    CHECK_THROWS_AS(window_series(ten, 8, 3, 1), RangeError);
    CHECK_THROWS_AS(window_series(ten, 0, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(window_series(ten, 4, 1, 0), std::invalid_argument);
}

TEST_CASE("chronological split", "[data][window]") {
    const auto s = gen_oscillator_series(0, 100, 0.0);
    const auto sp = split_series(s);
    CHECK(sp.train.length() == 50);
    CHECK(sp.validation.length() == 25);
    CHECK(sp.test.length() == 25);
    CHECK(sp.train.times.back() < sp.validation.times.front());
    CHECK(sp.validation.times.back() < sp.test.times.front());
    const auto odd = split_series(gen_oscillator_series(0, 7, 0.0));
    CHECK(odd.train.length() + odd.validation.length() + odd.test.length() == 7);
    CHECK_THROWS_AS(split_series(s, 0.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(split_series(s, 0.8, 0.5), std::invalid_argument);
}
