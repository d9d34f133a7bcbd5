#pragma once

#include <algorithm>
#include <array>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "hbnode/errors.hpp"
#include "hbnode/odeint.hpp"
#include "hbnode/rng.hpp"
#include "hbnode/tensor.hpp"

namespace hbnode {

// ---------------------------------------------------------------------------
// Point cloud: a disk inside an annulus.

enum class PointLabel { inner, outer };

struct LabeledPointSet {
    std::vector<std::array<double, 2>> points;
    std::vector<PointLabel> labels;

    std::size_t size() const { return points.size(); }
};

struct PointCloudConfig {
    std::size_t n_inner = 40;
    std::size_t n_outer = 80;
    double inner_radius = 0.5;
    double outer_lo = 0.85;
    double outer_hi = 1.0;
};

namespace detail {

/// Area-uniform point in the open annulus lo < r < hi (lo = 0 gives a disk).
inline std::array<double, 2> sample_annulus(Rng& rng, double lo, double hi) {
    double r = 0.0;
    do {
        const double u = rng.uniform();
        r = std::sqrt(lo * lo + u * (hi * hi - lo * lo));
    } while (!(r < hi && (lo == 0.0 || r > lo)));
    const double phi = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    return {r * std::cos(phi), r * std::sin(phi)};
}

}  // namespace detail

/// Inner points first, then outer points.
inline LabeledPointSet sample_point_cloud(std::uint64_t seed, const PointCloudConfig& cfg = {}) {
    if (!(cfg.inner_radius > 0.0 && cfg.outer_lo >= cfg.inner_radius && cfg.outer_hi > cfg.outer_lo))
        throw std::invalid_argument("sample_point_cloud: radii must satisfy 0 < inner <= lo < hi");
    Rng rng(seed);
    LabeledPointSet out;
    out.points.reserve(cfg.n_inner + cfg.n_outer);
    for (std::size_t i = 0; i < cfg.n_inner; ++i) {
        out.points.push_back(detail::sample_annulus(rng, 0.0, cfg.inner_radius));
        out.labels.push_back(PointLabel::inner);
    }
    for (std::size_t i = 0; i < cfg.n_outer; ++i) {
        out.points.push_back(detail::sample_annulus(rng, cfg.outer_lo, cfg.outer_hi));
        out.labels.push_back(PointLabel::outer);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Irregularly sampled multivariate series.

struct IrregularSeries {
    Vec times;
    Matrix values;  // time x attribute
    std::vector<std::string> attribute_names;

    std::size_t length() const { return times.size(); }
    std::size_t attributes() const { return values.cols(); }

    void validate() const {
        require_dim(values.rows() == times.size(), "IrregularSeries: row count != time count");
        require_dim(attribute_names.empty() || attribute_names.size() == values.cols(),
                    "IrregularSeries: attribute name count mismatch");
        for (std::size_t i = 1; i < times.size(); ++i)
            if (!(times[i] > times[i - 1]))
                throw ValidationError("IrregularSeries: times not strictly increasing at row " +
                                      std::to_string(i));
        if (!all_finite(values.data()) || !all_finite(times))
            throw ValidationError("IrregularSeries: non-finite entry");
    }

    /// Rows [begin, end).
    IrregularSeries slice(std::size_t begin, std::size_t end) const {
        if (begin > end || end > length()) throw RangeError("IrregularSeries::slice: bad range");
        IrregularSeries s;
        s.attribute_names = attribute_names;
        s.times.assign(times.begin() + static_cast<std::ptrdiff_t>(begin),
                       times.begin() + static_cast<std::ptrdiff_t>(end));
        const std::size_t c = values.cols();
        Vec d(values.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
              values.data().begin() + static_cast<std::ptrdiff_t>(end * c));
        s.values = Matrix(end - begin, c, std::move(d));
        return s;
    }
};

/// Forcing u(t) = amplitude sin(omega t + phase) + noise_std * w(t), with
/// w piecewise linear between standard normal knots spaced `noise_dt` apart.
struct ForcingSpec {
    double amplitude = 1.0;
    double omega = 1.0;
    double phase = 0.0;
    double noise_std = 0.1;
    double noise_dt = 0.5;
};

struct OscillatorConfig {
    double damping = 0.2;    // c
    double stiffness = 1.0;  // k
    double x0 = 1.0;
    double v0 = 0.0;
    double dt = 0.1;  // grid spacing before dropping
    ForcingSpec forcing;
    double solver_tol = 1e-10;
};

namespace detail {

struct Forcing {
    ForcingSpec spec;
    Vec knots;

    double operator()(double t) const {
        double u = spec.amplitude * std::sin(spec.omega * t + spec.phase);
        if (spec.noise_std != 0.0 && !knots.empty()) {
            const double pos = std::max(0.0, t / spec.noise_dt);
            const auto i = std::min(static_cast<std::size_t>(pos), knots.size() - 2);
            const double w = std::min(pos - static_cast<double>(i), 1.0);
            u += spec.noise_std * ((1.0 - w) * knots[i] + w * knots[i + 1]);
        }
        return u;
    }
};

}  // namespace detail

/// Simulates x'' + c x' + k x = u(t) on the uniform grid t_i = i dt,
/// records (u, x, x') and removes ceil(drop_fraction * length) interior
/// samples chosen uniformly at random.
inline IrregularSeries gen_oscillator_series(std::uint64_t seed, std::size_t length,
                                             double drop_fraction, const OscillatorConfig& cfg = {}) {
    if (!(drop_fraction >= 0.0 && drop_fraction < 1.0))
        throw std::invalid_argument("gen_oscillator_series: drop_fraction must lie in [0,1)");
    if (length < 2) throw std::invalid_argument("gen_oscillator_series: length must be >= 2");
    if (!(cfg.dt > 0.0)) throw std::invalid_argument("gen_oscillator_series: dt must be positive");
    const auto drop = static_cast<std::size_t>(
        std::ceil(drop_fraction * static_cast<double>(length) - 1e-9));
    if (drop > length - 2)
        throw std::invalid_argument("gen_oscillator_series: too many samples to drop");

    Rng rng(seed);
    Rng noise_rng = rng.split();
    Rng drop_rng = rng.split();

    detail::Forcing u{cfg.forcing, {}};
    if (cfg.forcing.noise_std != 0.0) {
        if (!(cfg.forcing.noise_dt > 0.0))
            throw std::invalid_argument("gen_oscillator_series: noise_dt must be positive");
        const double horizon = cfg.dt * static_cast<double>(length - 1);
        const auto nk = static_cast<std::size_t>(std::ceil(horizon / cfg.forcing.noise_dt)) + 2;
        u.knots.resize(nk);
        for (double& k : u.knots) k = noise_rng.normal();
    }

    Vec grid(length);
    for (std::size_t i = 0; i < length; ++i) grid[i] = cfg.dt * static_cast<double>(i);
    const double c = cfg.damping, k = cfg.stiffness;
    auto rhs = [&](double t, std::span<const double> y, std::span<double> dy) {
        dy[0] = y[1];
        dy[1] = u(t) - c * y[1] - k * y[0];
    };
    const Vec y0{cfg.x0, cfg.v0};
    const SolveResult sol = integrate(rhs, y0, grid, SolverConfig::dopri(cfg.solver_tol));

    std::vector<std::size_t> interior(length - 2);
    std::iota(interior.begin(), interior.end(), std::size_t{1});
    drop_rng.shuffle(std::span<std::size_t>(interior));
    std::vector<bool> keep(length, true);
    for (std::size_t i = 0; i < drop; ++i) keep[interior[i]] = false;

    IrregularSeries s;
    s.attribute_names = {"u", "x", "v"};
    Vec vals;
    for (std::size_t i = 0; i < length; ++i) {
        if (!keep[i]) continue;
        s.times.push_back(grid[i]);
        const Vec& st = sol.checkpoints[i].state;
        vals.push_back(u(grid[i]));
        vals.push_back(st[0]);
        vals.push_back(st[1]);
    }
    s.values = Matrix(s.times.size(), 3, std::move(vals));
    return s;
}

// ---------------------------------------------------------------------------
// CSV ingestion.

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    for (auto& c : cells) {
        const auto b = c.find_first_not_of(" \t\r");
        const auto e = c.find_last_not_of(" \t\r");
        c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
    }
    return cells;
}

inline double parse_decimal(const std::string& cell, std::size_t row) {
    if (cell.empty()) throw ParseError("empty cell", row);
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end != cell.c_str() + cell.size() || errno == ERANGE || !std::isfinite(v))
        throw ParseError("cannot parse '" + cell + "' as a finite decimal", row);
    return v;
}

}  // namespace detail

/// Reads a header-first CSV. `value_columns` empty selects every column
/// other than the time column. Rows are sorted by time. Row numbers in
/// errors count data rows from 1, header excluded.
inline IrregularSeries load_csv_series(const std::string& path, const std::string& time_column,
                                       std::vector<std::string> value_columns = {}) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv_series: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("load_csv_series: missing header row");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = detail::split_csv_line(line);

    auto column_index = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw SchemaError("load_csv_series: missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t tcol = column_index(time_column);
    if (value_columns.empty())
        for (const auto& h : header)
            if (h != time_column) value_columns.push_back(h);
    std::vector<std::size_t> vcols;
    for (const auto& c : value_columns) vcols.push_back(column_index(c));

    struct Row {
        double t;
        Vec v;
        std::size_t line;
    };
    std::vector<Row> rows;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw ParseError("expected " + std::to_string(header.size()) + " cells, got " +
                                 std::to_string(cells.size()),
                             lineno);
        Row r{detail::parse_decimal(cells[tcol], lineno), {}, lineno};
        for (std::size_t c : vcols) r.v.push_back(detail::parse_decimal(cells[c], lineno));
        rows.push_back(std::move(r));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i].t == rows[i - 1].t)
            throw ValidationError("load_csv_series: duplicate time " + std::to_string(rows[i].t) +
                                  " at row " + std::to_string(std::max(rows[i].line, rows[i - 1].line)));

    IrregularSeries s;
    s.attribute_names = value_columns;
    Vec vals;
    for (auto& r : rows) {
        s.times.push_back(r.t);
        vals.insert(vals.end(), r.v.begin(), r.v.end());
    }
    s.values = Matrix(rows.size(), vcols.size(), std::move(vals));
    return s;
}

// ---------------------------------------------------------------------------
// Windowing and chronological splits.

/// Inputs are rows [start, start + window_len); targets are the
/// forecast_len rows that follow.
struct SeriesWindow {
    std::size_t start = 0;
    Vec input_times;
    Matrix input_values;
    Vec target_times;
    Matrix target_values;
};

inline std::vector<SeriesWindow> window_series(const IrregularSeries& s, std::size_t window_len,
                                               std::size_t forecast_len, std::size_t stride) {
    if (window_len == 0 || stride == 0)
        throw std::invalid_argument("window_series: window_len and stride must be positive");
    if (window_len + forecast_len > s.length())
        throw RangeError("window_series: series shorter than window + forecast");
    std::vector<SeriesWindow> out;
    const std::size_t c = s.attributes();
    for (std::size_t st = 0; st + window_len + forecast_len <= s.length(); st += stride) {
        SeriesWindow w;
        w.start = st;
        const auto in = s.slice(st, st + window_len);
        const auto tg = s.slice(st + window_len, st + window_len + forecast_len);
        w.input_times = in.times;
        w.input_values = in.values;
        w.target_times = tg.times;
        w.target_values = forecast_len ? tg.values : Matrix(0, c);
        out.push_back(std::move(w));
    }
    return out;
}

struct SeriesSplit {
    IrregularSeries train, validation, test;
};

/// Chronological split: first `train_frac`, next `val_frac`, the rest.
inline SeriesSplit split_series(const IrregularSeries& s, double train_frac = 0.5,
                                double val_frac = 0.25) {
    if (!(train_frac > 0.0 && val_frac >= 0.0 && train_frac + val_frac <= 1.0))
        throw std::invalid_argument("split_series: fractions must be positive and sum to <= 1");
    const auto n = static_cast<double>(s.length());
    const auto a = static_cast<std::size_t>(std::floor(train_frac * n));
    const auto b = static_cast<std::size_t>(std::floor((train_frac + val_frac) * n));
    return {s.slice(0, a), s.slice(a, b), s.slice(b, s.length())};
}

}  // namespace hbnode
