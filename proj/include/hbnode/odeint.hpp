#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "hbnode/errors.hpp"
#include "hbnode/tensor.hpp"

namespace hbnode {

struct Rk4Fixed {
    double step = 0.01;
};

struct Dopri45 {
    double rtol = 1e-7;
    double atol = 1e-7;
};

struct SolverConfig {
    std::variant<Rk4Fixed, Dopri45> method = Dopri45{};
    std::size_t max_steps = 100000;
    double safety = 0.9;
    double min_scale = 0.2;
    double max_scale = 10.0;
    /// Overrides the default first step |t1 - t0| / 100.
    std::optional<double> initial_step;

    static SolverConfig dopri(double rtol, double atol) {
        SolverConfig c;
        c.method = Dopri45{rtol, atol};
        return c;
    }
    static SolverConfig dopri(double tol) { return dopri(tol, tol); }
    static SolverConfig rk4(double step) {
        SolverConfig c;
        c.method = Rk4Fixed{step};
        return c;
    }

    void validate() const {
        if (const auto* d = std::get_if<Dopri45>(&method)) {
            if (!(d->rtol > 0.0) || !(d->atol > 0.0))
                throw std::invalid_argument("SolverConfig: rtol and atol must be positive");
        } else if (!(std::get<Rk4Fixed>(method).step > 0.0)) {
            throw std::invalid_argument("SolverConfig: rk4 step must be positive");
        }
        if (max_steps < 1) throw std::invalid_argument("SolverConfig: max_steps must be >= 1");
        if (!(safety > 0.0 && safety < 1.0))
            throw std::invalid_argument("SolverConfig: safety must lie in (0,1)");
        if (!(min_scale > 0.0 && min_scale < 1.0 && max_scale > 1.0))
            throw std::invalid_argument("SolverConfig: need 0 < min_scale < 1 < max_scale");
    }
};

struct Checkpoint {
    double time = 0.0;
    Vec state;
};

struct SolveResult {
    std::vector<Checkpoint> checkpoints;
    std::size_t nfe = 0;
    std::size_t accepted_steps = 0;
    std::size_t rejected_steps = 0;

    const Vec& final_state() const { return checkpoints.back().state; }
    double final_time() const { return checkpoints.back().time; }
};

class StepLimitError : public std::runtime_error {
public:
    StepLimitError(const std::string& what, SolveResult partial)
        : std::runtime_error(what), partial_(std::move(partial)) {}
    const SolveResult& partial() const noexcept { return partial_; }

private:
    SolveResult partial_;
};

class BlowUpError : public std::runtime_error {
public:
    BlowUpError(const std::string& what, double last_finite_time, SolveResult partial)
        : std::runtime_error(what), last_finite_time_(last_finite_time),
          partial_(std::move(partial)) {}
    double last_finite_time() const noexcept { return last_finite_time_; }
    const SolveResult& partial() const noexcept { return partial_; }

private:
    double last_finite_time_;
    SolveResult partial_;
};

/// Called after every accepted step with the new time and state. It may
/// rewrite the state in place; returning true signals that it did, which
/// discards the FSAL stage (one extra RHS call on the next step).
using AcceptHook = std::function<bool(double, std::span<double>)>;

namespace dopri {
// Dormand & Prince (1980) 5(4) tableau.
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b(5th) - b(4th)
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
}  // namespace dopri

/// Scratch space for one Dormand-Prince step.
struct DopriStage {
    Vec k2, k3, k4, k5, k6, tmp;
    void resize(std::size_t n) {
        for (Vec* v : {&k2, &k3, &k4, &k5, &k6, &tmp}) v->resize(n);
    }
};

struct DopriStepResult {
    Vec y5;
    Vec err;
    Vec k_last;
};

/// One Dormand-Prince step from (t, y) with step h. `k1` is f(t, y)
/// (the FSAL stage of the previous step). Always performs 6 RHS calls;
/// writes the 5th-order solution, the embedded error estimate and the
/// last stage f(t+h, y5).
template <class Rhs>
void dopri_step_into(Rhs& rhs, double t, std::span<const double> y, double h,
                     std::span<const double> k1, std::span<double> y5, std::span<double> err,
                     std::span<double> k7, DopriStage& st) {
    using namespace dopri;
    const std::size_t n = y.size();
    st.resize(n);
    auto& tmp = st.tmp;
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * a21 * k1[i];
    rhs(t + c2 * h, std::span<const double>(tmp), std::span<double>(st.k2));
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (a31 * k1[i] + a32 * st.k2[i]);
    rhs(t + c3 * h, std::span<const double>(tmp), std::span<double>(st.k3));
    for (std::size_t i = 0; i < n; ++i)
        tmp[i] = y[i] + h * (a41 * k1[i] + a42 * st.k2[i] + a43 * st.k3[i]);
    rhs(t + c4 * h, std::span<const double>(tmp), std::span<double>(st.k4));
    for (std::size_t i = 0; i < n; ++i)
        tmp[i] = y[i] + h * (a51 * k1[i] + a52 * st.k2[i] + a53 * st.k3[i] + a54 * st.k4[i]);
    rhs(t + c5 * h, std::span<const double>(tmp), std::span<double>(st.k5));
    for (std::size_t i = 0; i < n; ++i)
        tmp[i] = y[i] + h * (a61 * k1[i] + a62 * st.k2[i] + a63 * st.k3[i] + a64 * st.k4[i] +
                             a65 * st.k5[i]);
    rhs(t + h, std::span<const double>(tmp), std::span<double>(st.k6));
    for (std::size_t i = 0; i < n; ++i)
        y5[i] = y[i] + h * (b1 * k1[i] + b3 * st.k3[i] + b4 * st.k4[i] + b5 * st.k5[i] +
                            b6 * st.k6[i]);
    rhs(t + h, std::span<const double>(y5), k7);
    for (std::size_t i = 0; i < n; ++i)
        err[i] = h * (e1 * k1[i] + e3 * st.k3[i] + e4 * st.k4[i] + e5 * st.k5[i] +
                      e6 * st.k6[i] + e7 * k7[i]);
}

/// Value-returning form. When `k1_cached` is absent, f(t, y) is evaluated first.
template <class Rhs>
DopriStepResult step_dopri45(Rhs&& rhs, double t, std::span<const double> y, double h,
                             std::optional<std::span<const double>> k1_cached = std::nullopt) {
    require_dim(h != 0.0, "step_dopri45: zero step");
    const std::size_t n = y.size();
    Vec k1;
    if (k1_cached) {
        require_dim(k1_cached->size() == n, "step_dopri45: cached stage extent mismatch");
        k1.assign(k1_cached->begin(), k1_cached->end());
    } else {
        k1.resize(n);
        rhs(t, y, std::span<double>(k1));
    }
    DopriStepResult r{Vec(n), Vec(n), Vec(n)};
    DopriStage st;
    dopri_step_into(rhs, t, y, h, k1, r.y5, r.err, r.k_last, st);
    return r;
}

/// sqrt(mean((err_i / (atol + rtol * max(|y_i|, |y5_i|)))^2))
inline double mixed_error_norm(std::span<const double> err, std::span<const double> y,
                               std::span<const double> y5, double rtol, double atol) {
    if (err.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < err.size(); ++i) {
        const double sc = atol + rtol * std::max(std::abs(y[i]), std::abs(y5[i]));
        const double r = err[i] / sc;
        s += r * r;
    }
    return std::sqrt(s / static_cast<double>(err.size()));
}

namespace detail {

inline void check_times(std::span<const double> times) {
    if (times.size() < 2) throw std::invalid_argument("integrate: need at least two times");
    const double dir = times[1] > times[0] ? 1.0 : -1.0;
    for (std::size_t i = 1; i < times.size(); ++i) {
        const double d = (times[i] - times[i - 1]) * dir;
        if (!(d > 0.0))
            throw std::invalid_argument("integrate: times must be strictly monotone");
    }
}

}  // namespace detail

/// Integrates dy/dt = rhs(t, y) through the requested `times` (strictly
/// increasing or strictly decreasing) and returns the state at each of
/// them. `rhs(t, y, dydt)` writes into `dydt`.
///
/// Steps are truncated to land exactly on every requested time. For
/// Dormand-Prince the step controller is
///     h' = h * clamp(safety * err^(-1/5), min_scale, max_scale)
/// and nfe == 1 + 6 * (accepted + rejected) unless an AcceptHook rewrites
/// the state. For RK4, nfe == 4 * steps.
template <class Rhs>
SolveResult integrate(Rhs&& rhs, std::span<const double> y0, std::span<const double> times,
                      const SolverConfig& cfg, const AcceptHook& on_accept = {}) {
    cfg.validate();
    detail::check_times(times);
    if (!all_finite(y0)) throw std::invalid_argument("integrate: non-finite initial state");

    const std::size_t n = y0.size();
    const double dir = times[1] > times[0] ? 1.0 : -1.0;
    const double span_len = std::abs(times.back() - times.front());

    SolveResult res;
    res.checkpoints.reserve(times.size());
    res.checkpoints.push_back({times[0], Vec(y0.begin(), y0.end())});

    Vec y(y0.begin(), y0.end());
    double t = times[0];
    auto counted = [&](double tt, std::span<const double> yy, std::span<double> out) {
        ++res.nfe;
        rhs(tt, yy, out);
    };

    auto blow_up = [&](double last_t) {
        throw BlowUpError("integrate: non-finite state after t = " + std::to_string(last_t),
                          last_t, res);
    };

    if (const auto* rk = std::get_if<Rk4Fixed>(&cfg.method)) {
        Vec k1(n), k2(n), k3(n), k4(n), tmp(n);
        std::size_t steps = 0;
        for (std::size_t ti = 1; ti < times.size(); ++ti) {
            const double target = times[ti];
            while (dir * (target - t) > 0.0) {
                if (steps >= cfg.max_steps)
                    throw StepLimitError("integrate: rk4 step limit exceeded", res);
                double h = dir * rk->step;
                bool last = false;
                if (dir * (t + h - target) >= -1e-12 * std::max(1.0, std::abs(target))) {
                    h = target - t;
                    last = true;
                }
                counted(t, y, k1);
                for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
                counted(t + 0.5 * h, tmp, k2);
                for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
                counted(t + 0.5 * h, tmp, k3);
                for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
                counted(t + h, tmp, k4);
                for (std::size_t i = 0; i < n; ++i)
                    tmp[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                if (!all_finite(tmp)) blow_up(t);
                y.swap(tmp);
                t = last ? target : t + h;
                ++steps;
                ++res.accepted_steps;
                if (on_accept) on_accept(t, y);
            }
            res.checkpoints.push_back({target, y});
        }
        return res;
    }

    const auto& dp = std::get<Dopri45>(cfg.method);
    Vec k1(n), k7(n), y5(n), err(n);
    DopriStage st;
    counted(t, y, k1);

    double h = cfg.initial_step ? dir * std::abs(*cfg.initial_step)
                                : (times[1] - times[0]) / 100.0;
    std::size_t attempts = 0;
    for (std::size_t ti = 1; ti < times.size(); ++ti) {
        const double target = times[ti];
        while (dir * (target - t) > 0.0) {
            if (attempts >= cfg.max_steps)
                throw StepLimitError("integrate: dopri45 step limit exceeded", res);
            double step = h;
            bool last = false;
            if (dir * (t + step - target) >= -1e-12 * std::max(1.0, std::abs(target))) {
                step = target - t;
                last = true;
            }
            dopri_step_into(counted, t, y, step, k1, y5, err, k7, st);
            ++attempts;
            const double en = mixed_error_norm(err, y, y5, dp.rtol, dp.atol);
            if (!std::isfinite(en)) {
                ++res.rejected_steps;
                if (std::abs(step) <= 1e-10 * std::max(span_len, 1e-300)) blow_up(t);
                h = step * cfg.min_scale;
                continue;
            }
            const double scale =
                en == 0.0 ? cfg.max_scale
                          : std::clamp(cfg.safety * std::pow(en, -0.2), cfg.min_scale,
                                       cfg.max_scale);
            if (en <= 1.0) {
                ++res.accepted_steps;
                t = last ? target : t + step;
                y.swap(y5);
                k1.swap(k7);
                // A truncated landing step does not shrink the proposal.
                h = last ? dir * std::max(std::abs(h), std::abs(step * scale)) : step * scale;
                if (on_accept && on_accept(t, y)) counted(t, y, k1);
            } else {
                ++res.rejected_steps;
                h = step * scale;
            }
        }
        res.checkpoints.push_back({target, y});
    }
    return res;
}

/// Convenience overload for std::vector time grids and initializer lists.
template <class Rhs>
SolveResult integrate(Rhs&& rhs, const Vec& y0, const Vec& times, const SolverConfig& cfg,
                      const AcceptHook& on_accept = {}) {
    return integrate(std::forward<Rhs>(rhs), std::span<const double>(y0),
                     std::span<const double>(times), cfg, on_accept);
}

}  // namespace hbnode
