#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "hbnode/adjoint.hpp"
#include "hbnode/errors.hpp"
#include "hbnode/linalg.hpp"
#include "hbnode/models.hpp"
#include "hbnode/odeint.hpp"
#include "hbnode/tensor.hpp"

namespace hbnode {

/// Time-averaged linearisation of the (G)HBNODE adjoint over [t, T]:
///   M = (t - T) [[0, J_bar], [F_bar, -gamma I]]
/// with F_bar the mean of df/dh - xi I and J_bar the mean of diag(sigma'(m)).
/// Exact for constant Jacobians; a diagnostic approximation otherwise.
struct BlockMatrixM {
    std::size_t n = 0;
    Matrix F_bar;
    Matrix J_bar;
    double gamma = 0.0;
    double t = 0.0;
    double T = 1.0;

    /// [[0, J_bar], [F_bar, -gamma I]]
    Matrix unscaled() const {
        require_dim(F_bar.rows() == n && F_bar.cols() == n && J_bar.rows() == n && J_bar.cols() == n,
                    "BlockMatrixM: block extents must be n x n");
        Matrix B(2 * n, 2 * n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                B(i, n + j) = J_bar(i, j);
                B(n + i, j) = F_bar(i, j);
            }
            B(n + i, n + i) = -gamma;
        }
        return B;
    }

    Matrix assembled() const { return unscaled() * (t - T); }
};

namespace detail {

/// State at time s by linear interpolation between bracketing checkpoints.
inline Vec interpolate_checkpoints(const std::vector<Checkpoint>& cps, double s) {
    const bool increasing = cps.back().time >= cps.front().time;
    for (std::size_t k = 0; k + 1 < cps.size(); ++k) {
        double a = cps[k].time, b = cps[k + 1].time;
        if (!increasing) std::swap(a, b);
        if (s >= a && s <= b) {
            const auto& lo = increasing ? cps[k] : cps[k + 1];
            const auto& hi = increasing ? cps[k + 1] : cps[k];
            const double w = (b == a) ? 0.0 : (s - lo.time) / (hi.time - lo.time);
            Vec out(lo.state.size());
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] = (1.0 - w) * lo.state[i] + w * hi.state[i];
            return out;
        }
    }
    throw RangeError("interpolate: time outside trajectory");
}

}  // namespace detail

/// Trapezoidal averages of the Jacobian blocks over `quad_points` uniform
/// nodes in [t, T], with states linearly interpolated between checkpoints.
inline BlockMatrixM build_M(const ModelSpec& spec, const std::vector<Checkpoint>& trajectory,
                            double t, double T, std::size_t quad_points = 33) {
    if (spec.family != Family::hbnode && spec.family != Family::ghbnode)
        throw std::invalid_argument("build_M: hbnode or ghbnode family required");
    spec.validate();
    if (quad_points < 2) throw std::invalid_argument("build_M: need at least two quadrature nodes");
    if (!(t < T)) throw std::invalid_argument("build_M: need t < T");
    require_dim(trajectory.size() >= 2, "build_M: trajectory needs at least two checkpoints");
    const double lo = std::min(trajectory.front().time, trajectory.back().time);
    const double hi = std::max(trajectory.front().time, trajectory.back().time);
    const double slack = 1e-12 * std::max(1.0, std::abs(hi) + std::abs(lo));
    if (t < lo - slack || T > hi + slack)
        throw RangeError("build_M: span [t, T] not covered by the trajectory");

    const std::size_t n = spec.position_dim();
    BlockMatrixM M;
    M.n = n;
    M.gamma = spec.gamma();
    M.t = t;
    M.T = T;
    M.F_bar = Matrix(n, n);
    M.J_bar = Matrix(n, n);
    const double xi = spec.uses_xi() ? spec.xi() : 0.0;
    const Activation sigma = spec.family == Family::ghbnode ? spec.sigma : Activation::identity();

    RhsWorkspace ws;
    const double dt = (T - t) / static_cast<double>(quad_points - 1);
    for (std::size_t q = 0; q < quad_points; ++q) {
        const double s = std::clamp(t + dt * static_cast<double>(q), lo, hi);
        const double w = (q == 0 || q + 1 == quad_points) ? 0.5 : 1.0;
        const Vec z = detail::interpolate_checkpoints(trajectory, s);
        require_dim(z.size() == spec.state_dim(), "build_M: checkpoint state extent mismatch");
        detail::assemble_f_input(spec, s, z, ws);
        const Matrix jac = spec.f_net.jacobian_wrt_input(ws.f_in, s);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) M.F_bar(i, j) += w * jac(i, j);
            M.F_bar(i, i) -= w * xi;
            M.J_bar(i, i) += w * sigma.derivative(z[n + i]);
        }
    }
    const double norm = 1.0 / static_cast<double>(quad_points - 1);
    M.F_bar *= norm;
    M.J_bar *= norm;
    return M;
}

struct PairingReport {
    std::vector<std::complex<double>> eigenvalues;  // of -M
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    double target_sum = 0.0;  // (t - T) gamma
    double max_residual = 0.0;
    /// Eigenvalues with real part >= (t - T) a.
    std::size_t count_above = 0;
    double threshold = 0.0;
};

/// Eigenvalues of -M paired greedily by closest sum to (t - T) gamma.
/// `a` defaults to gamma / 2 and must satisfy a >= gamma / 2.
inline PairingReport verify_pairing(const BlockMatrixM& M, std::optional<double> a = std::nullopt) {
    const Matrix A = M.assembled() * -1.0;
    if (A.rows() % 2 != 0) throw StructuralError("verify_pairing: odd dimension");
    const double a_val = a.value_or(M.gamma / 2.0);
    if (a_val < M.gamma / 2.0) throw std::invalid_argument("verify_pairing: need a >= gamma / 2");

    PairingReport rep;
    rep.eigenvalues = eigenvalues(A);
    rep.target_sum = (M.t - M.T) * M.gamma;
    rep.threshold = (M.t - M.T) * a_val;

    const std::size_t N = rep.eigenvalues.size();
    std::vector<bool> used(N, false);
    for (std::size_t i = 0; i < N; ++i) {
        if (used[i]) continue;
        used[i] = true;
        std::size_t best = N;
        double best_res = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < N; ++j) {
            if (used[j]) continue;
            const double res = std::abs(rep.eigenvalues[i] + rep.eigenvalues[j] - rep.target_sum);
            if (res < best_res) {
                best_res = res;
                best = j;
            }
        }
        if (best == N) throw StructuralError("verify_pairing: unmatched eigenvalue");
        used[best] = true;
        rep.pairs.emplace_back(i, best);
        rep.max_residual = std::max(rep.max_residual, best_res);
    }

    // Conjugate pairs sit exactly on the threshold when a = gamma / 2.
    double scale = 1.0;
    for (const auto& ev : rep.eigenvalues) scale = std::max(scale, std::abs(ev));
    const double tol = 1e-9 * scale;
    for (const auto& ev : rep.eigenvalues)
        if (ev.real() >= rep.threshold - tol) ++rep.count_above;
    return rep;
}

/// ||a(t)||_2 of the stacked adjoint at each requested gap T - t, from a
/// forward solve of z0 over [0, T] and a backward pass seeded with dL/dz(T).
/// Gaps must be strictly increasing and lie in (0, T].
inline std::vector<std::pair<double, double>> adjoint_norm_trace(const ModelSpec& spec,
                                                                 std::span<const double> z0,
                                                                 double T,
                                                                 std::span<const double> gaps,
                                                                 std::span<const double> dLdzT,
                                                                 const SolverConfig& cfg) {
    require_dim(!gaps.empty(), "adjoint_norm_trace: no sample gaps");
    const std::array<double, 2> fwd_times{0.0, T};
    const SolveResult fwd = solve_forward(spec, z0, fwd_times, cfg);

    Vec times{T};
    for (double g : gaps) {
        if (!(g > 0.0 && g <= T)) throw RangeError("adjoint_norm_trace: gap outside (0, T]");
        times.push_back(T - g);
    }
    BackwardOptions opts;
    opts.with_params = false;
    const SolveResult sr = solve_adjoint_system(spec, fwd.final_state(), dLdzT, times, cfg, opts);
    const std::size_t d = spec.state_dim();
    std::vector<std::pair<double, double>> out;
    for (std::size_t k = 1; k < sr.checkpoints.size(); ++k) {
        const auto a = std::span<const double>(sr.checkpoints[k].state).subspan(d, d);
        out.emplace_back(gaps[k - 1], norm2(a));
    }
    return out;
}

}  // namespace hbnode
