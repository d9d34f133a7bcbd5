#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "hbnode/errors.hpp"
#include "hbnode/models.hpp"
#include "hbnode/odeint.hpp"
#include "hbnode/tensor.hpp"

namespace hbnode {

struct AdjointDerivatives {
    Vec dz;  // forward dynamics at (t, z)
    Vec da;  // -a dF/dz
    Vec dg;  // -a dF/dtheta, laid out as ode_params()
};

struct AdjointWorkspace {
    RhsWorkspace rhs;
    Vec cot;
    Vec grad_in;
};

/// Adjoint dynamics of the five families, evaluated without materialising
/// any Jacobian: every contraction with df/dh goes through one VJP of f
/// with cotangent a_m (a for first-order families, a_v for SONODE).
///
///   node/anode: a'   = -a df/dz
///   sonode:     a_h' = -a_v df/dh,             a_v' = -a_h - a_v df/dv
///   hbnode:     a_h' = -a_m df/dh,             a_m' = -a_h + gamma a_m
///   ghbnode:    a_h' = -a_m (df/dh - xi I),    a_m' = -a_h sigma'(m) + gamma a_m
///
/// `dg` receives -a dF/dtheta (accumulated into, so zero it first) and is
/// skipped when empty.
inline void adjoint_rhs_into(const ModelSpec& spec, double t, std::span<const double> z,
                             std::span<const double> a, std::span<double> dz, std::span<double> da,
                             std::span<double> dg, AdjointWorkspace& ws) {
    const std::size_t d = spec.state_dim();
    require_dim(z.size() == d && a.size() == d && dz.size() == d && da.size() == d,
                "adjoint_rhs: state/adjoint extent does not match family layout");
    require_dim(dg.empty() || dg.size() == ode_param_count(spec),
                "adjoint_rhs: parameter accumulator extent mismatch");

    detail::assemble_f_input(spec, t, z, ws.rhs);
    const Mlp& f = spec.f_net;
    ws.grad_in.resize(f.input_dim());
    const std::size_t nf = f.param_count();
    std::span<double> dg_f = dg.empty() ? std::span<double>{} : dg.first(nf);

    if (!has_momentum(spec.family)) {
        f.vjp_accumulate(ws.rhs.f_in, t, a, ws.grad_in, dg_f, ws.rhs.mlp, -1.0);
        const Vec& y = ws.rhs.mlp.post.back();
        for (std::size_t i = 0; i < d; ++i) {
            dz[i] = y[i];
            da[i] = -ws.grad_in[i];
        }
        return;
    }

    const std::size_t n = spec.position_dim();
    const auto h = z.first(n);
    const auto m = z.subspan(n, n);
    const auto a_h = a.first(n);
    const auto a_m = a.subspan(n, n);
    f.vjp_accumulate(ws.rhs.f_in, t, a_m, ws.grad_in, dg_f, ws.rhs.mlp, -1.0);
    const Vec& fy = ws.rhs.mlp.post.back();

    switch (spec.family) {
        case Family::sonode:
            for (std::size_t i = 0; i < n; ++i) {
                dz[i] = m[i];
                dz[n + i] = fy[i];
                da[i] = -ws.grad_in[i];
                da[n + i] = -a_h[i] - ws.grad_in[n + i];
            }
            break;
        case Family::hbnode: {
            const double g = spec.gamma();
            double am_dot_m = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                dz[i] = m[i];
                dz[n + i] = -g * m[i] + fy[i];
                da[i] = -ws.grad_in[i];
                da[n + i] = -a_h[i] + g * a_m[i];
                am_dot_m += a_m[i] * m[i];
            }
            if (!dg.empty() && spec.trains_gamma()) dg[nf] += am_dot_m * spec.dgamma_dparam();
            break;
        }
        case Family::ghbnode: {
            const double g = spec.gamma();
            const double xi = spec.xi();
            double am_dot_m = 0.0;
            double am_dot_h = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                dz[i] = spec.sigma.value(m[i]);
                dz[n + i] = -g * m[i] + fy[i] - xi * h[i];
                da[i] = -ws.grad_in[i] + xi * a_m[i];
                da[n + i] = -a_h[i] * spec.sigma.derivative(m[i]) + g * a_m[i];
                am_dot_m += a_m[i] * m[i];
                am_dot_h += a_m[i] * h[i];
            }
            if (!dg.empty()) {
                std::size_t k = nf;
                if (spec.trains_gamma()) dg[k++] += am_dot_m * spec.dgamma_dparam();
                if (spec.trains_xi()) dg[k] += am_dot_h * spec.dxi_dparam();
            }
            break;
        }
        default: break;
    }
}

inline AdjointDerivatives adjoint_rhs(const ModelSpec& spec, double t, std::span<const double> z,
                                      std::span<const double> a) {
    const std::size_t d = spec.state_dim();
    AdjointDerivatives r{Vec(d), Vec(d), Vec(ode_param_count(spec), 0.0)};
    AdjointWorkspace ws;
    adjoint_rhs_into(spec, t, z, a, r.dz, r.da, r.dg, ws);
    return r;
}

/// Augmented backward system over [z, a, g] (g omitted when
/// `with_params` is false).
class AugmentedAdjointRhs {
public:
    AugmentedAdjointRhs(const ModelSpec& spec, bool with_params)
        : spec_(&spec), d_(spec.state_dim()), p_(with_params ? ode_param_count(spec) : 0) {}

    std::size_t size() const { return 2 * d_ + p_; }
    std::size_t state_dim() const { return d_; }

    void operator()(double t, std::span<const double> y, std::span<double> dy) {
        auto dg = dy.subspan(2 * d_, p_);
        std::fill(dg.begin(), dg.end(), 0.0);
        adjoint_rhs_into(*spec_, t, y.first(d_), y.subspan(d_, d_), dy.first(d_),
                         dy.subspan(d_, d_), dg, ws_);
    }

private:
    const ModelSpec* spec_;
    std::size_t d_;
    std::size_t p_;
    AdjointWorkspace ws_;
};

struct BackwardOptions {
    /// After each accepted step the stacked adjoint is rescaled to this
    /// l2 norm when it exceeds it.
    std::optional<double> clip_threshold;
    bool record_trace = false;
    bool with_params = true;
};

struct AdjointResult {
    Vec grad_params;         // dL/dtheta in ode_params() layout
    Vec grad_initial_state;  // dL/dz(t0)
    std::size_t backward_nfe = 0;
    std::vector<std::pair<double, double>> adjoint_trace;  // (t, ||a(t)||_2)
};

/// Integrates the augmented system from times.front() (= T) through the
/// remaining times, re-solving the forward state backward alongside the
/// adjoint. Returns the raw augmented checkpoints.
inline SolveResult solve_adjoint_system(const ModelSpec& spec, std::span<const double> zT,
                                        std::span<const double> aT, std::span<const double> times,
                                        const SolverConfig& cfg, const BackwardOptions& opts = {},
                                        std::vector<std::pair<double, double>>* trace = nullptr) {
    spec.validate();
    const std::size_t d = spec.state_dim();
    require_dim(zT.size() == d, "backward_pass: final state extent mismatch");
    require_dim(aT.size() == d, "backward_pass: loss cotangent extent mismatch");
    AugmentedAdjointRhs sys(spec, opts.with_params);
    Vec y0(sys.size(), 0.0);
    std::copy(zT.begin(), zT.end(), y0.begin());
    std::copy(aT.begin(), aT.end(), y0.begin() + static_cast<std::ptrdiff_t>(d));

    if (trace) trace->emplace_back(times.front(), norm2(aT));
    AcceptHook hook;
    if (opts.clip_threshold || trace) {
        hook = [&, d](double t, std::span<double> y) {
            auto a = y.subspan(d, d);
            bool modified = false;
            if (opts.clip_threshold) {
                const double nrm = norm2(a);
                if (nrm > *opts.clip_threshold) {
                    const double s = *opts.clip_threshold / nrm;
                    for (double& v : a) v *= s;
                    modified = true;
                }
            }
            if (trace) trace->emplace_back(t, norm2(a));
            return modified;
        };
    }
    if (opts.clip_threshold && norm2(aT) > *opts.clip_threshold) {
        const double s = *opts.clip_threshold / norm2(aT);
        for (std::size_t i = 0; i < d; ++i) y0[d + i] *= s;
    }
    return integrate(sys, std::span<const double>(y0), times, cfg, hook);
}

/// Continuous adjoint gradient of a terminal loss L(z(T)).
///
/// Terminal conditions are a(T) = dL/dz(T) (the momentum block is zero
/// when the loss reads only h). The parameter gradient
///     dL/dtheta = int_{t0}^{T} a dF/dtheta dt
/// is integrated in the same solve as the adjoint, so `backward_nfe`
/// counts every evaluation of the augmented system.
inline AdjointResult backward_pass(const ModelSpec& spec, double t0, double T,
                                   std::span<const double> zT, std::span<const double> dLdzT,
                                   const SolverConfig& cfg, const BackwardOptions& opts = {}) {
    AdjointResult out;
    const std::array<double, 2> times{T, t0};
    auto* trace = opts.record_trace ? &out.adjoint_trace : nullptr;
    const SolveResult sr = solve_adjoint_system(spec, zT, dLdzT, times, cfg, opts, trace);
    const std::size_t d = spec.state_dim();
    const Vec& y = sr.final_state();
    out.grad_initial_state.assign(y.begin() + static_cast<std::ptrdiff_t>(d),
                                  y.begin() + static_cast<std::ptrdiff_t>(2 * d));
    out.grad_params.assign(y.begin() + static_cast<std::ptrdiff_t>(2 * d), y.end());
    if (!opts.with_params) out.grad_params.clear();
    out.backward_nfe = sr.nfe;
    return out;
}

/// Uses the first and last checkpoints of a forward solve.
inline AdjointResult backward_pass(const ModelSpec& spec, const SolveResult& forward,
                                   std::span<const double> dLdzT, const SolverConfig& cfg,
                                   const BackwardOptions& opts = {}) {
    require_dim(forward.checkpoints.size() >= 2, "backward_pass: forward result has no span");
    return backward_pass(spec, forward.checkpoints.front().time, forward.final_time(),
                         forward.final_state(), dLdzT, cfg, opts);
}

// ---------------------------------------------------------------------------
// Second-order structure of the HBNODE adjoint.

struct SecondOrderAdjointReport {
    /// max |a(t_k) - b(T - t_k)|: the second-order adjoint solved backward
    /// in t against its time-reversed heavy-ball form solved forward in tau.
    double max_equivalence_gap = 0.0;
    /// max |a_h - (gamma a_m - da_m/dt)| with (a_h, a_m) from the coupled
    /// first-order adjoint and da_m/dt from the second-order system.
    double max_identity_residual = 0.0;
};

/// Checks, along an HBNODE forward trajectory, that
///  (i)  a'' - gamma a' = a df/dh solved backward in t equals
///       b'' + gamma b' = b df/dh(T - tau) solved forward in tau = T - t,
///  (ii) a_h = gamma a_m - a_m' where (a_h, a_m) solve the coupled
///       first-order adjoint and a_m' comes from the solve in (i).
/// The loss is taken to read only h(T), so a_m(T) = 0.
inline SecondOrderAdjointReport hbnode_second_order_adjoint_check(const ModelSpec& spec,
                                                                  const SolveResult& trajectory,
                                                                  std::span<const double> dLdhT,
                                                                  const SolverConfig& cfg) {
    if (spec.family != Family::hbnode)
        throw std::invalid_argument("hbnode_second_order_adjoint_check: hbnode family required");
    spec.validate();
    const std::size_t n = spec.position_dim();
    require_dim(dLdhT.size() == n, "hbnode_second_order_adjoint_check: cotangent extent mismatch");
    require_dim(trajectory.checkpoints.size() >= 2, "hbnode_second_order_adjoint_check: empty trajectory");

    const double T = trajectory.final_time();
    const Vec& zT = trajectory.final_state();
    const double g = spec.gamma();

    Vec back_times;
    for (auto it = trajectory.checkpoints.rbegin(); it != trajectory.checkpoints.rend(); ++it)
        back_times.push_back(it->time);
    Vec tau_times;
    for (double t : back_times) tau_times.push_back(T - t);

    // (i-a) y = [h, m, a, a'] backward in t.
    struct SecondOrderBackward {
        const ModelSpec* spec;
        std::size_t n;
        double g;
        RhsWorkspace ws;
        Vec grad_in;
        void operator()(double t, std::span<const double> y, std::span<double> dy) {
            const auto m = y.subspan(n, n), a = y.subspan(2 * n, n), at = y.subspan(3 * n, n);
            detail::assemble_f_input(*spec, t, y.first(n), ws);
            grad_in.resize(spec->f_net.input_dim());
            spec->f_net.vjp_accumulate(ws.f_in, t, a, grad_in, {}, ws.mlp);
            const Vec& fy = ws.mlp.post.back();
            for (std::size_t i = 0; i < n; ++i) {
                dy[i] = m[i];
                dy[n + i] = -g * m[i] + fy[i];
                dy[2 * n + i] = at[i];
                dy[3 * n + i] = grad_in[i] + g * at[i];
            }
        }
    } sys_a{&spec, n, g, {}, {}};
    Vec ya(4 * n, 0.0);
    std::copy(zT.begin(), zT.end(), ya.begin());
    for (std::size_t i = 0; i < n; ++i) ya[3 * n + i] = -dLdhT[i];
    const SolveResult ra = integrate(sys_a, ya, back_times, cfg);

    // (i-b) y = [h, m, b, b'] forward in tau = T - t.
    struct SecondOrderForwardTau {
        const ModelSpec* spec;
        std::size_t n;
        double g;
        double T;
        RhsWorkspace ws;
        Vec grad_in;
        void operator()(double tau, std::span<const double> y, std::span<double> dy) {
            const double t = T - tau;
            const auto m = y.subspan(n, n), b = y.subspan(2 * n, n), bt = y.subspan(3 * n, n);
            detail::assemble_f_input(*spec, t, y.first(n), ws);
            grad_in.resize(spec->f_net.input_dim());
            spec->f_net.vjp_accumulate(ws.f_in, t, b, grad_in, {}, ws.mlp);
            const Vec& fy = ws.mlp.post.back();
            for (std::size_t i = 0; i < n; ++i) {
                dy[i] = -m[i];
                dy[n + i] = g * m[i] - fy[i];
                dy[2 * n + i] = bt[i];
                dy[3 * n + i] = -g * bt[i] + grad_in[i];
            }
        }
    } sys_b{&spec, n, g, T, {}, {}};
    Vec yb(4 * n, 0.0);
    std::copy(zT.begin(), zT.end(), yb.begin());
    for (std::size_t i = 0; i < n; ++i) yb[3 * n + i] = dLdhT[i];
    const SolveResult rb = integrate(sys_b, yb, tau_times, cfg);

    // (ii) coupled first-order adjoint [h, m, a_h, a_m].
    Vec aT(2 * n, 0.0);
    std::copy(dLdhT.begin(), dLdhT.end(), aT.begin());
    BackwardOptions opts;
    opts.with_params = false;
    const SolveResult rc = solve_adjoint_system(spec, zT, aT, back_times, cfg, opts);

    SecondOrderAdjointReport rep;
    for (std::size_t k = 0; k < back_times.size(); ++k) {
        const Vec& A = ra.checkpoints[k].state;
        const Vec& B = rb.checkpoints[k].state;
        const Vec& C = rc.checkpoints[k].state;
        for (std::size_t i = 0; i < n; ++i) {
            rep.max_equivalence_gap =
                std::max(rep.max_equivalence_gap, std::abs(A[2 * n + i] - B[2 * n + i]));
            const double a_h = C[2 * n + i];
            const double a_m = C[3 * n + i];
            const double residual = a_h - (g * a_m - A[3 * n + i]);
            rep.max_identity_residual = std::max(rep.max_identity_residual, std::abs(residual));
        }
    }
    return rep;
}

}  // namespace hbnode
