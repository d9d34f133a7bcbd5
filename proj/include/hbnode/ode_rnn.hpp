#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hbnode/adjoint.hpp"
#include "hbnode/data.hpp"
#include "hbnode/errors.hpp"
#include "hbnode/mlp.hpp"
#include "hbnode/models.hpp"
#include "hbnode/odeint.hpp"
#include "hbnode/optim.hpp"
#include "hbnode/rng.hpp"
#include "hbnode/training.hpp"

namespace hbnode {

/// ODE between observations, recurrent cell at each observation, dense
/// head on the readout block.
///
/// The cell maps [z; x] -> z over the whole state, so it rewrites both
/// h and m for the second-order families and h alone for node/anode.
struct OdeRnnSpec {
    ModelSpec ode;
    Mlp rnn_cell;     // state_dim + obs_dim -> state_dim
    Mlp output_head;  // readout_dim -> obs_dim

    std::size_t obs_dim() const { return output_head.output_dim(); }

    std::size_t param_count() const {
        return ode_param_count(ode) + rnn_cell.param_count() + output_head.param_count();
    }

    /// ODE parameters, then the cell, then the head.
    Vec params() const {
        Vec p = ode_params(ode);
        for (const Vec& v : {rnn_cell.flatten(), output_head.flatten()}) p.insert(p.end(), v.begin(), v.end());
        return p;
    }

    void set_params(std::span<const double> p) {
        require_dim(p.size() == param_count(), "OdeRnnSpec::set_params: extent mismatch");
        const std::size_t a = ode_param_count(ode), b = rnn_cell.param_count();
        set_ode_params(ode, p.first(a));
        rnn_cell.unflatten(p.subspan(a, b));
        output_head.unflatten(p.subspan(a + b));
    }

    void validate() const {
        ode.validate();
        const std::size_t d = ode.state_dim();
        require_dim(output_head.input_dim() == ode.readout_dim(), "OdeRnnSpec: head input extent mismatch");
        require_dim(rnn_cell.input_dim() == d + obs_dim() && rnn_cell.output_dim() == d,
                    "OdeRnnSpec: cell must map state + observation to state");
    }
};

/// Observations and forecast targets of one sequence.
struct OdeRnnWindow {
    Vec obs_times;
    Matrix obs_values;  // N x D
    Vec target_times;   // strictly after obs_times.back()
    Matrix target_values;

    static OdeRnnWindow from(const SeriesWindow& w) {
        return {w.input_times, w.input_values, w.target_times, w.target_values};
    }
};

struct OdeRnnForward {
    std::vector<Vec> z_minus;          // state arriving at each observation
    std::vector<Vec> z_plus;           // state after the cell update
    std::vector<Vec> forecast_states;  // state at each forecast time
    Matrix predictions;                // K x D
    Matrix next_step;                  // (N-1) x D: head(z_minus[i]) for i >= 1
    std::size_t nfe = 0;
};

namespace detail {

inline void check_window(const OdeRnnSpec& spec, const OdeRnnWindow& w) {
    const std::size_t N = w.obs_times.size();
    if (N == 0) throw std::invalid_argument("ode_rnn: at least one observation required");
    require_dim(w.obs_values.rows() == N && w.obs_values.cols() == spec.obs_dim(),
                "ode_rnn: observation values must be N x obs_dim");
    for (std::size_t i = 1; i < N; ++i)
        if (!(w.obs_times[i] > w.obs_times[i - 1]))
            throw std::invalid_argument("ode_rnn: observation times must be strictly increasing");
    double prev = w.obs_times.back();
    for (double t : w.target_times) {
        if (!(t > prev)) throw std::invalid_argument("ode_rnn: forecast times must increase past the last observation");
        prev = t;
    }
}

inline Vec cell_input(std::span<const double> z, std::span<const double> x) {
    Vec in(z.begin(), z.end());
    in.insert(in.end(), x.begin(), x.end());
    return in;
}

}  // namespace detail

inline OdeRnnForward ode_rnn_forward(const OdeRnnSpec& spec, const OdeRnnWindow& w, const SolverConfig& cfg) {
    spec.validate();
    detail::check_window(spec, w);
    const std::size_t N = w.obs_times.size(), K = w.target_times.size();
    const std::size_t d = spec.ode.state_dim(), r = spec.ode.readout_dim(), D = spec.obs_dim();

    OdeRnnForward out;
    out.predictions = Matrix(K, D);
    out.next_step = Matrix(N > 0 ? N - 1 : 0, D);
    MlpWorkspace ws;
    ModelRhs rhs(spec.ode);
    Vec z(d, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        if (i > 0) {
            const std::array<double, 2> seg{w.obs_times[i - 1], w.obs_times[i]};
            const SolveResult sr = integrate(rhs, std::span<const double>(z), seg, cfg);
            out.nfe += sr.nfe;
            z = sr.final_state();
            spec.output_head.forward_into(std::span<const double>(z.data(), r), w.obs_times[i],
                                          out.next_step.row(i - 1), ws);
        }
        out.z_minus.push_back(z);
        const Vec in = detail::cell_input(z, w.obs_values.row(i));
        Vec zn(d);
        spec.rnn_cell.forward_into(in, w.obs_times[i], zn, ws);
        z = std::move(zn);
        out.z_plus.push_back(z);
    }
    if (K > 0) {
        Vec times{w.obs_times.back()};
        times.insert(times.end(), w.target_times.begin(), w.target_times.end());
        const SolveResult sr = integrate(rhs, std::span<const double>(z), std::span<const double>(times), cfg);
        out.nfe += sr.nfe;
        for (std::size_t k = 0; k < K; ++k) {
            out.forecast_states.push_back(sr.checkpoints[k + 1].state);
            spec.output_head.forward_into(std::span<const double>(out.forecast_states.back().data(), r),
                                          w.target_times[k], out.predictions.row(k), ws);
        }
    }
    return out;
}

struct OdeRnnGradient {
    Vec grad;  // OdeRnnSpec::params() layout
    std::size_t backward_nfe = 0;
};

/// Reverse sweep: continuous adjoint within each segment (restarted from
/// the stored forward state at the segment end), exact cell and head VJPs
/// at the boundaries.
inline OdeRnnGradient ode_rnn_backward(const OdeRnnSpec& spec, const OdeRnnWindow& w,
                                       const OdeRnnForward& fwd, const Matrix& dL_dpred,
                                       const Matrix& dL_dnext, const SolverConfig& cfg,
                                       std::optional<double> clip = std::nullopt) {
    const std::size_t N = w.obs_times.size(), K = w.target_times.size();
    const std::size_t d = spec.ode.state_dim(), r = spec.ode.readout_dim(), D = spec.obs_dim();
    require_dim(dL_dpred.rows() == K && (K == 0 || dL_dpred.cols() == D),
                "ode_rnn_backward: forecast cotangent must be K x D");
    require_dim(dL_dnext.rows() == (N > 0 ? N - 1 : 0) && (N <= 1 || dL_dnext.cols() == D),
                "ode_rnn_backward: next-step cotangent must be (N-1) x D");
    require_dim(fwd.z_minus.size() == N && fwd.forecast_states.size() == K,
                "ode_rnn_backward: forward record does not match the window");

    const std::size_t na = ode_param_count(spec.ode), nc = spec.rnn_cell.param_count();
    OdeRnnGradient out;
    out.grad.assign(spec.param_count(), 0.0);
    std::span<double> g_ode(out.grad.data(), na);
    std::span<double> g_cell(out.grad.data() + na, nc);
    std::span<double> g_head(out.grad.data() + na + nc, spec.output_head.param_count());

    MlpWorkspace ws;
    Vec a(d, 0.0);
    Vec grad_r(r);
    BackwardOptions opts;
    opts.clip_threshold = clip;

    auto head_vjp = [&](std::span<const double> z, double t, std::span<const double> cot) {
        spec.output_head.vjp_accumulate(z.first(r), t, cot, grad_r, g_head, ws);
        for (std::size_t i = 0; i < r; ++i) a[i] += grad_r[i];
    };
    auto segment = [&](const Vec& zT, double t1, double t0) {
        const std::array<double, 2> times{t1, t0};
        const SolveResult sr = solve_adjoint_system(spec.ode, zT, a, times, cfg, opts);
        out.backward_nfe += sr.nfe;
        const Vec& y = sr.final_state();
        std::copy(y.begin() + static_cast<std::ptrdiff_t>(d), y.begin() + static_cast<std::ptrdiff_t>(2 * d), a.begin());
        for (std::size_t i = 0; i < na; ++i) g_ode[i] += y[2 * d + i];
    };

    for (std::size_t k = K; k-- > 0;) {
        head_vjp(fwd.forecast_states[k], w.target_times[k], dL_dpred.row(k));
        segment(fwd.forecast_states[k], w.target_times[k], k == 0 ? w.obs_times.back() : w.target_times[k - 1]);
    }
    Vec grad_in(d + D);
    for (std::size_t i = N; i-- > 0;) {
        const Vec in = detail::cell_input(fwd.z_minus[i], w.obs_values.row(i));
        spec.rnn_cell.vjp_accumulate(in, w.obs_times[i], a, grad_in, g_cell, ws);
        std::copy(grad_in.begin(), grad_in.begin() + static_cast<std::ptrdiff_t>(d), a.begin());
        if (i == 0) break;
        head_vjp(fwd.z_minus[i], w.obs_times[i], dL_dnext.row(i - 1));
        segment(fwd.z_minus[i], w.obs_times[i], w.obs_times[i - 1]);
    }
    return out;
}

struct OdeRnnLoss {
    double forecast_mse = 0.0;
    double regularizer = 0.0;
    double total = 0.0;
};

/// forecast MSE + reg_weight * next-observation MSE, with cotangents.
inline OdeRnnLoss ode_rnn_loss(const OdeRnnWindow& w, const OdeRnnForward& fwd, double reg_weight,
                               Matrix* dL_dpred = nullptr, Matrix* dL_dnext = nullptr) {
    OdeRnnLoss L;
    const std::size_t K = w.target_times.size(), N = w.obs_times.size();
    const std::size_t D = fwd.predictions.cols();
    if (dL_dpred) *dL_dpred = Matrix(K, D);
    if (dL_dnext) *dL_dnext = Matrix(N > 0 ? N - 1 : 0, D);
    if (K > 0) {
        const double s = 1.0 / static_cast<double>(K * D);
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t j = 0; j < D; ++j) {
                const double e = fwd.predictions(k, j) - w.target_values(k, j);
                L.forecast_mse += s * e * e;
                if (dL_dpred) (*dL_dpred)(k, j) = 2.0 * s * e;
            }
    }
    if (N > 1 && reg_weight != 0.0) {
        const double s = 1.0 / static_cast<double>((N - 1) * D);
        for (std::size_t i = 1; i < N; ++i)
            for (std::size_t j = 0; j < D; ++j) {
                const double e = fwd.next_step(i - 1, j) - w.obs_values(i, j);
                L.regularizer += s * e * e;
                if (dL_dnext) (*dL_dnext)(i - 1, j) = 2.0 * reg_weight * s * e;
            }
    }
    L.total = L.forecast_mse + reg_weight * L.regularizer;
    return L;
}

struct OdeRnnEpoch {
    std::size_t epoch = 0;
    double train_loss = 0.0;  // mean total loss over the epoch's windows
    double train_mse = 0.0;   // mean forecast MSE over the epoch's windows
    double forward_nfe = 0.0;
    double backward_nfe = 0.0;
    double seconds = 0.0;
};

struct OdeRnnLog {
    std::vector<OdeRnnEpoch> epochs;
    bool failed = false;
    std::string failure;
};

/// Adam on mini-batches of windows with the loss averaged over the batch.
inline OdeRnnLog train_ode_rnn(OdeRnnSpec& spec, const std::vector<OdeRnnWindow>& windows,
                               const TrainConfig& cfg, double reg_weight = 1.0) {
    cfg.validate();
    spec.validate();
    OdeRnnLog log;
    if (cfg.epochs == 0 || windows.empty()) return log;
    Rng rng(cfg.seed);
    Rng shuffle_rng = rng.split();
    Vec params = spec.params();
    AdamState adam(params.size());
    Vec grad(params.size());
    std::vector<std::size_t> order(windows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto start = std::chrono::steady_clock::now();
    std::size_t iter = 0;
    Matrix dp, dn;
    try {
        for (std::size_t ep = 1; ep <= cfg.epochs; ++ep) {
            shuffle_rng.shuffle(std::span<std::size_t>(order));
            OdeRnnEpoch rec;
            rec.epoch = ep;
            for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
                if (cfg.max_iterations && iter >= *cfg.max_iterations) break;
                const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
                const double scale = 1.0 / static_cast<double>(b1 - b0);
                std::fill(grad.begin(), grad.end(), 0.0);
                for (std::size_t k = b0; k < b1; ++k) {
                    const OdeRnnWindow& w = windows[order[k]];
                    const OdeRnnForward fwd = ode_rnn_forward(spec, w, cfg.solver);
                    const OdeRnnLoss L = ode_rnn_loss(w, fwd, reg_weight, &dp, &dn);
                    const OdeRnnGradient g = ode_rnn_backward(spec, w, fwd, dp, dn, cfg.solver, cfg.clip_threshold);
                    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += scale * g.grad[i];
                    rec.train_loss += L.total;
                    rec.train_mse += L.forecast_mse;
                    rec.forward_nfe += static_cast<double>(fwd.nfe);
                    rec.backward_nfe += static_cast<double>(g.backward_nfe);
                }
                adam_step(params, grad, adam, cfg.adam());
                spec.set_params(params);
                ++iter;
            }
            const auto n = static_cast<double>(windows.size());
            rec.train_loss /= n;
            rec.train_mse /= n;
            rec.forward_nfe /= n;
            rec.backward_nfe /= n;
            rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            log.epochs.push_back(rec);
            if (cfg.max_iterations && iter >= *cfg.max_iterations) break;
        }
    } catch (const BlowUpError& e) {
        log.failed = true;
        log.failure = std::string("blow-up: ") + e.what();
    } catch (const StepLimitError& e) {
        log.failed = true;
        log.failure = std::string("step limit: ") + e.what();
    }
    return log;
}

struct OdeRnnEval {
    double forecast_mse = 0.0;
    double forward_nfe = 0.0;
};

inline OdeRnnEval evaluate_ode_rnn(const OdeRnnSpec& spec, const std::vector<OdeRnnWindow>& windows,
                                   const SolverConfig& cfg) {
    OdeRnnEval ev;
    if (windows.empty()) return ev;
    for (const auto& w : windows) {
        const OdeRnnForward fwd = ode_rnn_forward(spec, w, cfg);
        ev.forecast_mse += ode_rnn_loss(w, fwd, 0.0).forecast_mse;
        ev.forward_nfe += static_cast<double>(fwd.nfe);
    }
    ev.forecast_mse /= static_cast<double>(windows.size());
    ev.forward_nfe /= static_cast<double>(windows.size());
    return ev;
}

/// Hidden widths of f for latent extent n: (3n, 4n) for the first-order
/// families, (n, n) for the second-order ones.
inline std::array<std::size_t, 2> ode_rnn_hidden_widths(Family family, std::size_t latent) {
    if (has_momentum(family)) return {latent, latent};
    return {3 * latent, 4 * latent};
}

/// f: two ReLU hidden layers; a tanh cell over the full state; a linear head.
inline OdeRnnSpec make_ode_rnn(Family family, std::size_t obs_dim, std::size_t latent, Rng& rng) {
    OdeRnnSpec s;
    s.ode.family = family;
    s.ode.aug_dim = family == Family::anode ? 1 : 0;
    const std::size_t n_out = latent + s.ode.aug_dim;
    const std::size_t f_in = family == Family::sonode ? 2 * latent : n_out;
    const auto [h1, h2] = ode_rnn_hidden_widths(family, latent);
    const Activation relu = Activation::relu();
    s.ode.f_net = Mlp::create({f_in, h1, h2, n_out}, {relu, relu, Activation::identity()}, false, rng);
    const std::size_t d = s.ode.state_dim();
    s.rnn_cell = Mlp::create({d + obs_dim, d}, {Activation::tanh()}, false, rng);
    s.output_head = Mlp::create({s.ode.readout_dim(), obs_dim}, {Activation::identity()}, false, rng);
    s.validate();
    return s;
}

}  // namespace hbnode
