#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hbnode/adjoint.hpp"
#include "hbnode/data.hpp"
#include "hbnode/errors.hpp"
#include "hbnode/mlp.hpp"
#include "hbnode/models.hpp"
#include "hbnode/ode_rnn.hpp"
#include "hbnode/odeint.hpp"
#include "hbnode/rng.hpp"
#include "hbnode/spectrum.hpp"
#include "hbnode/training.hpp"

namespace hbnode {

// ---------------------------------------------------------------------------
// Gradient flow vs heavy ball on a test objective.

struct RaceSettings {
    Objective objective = Objective::rosenbrock;
    double gamma = 0.9;
    double dt = 0.001;  // output spacing and first solver step
    double horizon = 1.0;
    double x0 = 0.0;
    double y0 = 0.0;
    double tol = 1e-9;

    static RaceSettings defaults(Objective o) {
        RaceSettings s;
        s.objective = o;
        if (o == Objective::beale) {
            s.gamma = 0.7;
            s.dt = 0.01;
            s.horizon = 2.0;
        }
        return s;
    }

    void validate() const {
        if (!(gamma >= 0.0)) throw std::invalid_argument("race: gamma must be non-negative");
        if (!(dt > 0.0)) throw std::invalid_argument("race: dt must be positive");
        if (!(horizon > 0.0)) throw std::invalid_argument("race: horizon must be positive");
        if (!(tol > 0.0)) throw std::invalid_argument("race: tol must be positive");
    }
};

struct RaceSample {
    double t = 0.0, x = 0.0, y = 0.0, value = 0.0;
};

struct RaceTrajectory {
    RaceVariant variant;
    std::vector<RaceSample> samples;
    double final_value() const { return samples.back().value; }
};

inline Vec race_sample_times(double dt, double horizon) {
    const auto steps = static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
    Vec times;
    for (std::size_t k = 0; k < steps; ++k) times.push_back(dt * static_cast<double>(k));
    times.push_back(horizon);
    return times;
}

/// Both variants from rest at (x0, y0), sampled every dt.
inline std::array<RaceTrajectory, 2> run_race(const RaceSettings& s) {
    s.validate();
    const Vec times = race_sample_times(s.dt, s.horizon);
    SolverConfig cfg = SolverConfig::dopri(s.tol);
    cfg.initial_step = s.dt;
    std::array<RaceTrajectory, 2> out{RaceTrajectory{RaceVariant::gradient_flow(), {}},
                                      RaceTrajectory{RaceVariant::heavy_ball(s.gamma), {}}};
    for (auto& tr : out) {
        Vec y0(tr.variant.state_dim(), 0.0);
        y0[0] = s.x0;
        y0[1] = s.y0;
        const RaceVariant v = tr.variant;
        auto rhs = [&](double t, std::span<const double> y, std::span<double> dy) {
            hbode_race_rhs(s.objective, v, t, y, dy);
        };
        const SolveResult r = integrate(rhs, y0, times, cfg);
        for (const auto& cp : r.checkpoints)
            tr.samples.push_back({cp.time, cp.state[0], cp.state[1],
                                  objective_value(s.objective, cp.state[0], cp.state[1])});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Point-cloud classification.

/// 200 optimizer steps of Adam (lr 0.01, batch 50) at tolerance 1e-7.
inline TrainConfig point_cloud_train_config() {
    TrainConfig c = TrainConfig::point_cloud();
    c.epochs = 67;
    c.max_iterations = 200;
    return c;
}

struct PointCloudRun {
    OdeClassifier model;
    ClassificationData data;
    TrainLog log;
};

/// Data from `seed`, weights from an offset stream, shuffling from cfg.seed.
inline PointCloudRun run_point_cloud(Family family, std::uint64_t seed, const TrainConfig& cfg) {
    PointCloudRun run;
    run.data = ClassificationData::from_points(sample_point_cloud(seed));
    Rng model_rng(seed + 1000);
    run.model = make_point_cloud_model(family, model_rng);
    TrainConfig c = cfg;
    c.seed = seed;
    run.log = train_classifier(run.model, run.data, c);
    return run;
}

struct NfeSample {
    double tolerance = 0.0;
    double forward_nfe = 0.0;   // per-sample mean
    double backward_nfe = 0.0;  // per-sample mean
};

/// One forward solve and one adjoint pass per sample at each tolerance,
/// parameters held fixed.
inline std::vector<NfeSample> measure_nfe(const OdeClassifier& model, const ClassificationData& data,
                                          std::span<const double> tolerances,
                                          std::optional<double> clip = 100.0) {
    require_dim(data.size() > 0, "measure_nfe: empty batch");
    std::vector<NfeSample> out;
    Vec grad(model.param_count());
    for (double tol : tolerances) {
        const SolverConfig cfg = SolverConfig::dopri(tol);
        NfeSample s;
        s.tolerance = tol;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto o = sample_loss_and_grad(model, data.inputs[i], data.labels[i], cfg, clip, grad);
            s.forward_nfe += static_cast<double>(o.forward_nfe);
            s.backward_nfe += static_cast<double>(o.backward_nfe);
        }
        s.forward_nfe /= static_cast<double>(data.size());
        s.backward_nfe /= static_cast<double>(data.size());
        out.push_back(s);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Boundedness under forcing: scalar h, f a single dense layer on [state, u(t)].

struct BlowupConfig {
    double horizon = 100.0;
    double sample_dt = 0.5;
    double tol = 1e-7;
    ForcingSpec forcing;
    std::size_t velocity_hidden = 8;
    double bound = 5.0;  // hardtanh range of the ghbnode gate

    void validate() const {
        if (!(horizon > 0.0 && sample_dt > 0.0)) throw std::invalid_argument("blowup: horizon and sample_dt must be positive");
        if (!(tol > 0.0)) throw std::invalid_argument("blowup: tol must be positive");
        if (!(bound > 0.0)) throw std::invalid_argument("blowup: bound must be positive");
    }
};

struct BlowupTrace {
    Family family = Family::node;
    std::vector<std::pair<double, double>> samples;  // (t, ||h(t)||_2)
    bool blew_up = false;
    double last_finite_time = 0.0;
    /// ||h||_2 at the horizon; +inf after a blow-up.
    double final_norm = 0.0;
    /// max over accepted steps of ||h(t) - h(t0)||_inf - bound (t - t0).
    double max_bound_excess = -std::numeric_limits<double>::infinity();
    std::size_t accepted_steps = 0;
};

/// Same layer shapes draw the same weights: every family is built from a
/// copy of `rng`.
inline ModelSpec make_blowup_model(Family family, const Rng& rng, ExogenousInput u,
                                   const BlowupConfig& cfg) {
    Rng r = rng;
    ModelSpec s;
    s.family = family;
    s.aug_dim = family == Family::anode ? 1 : 0;
    const std::size_t out = family == Family::anode ? 2 : 1;
    const std::size_t state_in = family == Family::anode || family == Family::sonode ? 2 : 1;
    s.f_net = Mlp::create({state_in + 1, out}, {Activation::identity()}, false, r);
    s.exogenous = std::move(u);
    s.exogenous_dim = 1;
    s.gamma_param = -3.0;
    s.sigma = Activation::hardtanh(-cfg.bound, cfg.bound);
    if (has_momentum(family))
        s.init_velocity_net = Mlp::create({1, cfg.velocity_hidden, 1},
                                          {Activation::tanh(), Activation::identity()}, false, r);
    s.validate();
    return s;
}

/// Integrates every requested family from the shared draw of `seed`.
/// A non-finite state or step-limit hit truncates that family's trace.
inline std::vector<BlowupTrace> run_blowup(std::uint64_t seed, std::span<const Family> families,
                                           const BlowupConfig& cfg) {
    cfg.validate();
    Rng root(seed);
    Rng forcing_rng = root.split();
    const Rng weight_rng = root.split();
    const double h0 = root.uniform(-1.0, 1.0);

    auto forcing = std::make_shared<detail::Forcing>();
    forcing->spec = cfg.forcing;
    forcing->spec.phase = forcing_rng.uniform(0.0, 2.0 * std::numbers::pi);
    if (cfg.forcing.noise_std != 0.0) {
        if (!(cfg.forcing.noise_dt > 0.0)) throw std::invalid_argument("blowup: noise_dt must be positive");
        forcing->knots.resize(static_cast<std::size_t>(std::ceil(cfg.horizon / cfg.forcing.noise_dt)) + 2);
        for (double& k : forcing->knots) k = forcing_rng.normal();
    }
    ExogenousInput u = [forcing](double t, std::span<double> out) { out[0] = (*forcing)(t); };

    const Vec times = race_sample_times(cfg.sample_dt, cfg.horizon);
    std::vector<BlowupTrace> out;
    for (Family fam : families) {
        const ModelSpec spec = make_blowup_model(fam, weight_rng, u, cfg);
        const std::array<double, 1> x0{h0};
        const OdeState z0 = initial_state(spec, x0);
        const std::size_t n = spec.position_dim();
        BlowupTrace tr;
        tr.family = fam;
        const Vec hstart(z0.packed.begin(), z0.packed.begin() + static_cast<std::ptrdiff_t>(n));
        const AcceptHook hook = [&](double t, std::span<double> y) {
            double dev = 0.0;
            for (std::size_t i = 0; i < n; ++i) dev = std::max(dev, std::abs(y[i] - hstart[i]));
            tr.max_bound_excess = std::max(tr.max_bound_excess, dev - cfg.bound * (t - times.front()));
            ++tr.accepted_steps;
            return false;
        };
        SolveResult res;
        try {
            res = integrate(ModelRhs(spec), z0.packed, times, SolverConfig::dopri(cfg.tol), hook);
        } catch (const BlowUpError& e) {
            res = e.partial();
            tr.blew_up = true;
        } catch (const StepLimitError& e) {
            res = e.partial();
            tr.blew_up = true;
        }
        for (const auto& cp : res.checkpoints)
            tr.samples.emplace_back(cp.time, norm2(std::span<const double>(cp.state).first(n)));
        tr.last_finite_time = tr.samples.back().first;
        tr.final_norm = tr.blew_up ? std::numeric_limits<double>::infinity() : tr.samples.back().second;
        out.push_back(std::move(tr));
    }
    return out;
}

// ---------------------------------------------------------------------------
// ODE-RNN forecasting on an irregular series.

struct TimeseriesConfig {
    std::size_t length = 2000;
    double drop_fraction = 0.1;
    OscillatorConfig oscillator;
    std::optional<std::string> csv_path;
    std::string time_column = "t";
    std::vector<std::string> value_columns;
    std::size_t window = 64;
    std::size_t forecast = 8;
    std::size_t stride = 65;
    std::size_t latent = 8;
    double reg_weight = 1.0;
    TrainConfig train = default_train();

    static TrainConfig default_train() {
        TrainConfig c;
        c.learning_rate = 5e-3;
        c.batch_size = 8;
        c.epochs = 50;
        c.solver = SolverConfig::dopri(1e-7);
        return c;
    }

    void validate() const {
        if (window == 0 || stride == 0) throw std::invalid_argument("timeseries: window and stride must be positive");
        if (latent == 0) throw std::invalid_argument("timeseries: latent must be positive");
        if (!(reg_weight >= 0.0)) throw std::invalid_argument("timeseries: reg weight must be non-negative");
        train.validate();
    }
};

/// Standardised windows with times in units of the median sample gap.
struct PreparedSeries {
    std::vector<OdeRnnWindow> train, validation, test;
    std::size_t obs_dim = 0;
    double time_unit = 1.0;
    Vec mean, stddev;
};

inline PreparedSeries prepare_series(const IrregularSeries& raw, const TimeseriesConfig& cfg) {
    raw.validate();
    require_dim(raw.length() >= 2 && raw.attributes() > 0, "timeseries: series needs two rows and an attribute");
    PreparedSeries p;
    p.obs_dim = raw.attributes();
    Vec gaps;
    for (std::size_t i = 1; i < raw.length(); ++i) gaps.push_back(raw.times[i] - raw.times[i - 1]);
    std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2), gaps.end());
    p.time_unit = gaps[gaps.size() / 2];

    const SeriesSplit split = split_series(raw);
    const std::size_t D = p.obs_dim;
    p.mean.assign(D, 0.0);
    p.stddev.assign(D, 0.0);
    const auto& tr = split.train.values;
    require_dim(tr.rows() >= 2, "timeseries: training split too short");
    for (std::size_t r = 0; r < tr.rows(); ++r)
        for (std::size_t c = 0; c < D; ++c) p.mean[c] += tr(r, c);
    for (double& m : p.mean) m /= static_cast<double>(tr.rows());
    for (std::size_t r = 0; r < tr.rows(); ++r)
        for (std::size_t c = 0; c < D; ++c) p.stddev[c] += (tr(r, c) - p.mean[c]) * (tr(r, c) - p.mean[c]);
    for (double& s : p.stddev) {
        s = std::sqrt(s / static_cast<double>(tr.rows() - 1));
        if (!(s > 0.0)) s = 1.0;
    }

    auto convert = [&](const IrregularSeries& part) {
        IrregularSeries s = part;
        for (double& t : s.times) t /= p.time_unit;
        for (std::size_t r = 0; r < s.values.rows(); ++r)
            for (std::size_t c = 0; c < D; ++c) s.values(r, c) = (s.values(r, c) - p.mean[c]) / p.stddev[c];
        std::vector<OdeRnnWindow> ws;
        if (s.length() < cfg.window + cfg.forecast) return ws;
        for (const auto& w : window_series(s, cfg.window, cfg.forecast, cfg.stride))
            ws.push_back(OdeRnnWindow::from(w));
        return ws;
    };
    p.train = convert(split.train);
    p.validation = convert(split.validation);
    p.test = convert(split.test);
    if (p.train.empty() || p.test.empty())
        throw RangeError("timeseries: series too short for one train and one test window");
    return p;
}

struct TimeseriesRun {
    OdeRnnLog log;
    std::size_t param_count = 0;
    std::size_t train_windows = 0;
    double validation_mse = std::numeric_limits<double>::quiet_NaN();
    double test_mse = std::numeric_limits<double>::quiet_NaN();
    /// Per-window backward NFE averaged over all epochs.
    double mean_backward_nfe = 0.0;
    double mean_forward_nfe = 0.0;
};

/// Series from the CSV file when set, else the synthetic oscillator drawn
/// from `seed`; weights and shuffling also follow `seed`.
inline TimeseriesRun run_timeseries(Family family, std::uint64_t seed, const TimeseriesConfig& cfg) {
    cfg.validate();
    Rng root(seed);
    const std::uint64_t data_seed = root.next_u64();
    Rng model_rng = root.split();
    const IrregularSeries raw =
        cfg.csv_path ? load_csv_series(*cfg.csv_path, cfg.time_column, cfg.value_columns)
                     : gen_oscillator_series(data_seed, cfg.length, cfg.drop_fraction, cfg.oscillator);
    const PreparedSeries data = prepare_series(raw, cfg);

    OdeRnnSpec spec = make_ode_rnn(family, data.obs_dim, cfg.latent, model_rng);
    TimeseriesRun run;
    run.param_count = spec.param_count();
    run.train_windows = data.train.size();
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    run.log = train_ode_rnn(spec, data.train, tc, cfg.reg_weight);
    for (const auto& e : run.log.epochs) {
        run.mean_backward_nfe += e.backward_nfe;
        run.mean_forward_nfe += e.forward_nfe;
    }
    if (!run.log.epochs.empty()) {
        run.mean_backward_nfe /= static_cast<double>(run.log.epochs.size());
        run.mean_forward_nfe /= static_cast<double>(run.log.epochs.size());
    }
    if (!run.log.failed) {
        try {
            if (!data.validation.empty())
                run.validation_mse = evaluate_ode_rnn(spec, data.validation, tc.solver).forecast_mse;
            run.test_mse = evaluate_ode_rnn(spec, data.test, tc.solver).forecast_mse;
        } catch (const BlowUpError& e) {
            run.log.failed = true;
            run.log.failure = std::string("blow-up in evaluation: ") + e.what();
        } catch (const StepLimitError& e) {
            run.log.failed = true;
            run.log.failure = std::string("step limit in evaluation: ") + e.what();
        }
    }
    return run;
}

// ---------------------------------------------------------------------------
// Adjoint norm decay on the scalar linear field f(h) = coef * h.

struct AdjointTraceConfig {
    double coef = -2.0;
    double gamma = 0.5;
    double horizon = 20.0;
    double h0 = 1.0;
    double sample_dt = 0.5;
    double rtol = 1e-10;
    double atol = 1e-14;

    void validate() const {
        if (!(gamma > 0.0)) throw std::invalid_argument("adjoint-trace: gamma must be positive");
        if (!(horizon > 0.0 && sample_dt > 0.0)) throw std::invalid_argument("adjoint-trace: horizon and sample_dt must be positive");
        if (!(rtol > 0.0 && atol > 0.0)) throw std::invalid_argument("adjoint-trace: tolerances must be positive");
    }
};

/// node, hbnode or ghbnode with f(h) = coef * h and constant damping gamma.
inline ModelSpec make_linear_model(Family family, double coef, double gamma) {
    if (family != Family::node && family != Family::hbnode && family != Family::ghbnode)
        throw std::invalid_argument("linear model: family must be node, hbnode or ghbnode");
    if (!(gamma > 0.0)) throw std::invalid_argument("linear model: gamma must be positive");
    ModelSpec s;
    s.family = family;
    s.f_net = Mlp::affine(Matrix(1, 1, Vec{coef}), Vec{0.0});
    // gamma = epsilon * sigmoid(0)
    s.epsilon = 2.0 * gamma;
    s.gamma_param = 0.0;
    s.gamma_trainable = false;
    s.validate();
    return s;
}

/// (T - t, ||a(t)||_2) seeded with dL/dh(T) = 1, dL/dm(T) = 0.
inline std::vector<std::pair<double, double>> run_adjoint_trace(Family family, const AdjointTraceConfig& cfg) {
    cfg.validate();
    const ModelSpec spec = make_linear_model(family, cfg.coef, cfg.gamma);
    const std::size_t d = spec.state_dim();
    Vec z0(d, 0.0), aT(d, 0.0);
    z0[0] = cfg.h0;
    aT[0] = 1.0;
    Vec gaps;
    for (double g : race_sample_times(cfg.sample_dt, cfg.horizon))
        if (g > 0.0) gaps.push_back(g);
    return adjoint_norm_trace(spec, z0, cfg.horizon, gaps, aT, SolverConfig::dopri(cfg.rtol, cfg.atol));
}

// ---------------------------------------------------------------------------
// Adjoint gradients against central differences.

struct GradCheckConfig {
    std::size_t position_dim = 2;
    std::size_t hidden = 6;
    double T = 1.0;
    double tol = 1e-10;
    double fd_step = 1e-5;
    double rel_tol = 1e-3;
    double abs_floor = 1e-8;
};

struct GradCheckResult {
    Family family = Family::node;
    std::size_t params = 0;  // ode parameters plus initial state entries
    std::size_t state_dim = 0;
    /// max_i |g_i - fd_i| / max(|fd_i|, abs_floor / rel_tol)
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    bool passed = false;
};

/// Random tanh MLP field (time as an extra input) and loss
/// L = w . z(T) + |z(T)|^2 / 2; checks dL/dtheta and dL/dz0.
inline GradCheckResult run_grad_check(Family family, std::uint64_t seed, const GradCheckConfig& cfg = {}) {
    Rng rng(seed);
    ModelSpec spec;
    spec.family = family;
    spec.aug_dim = family == Family::anode ? 1 : 0;
    const std::size_t n_out = cfg.position_dim + spec.aug_dim;
    const std::size_t f_in = family == Family::sonode ? 2 * cfg.position_dim : n_out;
    spec.f_net = Mlp::create({f_in, cfg.hidden, n_out}, {Activation::tanh(), Activation::identity()}, true, rng);
    for (auto& L : spec.f_net.layers())
        for (double& b : L.bias) b = rng.uniform(-0.5, 0.5);
    spec.gamma_param = rng.uniform(-1.0, 1.0);
    spec.xi_param = rng.uniform(-1.0, 1.0);
    spec.sigma = Activation::tanh();
    spec.validate();

    const std::size_t d = spec.state_dim();
    Vec z0(d), w(d);
    for (double& v : z0) v = rng.uniform(-1.0, 1.0);
    for (double& v : w) v = rng.uniform(-1.0, 1.0);

    const SolverConfig sc = SolverConfig::dopri(cfg.tol);
    const std::array<double, 2> times{0.0, cfg.T};
    auto loss = [&](const ModelSpec& s, std::span<const double> z) {
        const Vec zT = solve_forward(s, z, times, sc).final_state();
        double L = 0.0;
        for (std::size_t i = 0; i < d; ++i) L += w[i] * zT[i] + 0.5 * zT[i] * zT[i];
        return L;
    };

    const SolveResult fwd = solve_forward(spec, z0, times, sc);
    Vec dL(d);
    for (std::size_t i = 0; i < d; ++i) dL[i] = w[i] + fwd.final_state()[i];
    const AdjointResult adj = backward_pass(spec, fwd, dL, sc);

    Vec analytic = adj.grad_params;
    analytic.insert(analytic.end(), adj.grad_initial_state.begin(), adj.grad_initial_state.end());
    const Vec theta = ode_params(spec);
    Vec fd(analytic.size());
    const double hstep = cfg.fd_step;
    for (std::size_t k = 0; k < theta.size(); ++k) {
        ModelSpec sp = spec, sm = spec;
        Vec tp = theta, tm = theta;
        tp[k] += hstep;
        tm[k] -= hstep;
        set_ode_params(sp, tp);
        set_ode_params(sm, tm);
        fd[k] = (loss(sp, z0) - loss(sm, z0)) / (2.0 * hstep);
    }
    for (std::size_t k = 0; k < d; ++k) {
        Vec zp = z0, zm = z0;
        zp[k] += hstep;
        zm[k] -= hstep;
        fd[theta.size() + k] = (loss(spec, zp) - loss(spec, zm)) / (2.0 * hstep);
    }

    GradCheckResult r;
    r.family = family;
    r.params = analytic.size();
    r.state_dim = d;
    const double floor = cfg.abs_floor / cfg.rel_tol;
    for (std::size_t k = 0; k < fd.size(); ++k) {
        const double e = std::abs(analytic[k] - fd[k]);
        r.max_abs_error = std::max(r.max_abs_error, e);
        r.max_rel_error = std::max(r.max_rel_error, e / std::max(std::abs(fd[k]), floor));
    }
    r.passed = r.max_rel_error <= cfg.rel_tol;
    return r;
}

// ---------------------------------------------------------------------------
// Random pairing instances.

struct SpectrumConfig {
    std::size_t max_n = 5;
    double max_gamma = 2.0;
    double min_span = 0.1;  // T - t uniform in [min_span, max_span]
    double max_span = 10.0;
};

/// n uniform in [1, max_n], gamma uniform in [0, max_gamma], T - t uniform
/// in [min_span, max_span], F_bar standard normal, J_bar diagonal in (0, 1].
inline BlockMatrixM random_block_matrix(Rng& rng, const SpectrumConfig& cfg = {}) {
    if (cfg.max_n == 0) throw std::invalid_argument("spectrum: max_n must be positive");
    if (!(cfg.max_gamma >= 0.0 && cfg.min_span > 0.0 && cfg.max_span >= cfg.min_span))
        throw std::invalid_argument("spectrum: need max_gamma >= 0 and 0 < min_span <= max_span");
    BlockMatrixM M;
    M.n = 1 + static_cast<std::size_t>(rng.below(cfg.max_n));
    M.gamma = rng.uniform(0.0, cfg.max_gamma);
    M.T = 1.0;
    M.t = M.T - rng.uniform(cfg.min_span, cfg.max_span);
    M.F_bar = Matrix(M.n, M.n);
    M.J_bar = Matrix(M.n, M.n);
    for (double& v : M.F_bar.data()) v = rng.normal();
    for (std::size_t i = 0; i < M.n; ++i) M.J_bar(i, i) = 1.0 - rng.uniform();
    return M;
}

}  // namespace hbnode
