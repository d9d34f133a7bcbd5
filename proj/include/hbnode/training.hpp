#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
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
#include "hbnode/tensor.hpp"

namespace hbnode {

struct TrainConfig {
    double learning_rate = 0.01;
    std::size_t batch_size = 50;
    std::size_t epochs = 1;
    std::uint64_t seed = 0;
    SolverConfig solver = SolverConfig::dopri(1e-7);
    std::optional<double> clip_threshold = 100.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    /// Stops after this many optimizer steps even mid-epoch.
    std::optional<std::size_t> max_iterations;

    static TrainConfig point_cloud() { return {}; }
    static TrainConfig plane_vibration() {
        TrainConfig c;
        c.batch_size = 64;
        c.learning_rate = 1e-4;
        return c;
    }
    static TrainConfig walker() {
        TrainConfig c;
        c.batch_size = 256;
        c.learning_rate = 3e-3;
        return c;
    }

    AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_eps}; }

    void validate() const {
        if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
        if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
        if (clip_threshold && !(*clip_threshold > 0.0))
            throw std::invalid_argument("TrainConfig: clip threshold must be positive");
        solver.validate();
    }
};

// ---------------------------------------------------------------------------
// Classifier: initial state -> ODE flow over [t0, T] -> dense head.

enum class LossKind {
    /// One tanh output against targets -0.85 (class 0) / +0.85 (class 1).
    scaled_tanh_mse,
    /// Softmax over one logit per class.
    softmax_cross_entropy,
};

struct ClassificationData {
    std::vector<Vec> inputs;
    std::vector<std::size_t> labels;
    std::size_t num_classes = 2;

    std::size_t size() const { return inputs.size(); }

    static ClassificationData from_points(const LabeledPointSet& s) {
        ClassificationData d;
        for (std::size_t i = 0; i < s.size(); ++i) {
            d.inputs.push_back({s.points[i][0], s.points[i][1]});
            d.labels.push_back(s.labels[i] == PointLabel::inner ? 0 : 1);
        }
        return d;
    }
};

struct OdeClassifier {
    ModelSpec ode;
    Mlp head;
    LossKind loss = LossKind::scaled_tanh_mse;
    double t0 = 0.0;
    double T = 1.0;

    std::size_t velocity_param_count() const {
        return ode.init_velocity_net ? ode.init_velocity_net->param_count() : 0;
    }
    std::size_t param_count() const {
        return ode_param_count(ode) + velocity_param_count() + head.param_count();
    }

    /// ODE parameters, then the velocity network, then the head.
    Vec params() const {
        Vec p = ode_params(ode);
        if (ode.init_velocity_net) {
            const Vec v = ode.init_velocity_net->flatten();
            p.insert(p.end(), v.begin(), v.end());
        }
        const Vec h = head.flatten();
        p.insert(p.end(), h.begin(), h.end());
        return p;
    }

    void set_params(std::span<const double> p) {
        require_dim(p.size() == param_count(), "OdeClassifier::set_params: extent mismatch");
        const std::size_t a = ode_param_count(ode), b = velocity_param_count();
        set_ode_params(ode, p.first(a));
        if (ode.init_velocity_net) ode.init_velocity_net->unflatten(p.subspan(a, b));
        head.unflatten(p.subspan(a + b));
    }

    void validate() const {
        ode.validate();
        require_dim(head.input_dim() == ode.readout_dim(), "OdeClassifier: head input extent mismatch");
        if (loss == LossKind::scaled_tanh_mse)
            require_dim(head.output_dim() == 1, "OdeClassifier: tanh head must have one output");
    }
};

struct SampleOutcome {
    double loss = 0.0;
    bool correct = false;
    std::size_t forward_nfe = 0;
    std::size_t backward_nfe = 0;
};

namespace detail {

inline constexpr double kTanhTarget = 0.85;

/// Loss of one head output and its cotangent.
inline double head_loss(LossKind kind, std::span<const double> y, std::size_t label, Vec& dLdy,
                        bool& correct) {
    dLdy.assign(y.size(), 0.0);
    if (kind == LossKind::scaled_tanh_mse) {
        const double target = label == 0 ? -kTanhTarget : kTanhTarget;
        const double r = y[0] - target;
        dLdy[0] = 2.0 * r;
        correct = (y[0] >= 0.0) == (label != 0);
        return r * r;
    }
    require_dim(label < y.size(), "head_loss: label outside logit range");
    const double mx = *std::max_element(y.begin(), y.end());
    double z = 0.0;
    for (double v : y) z += std::exp(v - mx);
    for (std::size_t k = 0; k < y.size(); ++k) dLdy[k] = std::exp(y[k] - mx) / z;
    dLdy[label] -= 1.0;
    correct = std::max_element(y.begin(), y.end()) - y.begin() == static_cast<std::ptrdiff_t>(label);
    return -(y[label] - mx - std::log(z));
}

}  // namespace detail

/// Loss for one sample. When `grad` is non-empty, adds scale * dL/dparams
/// into it (classifier parameter layout).
inline SampleOutcome sample_loss_and_grad(const OdeClassifier& model, std::span<const double> x,
                                          std::size_t label, const SolverConfig& cfg,
                                          std::optional<double> clip, std::span<double> grad,
                                          double scale = 1.0) {
    SampleOutcome out;
    const OdeState z0 = initial_state(model.ode, x);
    const std::array<double, 2> times{model.t0, model.T};
    const SolveResult fwd = solve_forward(model.ode, z0.packed, times, cfg);
    out.forward_nfe = fwd.nfe;
    const Vec& zT = fwd.final_state();
    const std::size_t r = model.ode.readout_dim();
    const std::span<const double> readout(zT.data(), r);

    MlpWorkspace ws;
    Vec y(model.head.output_dim());
    model.head.forward_into(readout, model.T, y, ws);
    Vec dLdy;
    out.loss = detail::head_loss(model.loss, y, label, dLdy, out.correct);
    if (grad.empty()) return out;

    require_dim(grad.size() == model.param_count(), "sample_loss_and_grad: gradient extent mismatch");
    const std::size_t na = ode_param_count(model.ode), nb = model.velocity_param_count();
    Vec dLdr(r, 0.0);
    model.head.vjp_accumulate(readout, model.T, dLdy, dLdr, grad.subspan(na + nb), ws, scale);

    Vec dLdzT(zT.size(), 0.0);
    std::copy(dLdr.begin(), dLdr.end(), dLdzT.begin());
    BackwardOptions opts;
    opts.clip_threshold = clip;
    const AdjointResult adj = backward_pass(model.ode, model.t0, model.T, zT, dLdzT, cfg, opts);
    out.backward_nfe = adj.backward_nfe;
    for (std::size_t i = 0; i < na; ++i) grad[i] += scale * adj.grad_params[i];
    if (model.ode.init_velocity_net) {
        const std::size_t n = model.ode.position_dim();
        const std::span<const double> a_m(adj.grad_initial_state.data() + n, n);
        model.ode.init_velocity_net->vjp_accumulate(x, 0.0, a_m, {}, grad.subspan(na, nb), ws, scale);
    }
    return out;
}

struct EvalSummary {
    double loss = 0.0;
    double accuracy = 0.0;
    double mean_forward_nfe = 0.0;
};

/// Forward-only mean loss and accuracy over a dataset.
inline EvalSummary evaluate_classifier(const OdeClassifier& model, const ClassificationData& data,
                                       const SolverConfig& cfg) {
    EvalSummary s;
    if (data.size() == 0) return s;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto o = sample_loss_and_grad(model, data.inputs[i], data.labels[i], cfg, {}, {});
        s.loss += o.loss;
        s.accuracy += o.correct ? 1.0 : 0.0;
        s.mean_forward_nfe += static_cast<double>(o.forward_nfe);
    }
    const auto n = static_cast<double>(data.size());
    s.loss /= n;
    s.accuracy /= n;
    s.mean_forward_nfe /= n;
    return s;
}

struct IterationRecord {
    std::size_t iteration = 0;  // 1-based optimizer step
    std::size_t epoch = 0;
    double loss = 0.0;          // batch mean
    double accuracy = 0.0;      // batch
    double forward_nfe = 0.0;   // per-sample mean
    double backward_nfe = 0.0;  // per-sample mean
    double seconds = 0.0;       // since training start
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    std::size_t iterations = 0;
    double train_loss = 0.0;      // full training set, after the epoch
    double train_accuracy = 0.0;  // full training set, after the epoch
    double forward_nfe = 0.0;     // per-sample mean over the epoch's steps
    double backward_nfe = 0.0;
    double seconds = 0.0;
};

struct TrainLog {
    std::vector<IterationRecord> iterations;
    std::vector<EpochRecord> epochs;
    bool failed = false;
    std::string failure;
};

/// Adam over shuffled mini-batches; every sample gets its own forward and
/// adjoint solve and gradients are summed in batch order. Solver blow-ups
/// and step-limit hits end the run with `failed` set.
inline TrainLog train_classifier(OdeClassifier& model, const ClassificationData& data,
                                 const TrainConfig& cfg) {
    cfg.validate();
    model.validate();
    TrainLog log;
    if (cfg.epochs == 0 || data.size() == 0) return log;

    Rng rng(cfg.seed);
    Rng shuffle_rng = rng.split();
    Vec params = model.params();
    Vec grad(params.size());
    AdamState adam(params.size());
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };

    std::size_t iter = 0;
    try {
        for (std::size_t ep = 1; ep <= cfg.epochs; ++ep) {
            shuffle_rng.shuffle(std::span<std::size_t>(order));
            double fwd_sum = 0.0, bwd_sum = 0.0;
            std::size_t seen = 0, ep_iters = 0;
            bool stop = false;
            for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
                if (cfg.max_iterations && iter >= *cfg.max_iterations) {
                    stop = true;
                    break;
                }
                const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
                const double scale = 1.0 / static_cast<double>(b1 - b0);
                std::fill(grad.begin(), grad.end(), 0.0);
                IterationRecord rec;
                for (std::size_t k = b0; k < b1; ++k) {
                    const std::size_t i = order[k];
                    const auto o = sample_loss_and_grad(model, data.inputs[i], data.labels[i], cfg.solver,
                                                        cfg.clip_threshold, grad, scale);
                    rec.loss += scale * o.loss;
                    rec.accuracy += o.correct ? scale : 0.0;
                    rec.forward_nfe += scale * static_cast<double>(o.forward_nfe);
                    rec.backward_nfe += scale * static_cast<double>(o.backward_nfe);
                }
                adam_step(params, grad, adam, cfg.adam());
                model.set_params(params);
                ++iter;
                ++ep_iters;
                rec.iteration = iter;
                rec.epoch = ep;
                rec.seconds = elapsed();
                fwd_sum += rec.forward_nfe * static_cast<double>(b1 - b0);
                bwd_sum += rec.backward_nfe * static_cast<double>(b1 - b0);
                seen += b1 - b0;
                log.iterations.push_back(rec);
            }
            if (ep_iters > 0) {
                const EvalSummary ev = evaluate_classifier(model, data, cfg.solver);
                EpochRecord er;
                er.epoch = ep;
                er.iterations = iter;
                er.train_loss = ev.loss;
                er.train_accuracy = ev.accuracy;
                er.forward_nfe = fwd_sum / static_cast<double>(seen);
                er.backward_nfe = bwd_sum / static_cast<double>(seen);
                er.seconds = elapsed();
                log.epochs.push_back(er);
            }
            if (stop) break;
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

// ---------------------------------------------------------------------------
// Point-cloud architectures (dense f, optional velocity net, tanh head).

/// Hidden width of f per family, sized so the models have comparable
/// parameter counts.
inline std::size_t point_cloud_hidden_width(Family f) {
    switch (f) {
        case Family::node:
        case Family::anode: return 20;
        case Family::sonode: return 13;
        default: return 14;
    }
}

inline OdeClassifier make_point_cloud_model(Family family, Rng& rng, double T = 1.0) {
    const std::size_t n = family == Family::anode ? 3 : 2;
    const std::size_t h = point_cloud_hidden_width(family);
    const Activation elu = Activation::elu();
    OdeClassifier m;
    m.ode.family = family;
    m.ode.aug_dim = family == Family::anode ? 1 : 0;
    const std::size_t f_in = family == Family::sonode ? 2 * n : n;
    m.ode.f_net = Mlp::create({f_in, h, h, n}, {elu, elu, Activation::identity()}, false, rng);
    if (has_momentum(family)) {
        const Activation ht = Activation::hardtanh(-5.0, 5.0);
        m.ode.init_velocity_net = Mlp::create({2, h, h, n}, {ht, ht, Activation::identity()}, false, rng);
    }
    m.head = Mlp::create({m.ode.readout_dim(), 1}, {Activation::tanh()}, false, rng);
    m.loss = LossKind::scaled_tanh_mse;
    m.T = T;
    m.validate();
    return m;
}

}  // namespace hbnode
