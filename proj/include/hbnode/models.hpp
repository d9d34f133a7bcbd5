#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hbnode/activation.hpp"
#include "hbnode/errors.hpp"
#include "hbnode/mlp.hpp"
#include "hbnode/odeint.hpp"
#include "hbnode/tensor.hpp"

namespace hbnode {

enum class Family { node, anode, sonode, hbnode, ghbnode };

inline constexpr std::array<Family, 5> kAllFamilies = {Family::node, Family::anode, Family::sonode,
                                                      Family::hbnode, Family::ghbnode};

inline std::string to_string(Family f) {
    switch (f) {
        case Family::node: return "node";
        case Family::anode: return "anode";
        case Family::sonode: return "sonode";
        case Family::hbnode: return "hbnode";
        case Family::ghbnode: return "ghbnode";
    }
    return "?";
}

inline Family parse_family(const std::string& s) {
    for (Family f : kAllFamilies)
        if (to_string(f) == s) return f;
    throw std::invalid_argument("unknown model family '" + s + "'");
}

/// Families whose state is (position, velocity/momentum).
inline bool has_momentum(Family f) {
    return f == Family::sonode || f == Family::hbnode || f == Family::ghbnode;
}

/// Time-dependent external input appended to the network input after the
/// state block (e.g. a driving voltage).
using ExogenousInput = std::function<void(double, std::span<double>)>;

/// Dynamics family plus its networks and damping/gating hyperparameters.
///
/// Damping is gamma = epsilon * sigmoid(gamma_param) and the skip strength
/// is xi = softplus(xi_param); both stay positive for every real parameter.
/// The default xi_param = 0 gives xi = ln 2.
struct ModelSpec {
    Family family = Family::node;
    std::size_t aug_dim = 0;
    Mlp f_net;
    std::optional<Mlp> init_velocity_net;
    double gamma_param = -3.0;
    double epsilon = 1.0;
    double xi_param = 0.0;
    Activation sigma = Activation::tanh();
    bool gamma_trainable = true;
    bool xi_trainable = true;
    ExogenousInput exogenous;
    std::size_t exogenous_dim = 0;

    double gamma() const { return epsilon * Activation::sigmoid_of(gamma_param); }
    double xi() const { return Activation::softplus_of(xi_param); }
    double dgamma_dparam() const {
        const double s = Activation::sigmoid_of(gamma_param);
        return epsilon * s * (1.0 - s);
    }
    double dxi_dparam() const { return Activation::sigmoid_of(xi_param); }

    bool uses_gamma() const { return family == Family::hbnode || family == Family::ghbnode; }
    bool uses_xi() const { return family == Family::ghbnode; }
    bool trains_gamma() const { return uses_gamma() && gamma_trainable; }
    bool trains_xi() const { return uses_xi() && xi_trainable; }

    /// Extent n of the position block h (before ANODE augmentation).
    std::size_t position_dim() const {
        const std::size_t out = f_net.output_dim();
        return family == Family::anode ? out - aug_dim : out;
    }

    /// Extent of the block the readout sees: the augmented state for
    /// first-order families, h for the second-order ones.
    std::size_t readout_dim() const {
        return family == Family::anode ? f_net.output_dim() : position_dim();
    }

    std::size_t state_dim() const {
        switch (family) {
            case Family::node: return position_dim();
            case Family::anode: return position_dim() + aug_dim;
            default: return 2 * position_dim();
        }
    }

    /// Extent of the state part of f's input.
    std::size_t f_state_input_dim() const {
        switch (family) {
            case Family::node:
            case Family::anode: return state_dim();
            case Family::sonode: return 2 * position_dim();
            default: return position_dim();
        }
    }

    void validate() const {
        require_dim(!f_net.empty(), "ModelSpec: f_net missing");
        require_dim(family == Family::anode || aug_dim == 0,
                    "ModelSpec: aug_dim only applies to anode");
        require_dim(family != Family::anode || f_net.output_dim() > aug_dim,
                    "ModelSpec: anode output must exceed aug_dim");
        require_dim(f_net.input_dim() == f_state_input_dim() + exogenous_dim,
                    "ModelSpec: f_net input extent " + std::to_string(f_net.input_dim()) +
                        " does not match family " + to_string(family));
        require_dim(exogenous_dim == 0 || static_cast<bool>(exogenous),
                    "ModelSpec: exogenous_dim set without an input function");
        if (init_velocity_net) {
            require_dim(has_momentum(family), "ModelSpec: velocity net needs a momentum family");
            require_dim(init_velocity_net->input_dim() == position_dim() &&
                            init_velocity_net->output_dim() == position_dim(),
                        "ModelSpec: velocity net must map R^n -> R^n");
        }
        if (!(epsilon > 0.0)) throw std::invalid_argument("ModelSpec: epsilon must be positive");
    }
};

/// Packed (position, momentum) vector with its layout.
struct OdeState {
    Vec packed;
    std::size_t position_extent = 0;
    std::size_t momentum_extent = 0;

    static OdeState pack(std::span<const double> h, std::span<const double> m = {}) {
        OdeState s;
        s.position_extent = h.size();
        s.momentum_extent = m.size();
        s.packed.assign(h.begin(), h.end());
        s.packed.insert(s.packed.end(), m.begin(), m.end());
        return s;
    }

    static OdeState with_layout(Vec packed, std::size_t position_extent) {
        require_dim(position_extent <= packed.size(), "OdeState: layout exceeds data");
        OdeState s;
        s.momentum_extent = packed.size() - position_extent;
        s.position_extent = position_extent;
        s.packed = std::move(packed);
        return s;
    }

    std::span<const double> position() const { return {packed.data(), position_extent}; }
    std::span<const double> momentum() const {
        return {packed.data() + position_extent, momentum_extent};
    }
    std::pair<Vec, Vec> unpack() const {
        return {Vec(position().begin(), position().end()), Vec(momentum().begin(), momentum().end())};
    }
};

/// Layout of a spec's state: h block extent (the augmented block for ANODE).
inline std::size_t position_extent_of(const ModelSpec& spec) {
    return has_momentum(spec.family) ? spec.position_dim() : spec.state_dim();
}

// ---------------------------------------------------------------------------
// Parameter packing: f_net, then omega (if trained), then chi (if trained).

inline std::size_t ode_param_count(const ModelSpec& spec) {
    return spec.f_net.param_count() + (spec.trains_gamma() ? 1 : 0) + (spec.trains_xi() ? 1 : 0);
}

inline Vec ode_params(const ModelSpec& spec) {
    Vec p = spec.f_net.flatten();
    if (spec.trains_gamma()) p.push_back(spec.gamma_param);
    if (spec.trains_xi()) p.push_back(spec.xi_param);
    return p;
}

inline void set_ode_params(ModelSpec& spec, std::span<const double> p) {
    require_dim(p.size() == ode_param_count(spec), "set_ode_params: extent mismatch");
    const std::size_t nf = spec.f_net.param_count();
    spec.f_net.unflatten(p.first(nf));
    std::size_t k = nf;
    if (spec.trains_gamma()) spec.gamma_param = p[k++];
    if (spec.trains_xi()) spec.xi_param = p[k++];
}

// ---------------------------------------------------------------------------
// Right-hand side.

struct RhsWorkspace {
    MlpWorkspace mlp;
    Vec f_in;
    Vec f_out;
};

namespace detail {

/// Fills ws.f_in with the state block of f's input followed by the
/// exogenous input at time t.
inline void assemble_f_input(const ModelSpec& spec, double t, std::span<const double> s,
                             RhsWorkspace& ws) {
    const std::size_t ns = spec.f_state_input_dim();
    ws.f_in.resize(ns + spec.exogenous_dim);
    std::copy(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(ns), ws.f_in.begin());
    if (spec.exogenous_dim > 0)
        spec.exogenous(t, std::span<double>(ws.f_in).subspan(ns, spec.exogenous_dim));
}

}  // namespace detail

/// ds/dt for the packed state s.
///   node/anode: f(s, t)
///   sonode:     h' = v,        v' = f(h, v, t)
///   hbnode:     h' = m,        m' = -gamma m + f(h, t)
///   ghbnode:    h' = sigma(m), m' = -gamma m + f(h, t) - xi h
inline void rhs_into(const ModelSpec& spec, double t, std::span<const double> s,
                     std::span<double> ds, RhsWorkspace& ws) {
    const std::size_t d = spec.state_dim();
    require_dim(s.size() == d && ds.size() == d, "rhs: state extent does not match family layout");
    detail::assemble_f_input(spec, t, s, ws);
    if (!has_momentum(spec.family)) {
        spec.f_net.forward_into(ws.f_in, t, ds, ws.mlp);
        return;
    }
    const std::size_t n = spec.position_dim();
    ws.f_out.resize(n);
    spec.f_net.forward_into(ws.f_in, t, ws.f_out, ws.mlp);
    const auto h = s.first(n);
    const auto m = s.subspan(n, n);
    switch (spec.family) {
        case Family::sonode:
            for (std::size_t i = 0; i < n; ++i) {
                ds[i] = m[i];
                ds[n + i] = ws.f_out[i];
            }
            break;
        case Family::hbnode: {
            const double g = spec.gamma();
            for (std::size_t i = 0; i < n; ++i) {
                ds[i] = m[i];
                ds[n + i] = -g * m[i] + ws.f_out[i];
            }
            break;
        }
        case Family::ghbnode: {
            const double g = spec.gamma();
            const double xi = spec.xi();
            for (std::size_t i = 0; i < n; ++i) {
                ds[i] = spec.sigma.value(m[i]);
                ds[n + i] = -g * m[i] + ws.f_out[i] - xi * h[i];
            }
            break;
        }
        default: break;
    }
}

inline Vec rhs(const ModelSpec& spec, double t, std::span<const double> s) {
    RhsWorkspace ws;
    Vec ds(spec.state_dim());
    rhs_into(spec, t, s, ds, ws);
    return ds;
}

inline OdeState rhs(const ModelSpec& spec, double t, const OdeState& s) {
    require_dim(s.position_extent == position_extent_of(spec),
                "rhs: OdeState layout does not match family");
    return OdeState::with_layout(rhs(spec, t, s.packed), s.position_extent);
}

/// Callable adaptor for `integrate`. Holds its own scratch space, so use
/// one instance per thread.
class ModelRhs {
public:
    explicit ModelRhs(const ModelSpec& spec) : spec_(&spec) { spec.validate(); }
    void operator()(double t, std::span<const double> s, std::span<double> ds) {
        rhs_into(*spec_, t, s, ds, ws_);
    }

private:
    const ModelSpec* spec_;
    RhsWorkspace ws_;
};

inline SolveResult solve_forward(const ModelSpec& spec, std::span<const double> z0,
                                 std::span<const double> times, const SolverConfig& cfg) {
    ModelRhs f(spec);
    return integrate(f, z0, times, cfg);
}

/// Packs an input into the initial state: zero-padded for ANODE, with
/// velocity/momentum from `init_velocity_net` (zero when absent).
inline OdeState initial_state(const ModelSpec& spec, std::span<const double> input) {
    const std::size_t n = spec.position_dim();
    require_dim(input.size() == n, "initial_state: input extent " + std::to_string(input.size()) +
                                       " != " + std::to_string(n));
    Vec packed(input.begin(), input.end());
    switch (spec.family) {
        case Family::node: break;
        case Family::anode: packed.resize(n + spec.aug_dim, 0.0); break;
        default:
            if (spec.init_velocity_net) {
                const Vec v = spec.init_velocity_net->forward(input, 0.0);
                packed.insert(packed.end(), v.begin(), v.end());
            } else {
                packed.resize(2 * n, 0.0);
            }
    }
    return OdeState::with_layout(std::move(packed), position_extent_of(spec));
}

// ---------------------------------------------------------------------------
// Gradient flow vs heavy-ball dynamics on classic test objectives.

enum class Objective { rosenbrock, beale };

inline Objective parse_objective(const std::string& s) {
    if (s == "rosenbrock") return Objective::rosenbrock;
    if (s == "beale") return Objective::beale;
    throw std::invalid_argument("unknown objective '" + s + "'");
}

inline std::string to_string(Objective o) {
    return o == Objective::rosenbrock ? "rosenbrock" : "beale";
}

inline double objective_value(Objective o, double x, double y) {
    if (o == Objective::rosenbrock) {
        const double a = y - x * x;
        return 100.0 * a * a + (1.0 - x) * (1.0 - x);
    }
    const double p = 1.5 - x + x * y;
    const double q = 2.25 - x + x * y * y;
    const double r = 2.625 - x + x * y * y * y;
    return p * p + q * q + r * r;
}

inline std::array<double, 2> objective_gradient(Objective o, double x, double y) {
    if (o == Objective::rosenbrock) {
        const double a = y - x * x;
        return {-400.0 * x * a - 2.0 * (1.0 - x), 200.0 * a};
    }
    const double y2 = y * y;
    const double y3 = y2 * y;
    const double p = 1.5 - x + x * y;
    const double q = 2.25 - x + x * y2;
    const double r = 2.625 - x + x * y3;
    return {2.0 * (p * (y - 1.0) + q * (y2 - 1.0) + r * (y3 - 1.0)),
            2.0 * (p * x + q * 2.0 * x * y + r * 3.0 * x * y2)};
}

struct RaceVariant {
    enum class Kind { gradient_flow, heavy_ball };
    Kind kind = Kind::gradient_flow;
    double gamma = 0.0;

    static RaceVariant gradient_flow() { return {}; }
    static RaceVariant heavy_ball(double g) { return {Kind::heavy_ball, g}; }
    std::size_t state_dim() const { return kind == Kind::heavy_ball ? 4 : 2; }
};

/// gradient_flow: s = (x, y),        s' = -grad F
/// heavy_ball:    s = (x, y, x', y'), position' = velocity,
///                                    velocity' = -gamma velocity - grad F
inline void hbode_race_rhs(Objective o, const RaceVariant& v, double /*t*/,
                           std::span<const double> s, std::span<double> ds) {
    require_dim(s.size() == v.state_dim() && ds.size() == s.size(),
                "hbode_race_rhs: state extent mismatch");
    const auto g = objective_gradient(o, s[0], s[1]);
    if (v.kind == RaceVariant::Kind::gradient_flow) {
        ds[0] = -g[0];
        ds[1] = -g[1];
        return;
    }
    ds[0] = s[2];
    ds[1] = s[3];
    ds[2] = -v.gamma * s[2] - g[0];
    ds[3] = -v.gamma * s[3] - g[1];
}

/// Classical momentum iteration x^{k+1} = x^k - s grad F(x^k) + beta (x^k - x^{k-1}).
/// Returns x^0, x^1, ..., x^{iterations+1}.
inline std::vector<Vec> heavy_ball_discrete(const std::function<Vec(std::span<const double>)>& grad,
                                            Vec x0, Vec x1, double step, double beta,
                                            std::size_t iterations) {
    if (!(step > 0.0)) throw std::invalid_argument("heavy_ball_discrete: step must be positive");
    if (!(beta >= 0.0 && beta < 1.0))
        throw std::invalid_argument("heavy_ball_discrete: beta must lie in [0,1)");
    require_dim(x0.size() == x1.size(), "heavy_ball_discrete: iterate extents differ");
    std::vector<Vec> xs;
    xs.reserve(iterations + 2);
    xs.push_back(std::move(x0));
    xs.push_back(std::move(x1));
    for (std::size_t k = 0; k < iterations; ++k) {
        const Vec& cur = xs[xs.size() - 1];
        const Vec& prev = xs[xs.size() - 2];
        const Vec g = grad(cur);
        require_dim(g.size() == cur.size(), "heavy_ball_discrete: gradient extent mismatch");
        Vec next(cur.size());
        for (std::size_t i = 0; i < cur.size(); ++i)
            next[i] = cur[i] - step * g[i] + beta * (cur[i] - prev[i]);
        xs.push_back(std::move(next));
    }
    return xs;
}

}  // namespace hbnode
