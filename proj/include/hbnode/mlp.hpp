#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hbnode/activation.hpp"
#include "hbnode/errors.hpp"
#include "hbnode/rng.hpp"
#include "hbnode/tensor.hpp"

namespace hbnode {

struct DenseLayer {
    Matrix weight;  // out x in
    Vec bias;       // out
    Activation activation;
};

/// Scratch buffers reused across Mlp calls to keep the solver loop
/// allocation-free. One workspace per thread.
struct MlpWorkspace {
    std::vector<Vec> pre;   // pre-activation per layer
    std::vector<Vec> post;  // post[0] = (augmented) input, post[l+1] = layer l output
    Vec delta;
    Vec delta_prev;
};

struct VjpResult {
    Vec grad_input;
    Vec grad_params;
};

/// Feed-forward network y = act_L(W_L ... act_1(W_1 [x; t] + b_1) ... + b_L).
///
/// When `time_augmented` is set the scalar time is appended to the input
/// before the first layer; `input_dim()` excludes it and input gradients
/// never include a time component.
///
/// Flattened parameter layout: for each layer, W row-major then b.
class Mlp {
public:
    Mlp() = default;

    explicit Mlp(std::vector<DenseLayer> layers, bool time_augmented = false)
        : layers_(std::move(layers)), time_augmented_(time_augmented) {
        require_dim(!layers_.empty(), "Mlp: at least one layer required");
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const auto& L = layers_[l];
            require_dim(L.bias.size() == L.weight.rows(), "Mlp: bias extent != weight rows");
            if (l > 0)
                require_dim(L.weight.cols() == layers_[l - 1].weight.rows(),
                            "Mlp: layer " + std::to_string(l) + " input extent mismatch");
        }
        require_dim(!time_augmented_ || layers_[0].weight.cols() >= 1,
                    "Mlp: time-augmented network needs an input column for t");
    }

    /// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
    /// `widths` = {in, hidden..., out}; `in` excludes the time column.
    static Mlp create(std::span<const std::size_t> widths, std::span<const Activation> acts,
                      bool time_augmented, Rng& rng) {
        require_dim(widths.size() >= 2 && acts.size() == widths.size() - 1,
                    "Mlp::create: need one activation per layer");
        std::vector<DenseLayer> layers;
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            const std::size_t in = widths[l] + ((l == 0 && time_augmented) ? 1 : 0);
            const std::size_t out = widths[l + 1];
            Matrix w(out, in);
            const double bound = 1.0 / std::sqrt(static_cast<double>(in));
            for (double& x : w.data()) x = rng.uniform(-bound, bound);
            layers.push_back({std::move(w), Vec(out, 0.0), acts[l]});
        }
        return Mlp(std::move(layers), time_augmented);
    }

    static Mlp create(std::initializer_list<std::size_t> widths,
                      std::initializer_list<Activation> acts, bool time_augmented, Rng& rng) {
        const std::vector<std::size_t> w(widths);
        const std::vector<Activation> a(acts);
        return create(std::span<const std::size_t>(w), std::span<const Activation>(a),
                      time_augmented, rng);
    }

    /// Single affine layer y = act(W x + b).
    static Mlp affine(Matrix w, Vec b, Activation act = Activation::identity(),
                      bool time_augmented = false) {
        return Mlp({DenseLayer{std::move(w), std::move(b), act}}, time_augmented);
    }

    std::size_t input_dim() const {
        return layers_.empty() ? 0 : layers_.front().weight.cols() - (time_augmented_ ? 1 : 0);
    }
    std::size_t output_dim() const { return layers_.empty() ? 0 : layers_.back().weight.rows(); }
    bool time_augmented() const noexcept { return time_augmented_; }
    bool empty() const noexcept { return layers_.empty(); }
    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
    std::vector<DenseLayer>& layers() noexcept { return layers_; }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& L : layers_) n += L.weight.data().size() + L.bias.size();
        return n;
    }

    Vec flatten() const {
        Vec p;
        p.reserve(param_count());
        for (const auto& L : layers_) {
            p.insert(p.end(), L.weight.data().begin(), L.weight.data().end());
            p.insert(p.end(), L.bias.begin(), L.bias.end());
        }
        return p;
    }

    void unflatten(std::span<const double> p) {
        require_dim(p.size() == param_count(), "Mlp::unflatten: parameter extent mismatch");
        std::size_t k = 0;
        for (auto& L : layers_) {
            for (double& x : L.weight.data()) x = p[k++];
            for (double& x : L.bias) x = p[k++];
        }
    }

    Vec forward(std::span<const double> x, double t) const {
        MlpWorkspace ws;
        Vec out(output_dim());
        forward_into(x, t, out, ws);
        return out;
    }

    void forward_into(std::span<const double> x, double t, std::span<double> out,
                      MlpWorkspace& ws) const {
        require_dim(x.size() == input_dim(),
                    "Mlp::forward: input extent " + std::to_string(x.size()) + " != " +
                        std::to_string(input_dim()));
        require_dim(out.size() == output_dim(), "Mlp::forward: output extent mismatch");
        run_forward(x, t, ws);
        const Vec& y = ws.post.back();
        std::copy(y.begin(), y.end(), out.begin());
    }

    VjpResult vjp(std::span<const double> x, double t, std::span<const double> cotangent) const {
        MlpWorkspace ws;
        VjpResult r{Vec(input_dim(), 0.0), Vec(param_count(), 0.0)};
        vjp_accumulate(x, t, cotangent, r.grad_input, r.grad_params, ws);
        return r;
    }

    /// Writes cotangent^T dy/dx into `grad_input` (skipped when empty) and
    /// adds scale * cotangent^T dy/dtheta into `grad_params` (skipped when empty).
    void vjp_accumulate(std::span<const double> x, double t, std::span<const double> cotangent,
                        std::span<double> grad_input, std::span<double> grad_params,
                        MlpWorkspace& ws, double scale = 1.0) const {
        require_dim(cotangent.size() == output_dim(), "Mlp::vjp: cotangent extent mismatch");
        require_dim(grad_input.empty() || grad_input.size() == input_dim(),
                    "Mlp::vjp: grad_input extent mismatch");
        require_dim(grad_params.empty() || grad_params.size() == param_count(),
                    "Mlp::vjp: grad_params extent mismatch");
        require_dim(x.size() == input_dim(), "Mlp::vjp: input extent mismatch");
        run_forward(x, t, ws);

        const std::size_t nl = layers_.size();
        ws.delta.assign(cotangent.begin(), cotangent.end());
        std::size_t offset = param_count();
        for (std::size_t li = nl; li-- > 0;) {
            const auto& L = layers_[li];
            const Vec& z = ws.pre[li];
            const Vec& a_in = ws.post[li];
            const std::size_t out = L.weight.rows();
            const std::size_t in = L.weight.cols();
            for (std::size_t i = 0; i < out; ++i) ws.delta[i] *= L.activation.derivative(z[i]);

            offset -= out * in + out;
            if (!grad_params.empty()) {
                double* gw = grad_params.data() + offset;
                for (std::size_t i = 0; i < out; ++i) {
                    const double di = scale * ws.delta[i];
                    if (di == 0.0) continue;
                    double* row = gw + i * in;
                    for (std::size_t j = 0; j < in; ++j) row[j] += di * a_in[j];
                }
                double* gb = gw + out * in;
                for (std::size_t i = 0; i < out; ++i) gb[i] += scale * ws.delta[i];
            }
            if (li == 0 && grad_input.empty()) break;

            ws.delta_prev.assign(in, 0.0);
            for (std::size_t i = 0; i < out; ++i) {
                const double di = ws.delta[i];
                if (di == 0.0) continue;
                const auto wrow = L.weight.row(i);
                for (std::size_t j = 0; j < in; ++j) ws.delta_prev[j] += di * wrow[j];
            }
            std::swap(ws.delta, ws.delta_prev);
        }
        if (!grad_input.empty())
            for (std::size_t j = 0; j < grad_input.size(); ++j) grad_input[j] = ws.delta[j];
    }

    /// Full d output / d input, assembled one row per unit cotangent.
    Matrix jacobian_wrt_input(std::span<const double> x, double t) const {
        MlpWorkspace ws;
        Matrix jac(output_dim(), input_dim());
        Vec e(output_dim(), 0.0);
        for (std::size_t r = 0; r < output_dim(); ++r) {
            e.assign(output_dim(), 0.0);
            e[r] = 1.0;
            vjp_accumulate(x, t, e, jac.row(r), {}, ws);
        }
        return jac;
    }

private:
    void run_forward(std::span<const double> x, double t, MlpWorkspace& ws) const {
        const std::size_t nl = layers_.size();
        ws.pre.resize(nl);
        ws.post.resize(nl + 1);
        Vec& in0 = ws.post[0];
        in0.assign(x.begin(), x.end());
        if (time_augmented_) in0.push_back(t);
        for (std::size_t l = 0; l < nl; ++l) {
            const auto& L = layers_[l];
            const std::size_t out = L.weight.rows();
            const std::size_t in = L.weight.cols();
            Vec& z = ws.pre[l];
            Vec& a = ws.post[l + 1];
            const Vec& prev = ws.post[l];
            z.resize(out);
            a.resize(out);
            for (std::size_t i = 0; i < out; ++i) {
                const auto wrow = L.weight.row(i);
                double s = L.bias[i];
                for (std::size_t j = 0; j < in; ++j) s += wrow[j] * prev[j];
                z[i] = s;
                a[i] = L.activation.value(s);
            }
        }
    }

    std::vector<DenseLayer> layers_;
    bool time_augmented_ = false;
};

}  // namespace hbnode
