#pragma once

#include <cmath>
#include <string>

namespace hbnode {

/// Pointwise nonlinearity with an exact derivative.
///
/// At kinks the right derivative is used: relu'(0) = 0 is the one exception
/// (the left value), matching the usual framework convention; hardtanh is
/// 1 at `lo` and 0 at `hi`.
struct Activation {
    enum class Kind { identity, tanh, relu, leaky_relu, elu, sigmoid, softplus, hardtanh };

    Kind kind = Kind::identity;
    double p0 = 0.0;  // leaky_relu slope, hardtanh lower bound
    double p1 = 0.0;  // hardtanh upper bound

    static Activation identity() { return {}; }
    static Activation tanh() { return {Kind::tanh}; }
    static Activation relu() { return {Kind::relu}; }
    static Activation leaky_relu(double slope) { return {Kind::leaky_relu, slope}; }
    static Activation elu() { return {Kind::elu}; }
    static Activation sigmoid() { return {Kind::sigmoid}; }
    static Activation softplus() { return {Kind::softplus}; }
    static Activation hardtanh(double lo, double hi) { return {Kind::hardtanh, lo, hi}; }

    double value(double x) const {
        switch (kind) {
            case Kind::identity: return x;
            case Kind::tanh: return std::tanh(x);
            case Kind::relu: return x > 0.0 ? x : 0.0;
            case Kind::leaky_relu: return x >= 0.0 ? x : p0 * x;
            case Kind::elu: return x >= 0.0 ? x : std::expm1(x);
            case Kind::sigmoid: return sigmoid_of(x);
            case Kind::softplus: return softplus_of(x);
            case Kind::hardtanh: return x < p0 ? p0 : (x > p1 ? p1 : x);
        }
        return x;
    }

    double derivative(double x) const {
        switch (kind) {
            case Kind::identity: return 1.0;
            case Kind::tanh: {
                const double y = std::tanh(x);
                return 1.0 - y * y;
            }
            case Kind::relu: return x > 0.0 ? 1.0 : 0.0;
            case Kind::leaky_relu: return x >= 0.0 ? 1.0 : p0;
            case Kind::elu: return x >= 0.0 ? 1.0 : std::exp(x);
            case Kind::sigmoid: {
                const double s = sigmoid_of(x);
                return s * (1.0 - s);
            }
            case Kind::softplus: return sigmoid_of(x);
            case Kind::hardtanh: return (x >= p0 && x < p1) ? 1.0 : 0.0;
        }
        return 1.0;
    }

    std::string name() const {
        switch (kind) {
            case Kind::identity: return "identity";
            case Kind::tanh: return "tanh";
            case Kind::relu: return "relu";
            case Kind::leaky_relu: return "leaky_relu";
            case Kind::elu: return "elu";
            case Kind::sigmoid: return "sigmoid";
            case Kind::softplus: return "softplus";
            case Kind::hardtanh: return "hardtanh";
        }
        return "?";
    }

    static double sigmoid_of(double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
    }

    static double softplus_of(double x) {
        return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::abs(x)));
    }
};

}  // namespace hbnode
