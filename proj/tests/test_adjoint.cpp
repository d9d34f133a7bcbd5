#include <catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <vector>

#include "hbnode/hbnode.hpp"

using namespace hbnode;
using Catch::Approx;

namespace {

Eigen::MatrixXd to_eigen(const Matrix& m) {
    Eigen::MatrixXd e(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
    return e;
}

ModelSpec linear_node(const Matrix& A) {
    ModelSpec s;
    s.family = Family::node;
    s.f_net = Mlp::affine(A, Vec(A.rows(), 0.0));
    return s;
}

ModelSpec scalar_hbnode(double theta, double gamma, bool train_gamma) {
    ModelSpec s;
    s.family = Family::hbnode;
    s.f_net = Mlp::affine(Matrix{{theta}}, Vec{0.0});
    s.epsilon = 2.0 * gamma;
    s.gamma_param = 0.0;
    s.gamma_trainable = train_gamma;
    return s;
}

double final_h(const ModelSpec& s, const Vec& z0, double T, double tol) {
    return solve_forward(s, z0, Vec{0.0, T}, SolverConfig::dopri(tol)).final_state()[0];
}

ModelSpec random_spec(Family fam, std::size_t n, Rng& rng) {
    ModelSpec s;
    s.family = fam;
    s.aug_dim = fam == Family::anode ? 1 : 0;
    const std::size_t out = n + s.aug_dim;
    const std::size_t in = fam == Family::sonode ? 2 * n : out;
    s.f_net = Mlp::create({in, 6, out}, {Activation::tanh(), Activation::identity()}, true, rng);
    Vec p = s.f_net.flatten();
    for (double& v : p) v += 0.2 * rng.normal();
    s.f_net.unflatten(p);
    s.gamma_param = rng.uniform(-1.0, 1.0);
    s.xi_param = rng.uniform(-1.0, 1.0);
    return s;
}

}  // namespace

TEST_CASE("free hbnode adjoint is linear in time", "[adjoint]") {
    ModelSpec s = scalar_hbnode(0.0, 1.0, false);
    s.gamma_param = -800.0;
    REQUIRE(s.gamma() == 0.0);
    const double T = 2.0;
    const Vec zT{0.5, 1.0}, aT{0.7, -0.3};
    const Vec times{T, 1.5, 0.5, 0.0};
    BackwardOptions opts;
    opts.with_params = false;
    const auto r = solve_adjoint_system(s, zT, aT, times, SolverConfig::dopri(1e-10), opts);
    for (const auto& cp : r.checkpoints) {
        CHECK(cp.state[2] == Approx(0.7).margin(1e-12));
        CHECK(cp.state[3] == Approx(-0.3 - 0.7 * (cp.time - T)).margin(1e-10));
    }
    const auto d = adjoint_rhs(s, 0.3, zT, aT);
    CHECK(d.da == Vec{0.0, -0.7});
}

TEST_CASE("linear node adjoint matches the matrix exponential", "[adjoint]") {
    Rng rng(12);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t n = 3;
        Matrix A(n, n);
        for (double& v : A.data()) v = rng.uniform(-1.0, 1.0);
        const ModelSpec s = linear_node(A);
        const double T = 1.5;
        Vec zT(n), aT(n);
        for (double& v : zT) v = rng.uniform(-1.0, 1.0);
        for (double& v : aT) v = rng.uniform(-1.0, 1.0);
        const Vec times{T, 1.0, 0.25, 0.0};
        BackwardOptions opts;
        opts.with_params = false;
        const auto r = solve_adjoint_system(s, zT, aT, times, SolverConfig::dopri(1e-12), opts);
        const Eigen::MatrixXd At = to_eigen(A).transpose();
        const Eigen::Map<const Eigen::VectorXd> a0(aT.data(), static_cast<Eigen::Index>(n));
        for (const auto& cp : r.checkpoints) {
            const Eigen::VectorXd expect = (At * (T - cp.time)).exp() * a0;
            for (std::size_t i = 0; i < n; ++i)
                CHECK(std::abs(cp.state[n + i] - expect(static_cast<Eigen::Index>(i))) <= 1e-8);
        }
        const auto g = backward_pass(s, 0.0, T, zT, aT, SolverConfig::dopri(1e-12));
        const Eigen::VectorXd expect0 = (At * T).exp() * a0;
        for (std::size_t i = 0; i < n; ++i)
            CHECK(std::abs(g.grad_initial_state[i] - expect0(static_cast<Eigen::Index>(i))) <= 1e-7);
    }
}

TEST_CASE("ghbnode with identity gate and no skip reduces to hbnode", "[adjoint]") {
    Rng rng(8);
    ModelSpec hb = random_spec(Family::hbnode, 3, rng);
    ModelSpec gh = hb;
    gh.family = Family::ghbnode;
    gh.sigma = Activation::identity();
    gh.xi_param = -800.0;
    gh.xi_trainable = false;
    REQUIRE(gh.xi() == 0.0);
    for (int k = 0; k < 10; ++k) {
        Vec z(6), a(6);
        for (double& v : z) v = rng.uniform(-2.0, 2.0);
        for (double& v : a) v = rng.uniform(-2.0, 2.0);
        const double t = rng.uniform(0.0, 1.0);
        const auto x = adjoint_rhs(hb, t, z, a), y = adjoint_rhs(gh, t, z, a);
        CHECK(x.dz == y.dz);
        CHECK(x.da == y.da);
        CHECK(x.dg == y.dg);
    }
}

TEST_CASE("zero cotangent gives zero gradients", "[adjoint]") {
    Rng rng(3);
    for (Family f : kAllFamilies) {
        const ModelSpec s = random_spec(f, 2, rng);
        const Vec z0(s.state_dim(), 0.4);
        const auto fwd = solve_forward(s, z0, Vec{0.0, 1.0}, SolverConfig::dopri(1e-8));
        const auto r = backward_pass(s, fwd, Vec(s.state_dim(), 0.0), SolverConfig::dopri(1e-8));
        CHECK(r.backward_nfe > 0);
        CHECK(r.grad_params.size() == ode_param_count(s));
        for (double g : r.grad_params) CHECK(g == 0.0);
        for (double g : r.grad_initial_state) CHECK(g == 0.0);
    }
}

TEST_CASE("scalar hbnode parameter gradient against finite differences", "[adjoint]") {
    const double tol = 1e-10, eps = 1e-5;
    const ModelSpec s = scalar_hbnode(-1.0, 0.5, false);
    const Vec z0{1.0, 0.0};
    const auto fwd = solve_forward(s, z0, Vec{0.0, 1.0}, SolverConfig::dopri(tol));
    const auto r = backward_pass(s, fwd, Vec{1.0, 0.0}, SolverConfig::dopri(tol));
    REQUIRE(r.grad_params.size() == 2);
    ModelSpec sp = s, sm = s;
    sp.f_net.layers()[0].weight(0, 0) += eps;
    sm.f_net.layers()[0].weight(0, 0) -= eps;
    const double fd = (final_h(sp, z0, 1.0, tol) - final_h(sm, z0, 1.0, tol)) / (2 * eps);
    CHECK(std::abs(r.grad_params[0] - fd) <= 1e-4 * std::abs(fd));
}

TEST_CASE("damping parameter gradient follows the chain rule", "[adjoint]") {
    const double tol = 1e-10, eps = 1e-5;
    ModelSpec s = scalar_hbnode(-1.0, 0.5, true);
    s.epsilon = 1.3;
    s.gamma_param = 0.4;
    const Vec z0{1.0, 0.2};
    const auto fwd = solve_forward(s, z0, Vec{0.0, 1.0}, SolverConfig::dopri(tol));
    const auto r = backward_pass(s, fwd, Vec{1.0, 0.0}, SolverConfig::dopri(tol));
    REQUIRE(r.grad_params.size() == 3);
    const double g_omega = r.grad_params[2];

    ModelSpec sp = s, sm = s;
    sp.gamma_param += eps;
    sm.gamma_param -= eps;
    const double fd_omega = (final_h(sp, z0, 1.0, tol) - final_h(sm, z0, 1.0, tol)) / (2 * eps);
    CHECK(std::abs(g_omega - fd_omega) <= 1e-5 * std::abs(fd_omega));

    // dL/dgamma by perturbing gamma directly through epsilon at fixed omega.
    const double sig = Activation::sigmoid_of(s.gamma_param);
    ModelSpec gp = s, gm = s;
    gp.epsilon = (s.gamma() + eps) / sig;
    gm.epsilon = (s.gamma() - eps) / sig;
    const double dL_dgamma = (final_h(gp, z0, 1.0, tol) - final_h(gm, z0, 1.0, tol)) / (2 * eps);
    CHECK(g_omega == Approx(dL_dgamma * s.epsilon * sig * (1.0 - sig)).epsilon(1e-5));
}

TEST_CASE("gradient oracle for every family", "[adjoint][gradcheck]") {
    for (Family f : kAllFamilies) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            const auto r = run_grad_check(f, seed);
            INFO(to_string(f) << " seed " << seed << " rel " << r.max_rel_error);
            CHECK(r.params <= 100 + r.state_dim);
            CHECK(r.state_dim <= 6);
            CHECK(r.passed);
        }
    }
}

TEST_CASE("second-order adjoint structure", "[adjoint]") {
    SECTION("free field") {
        ModelSpec s = scalar_hbnode(0.0, 0.6, false);
        const auto fwd = solve_forward(s, Vec{1.0, 0.5}, Vec{0.0, 0.5, 1.0, 2.0}, SolverConfig::dopri(1e-10));
        const auto rep = hbnode_second_order_adjoint_check(s, fwd, Vec{1.0}, SolverConfig::dopri(1e-10));
        CHECK(rep.max_equivalence_gap <= 1e-10);
        CHECK(rep.max_identity_residual <= 1e-10);
    }
    SECTION("scalar restoring field") {
        const ModelSpec s = scalar_hbnode(-1.0, 0.9, false);
        Vec times;
        for (int k = 0; k <= 20; ++k) times.push_back(0.25 * k);
        const auto fwd = solve_forward(s, Vec{1.0, 0.0}, times, SolverConfig::dopri(1e-10));
        const auto rep = hbnode_second_order_adjoint_check(s, fwd, Vec{1.0}, SolverConfig::dopri(1e-10));
        CHECK(rep.max_equivalence_gap <= 1e-6);
        CHECK(rep.max_identity_residual <= 1e-6);
    }
    SECTION("random four-dimensional field") {
        Rng rng(21);
        ModelSpec s = random_spec(Family::hbnode, 4, rng);
        Vec times;
        for (int k = 0; k <= 10; ++k) times.push_back(0.2 * k);
        Vec z0(8);
        for (double& v : z0) v = rng.uniform(-1.0, 1.0);
        const auto fwd = solve_forward(s, z0, times, SolverConfig::dopri(1e-9));
        const auto rep = hbnode_second_order_adjoint_check(s, fwd, Vec{1.0, -0.5, 0.3, 0.8}, SolverConfig::dopri(1e-9));
        CHECK(rep.max_identity_residual <= 1e-5);
        CHECK(rep.max_equivalence_gap <= 1e-6);
    }
    SECTION("other families rejected") {
        ModelSpec s = scalar_hbnode(-1.0, 0.9, false);
        const auto fwd = solve_forward(s, Vec{1.0, 0.0}, Vec{0.0, 1.0}, SolverConfig::dopri(1e-8));
        s.family = Family::ghbnode;
        CHECK_THROWS_AS(hbnode_second_order_adjoint_check(s, fwd, Vec{1.0}, SolverConfig::dopri(1e-8)),
                        std::invalid_argument);
    }
}

TEST_CASE("clipping bounds the adjoint norm", "[adjoint]") {
    ModelSpec s = linear_node(Matrix{{3.0}});
    const Vec zT{1.0}, aT{5.0};
    BackwardOptions opts;
    opts.clip_threshold = 2.0;
    opts.record_trace = true;
    const auto r = backward_pass(s, 0.0, 2.0, zT, aT, SolverConfig::dopri(1e-8), opts);
    REQUIRE(!r.adjoint_trace.empty());
    CHECK(r.adjoint_trace.front().second == 5.0);
    for (std::size_t k = 1; k < r.adjoint_trace.size(); ++k)
        CHECK(r.adjoint_trace[k].second <= 2.0 * (1.0 + 1e-12));
    CHECK(std::abs(r.grad_initial_state[0]) <= 2.0 * (1.0 + 1e-12));
    opts.clip_threshold.reset();
    const auto u = backward_pass(s, 0.0, 2.0, zT, aT, SolverConfig::dopri(1e-8), opts);
    CHECK(u.grad_initial_state[0] == Approx(5.0 * std::exp(6.0)).epsilon(1e-6));
}

TEST_CASE("trace recording does not change the result", "[adjoint]") {
    Rng rng(14);
    const ModelSpec s = random_spec(Family::ghbnode, 2, rng);
    const Vec z0{0.3, -0.1, 0.2, 0.5};
    const auto fwd = solve_forward(s, z0, Vec{0.0, 1.0}, SolverConfig::dopri(1e-8));
    const Vec dL{1.0, 0.0, 0.0, 0.0};
    BackwardOptions a, b;
    b.record_trace = true;
    const auto x = backward_pass(s, fwd, dL, SolverConfig::dopri(1e-8), a);
    const auto y = backward_pass(s, fwd, dL, SolverConfig::dopri(1e-8), b);
    CHECK(x.grad_params == y.grad_params);
    CHECK(x.grad_initial_state == y.grad_initial_state);
    CHECK(x.backward_nfe == y.backward_nfe);
    CHECK(x.adjoint_trace.empty());
    CHECK(!y.adjoint_trace.empty());
    const auto z = backward_pass(s, fwd, dL, SolverConfig::dopri(1e-8), a);
    CHECK(z.grad_params == x.grad_params);
}

TEST_CASE("adjoint shape errors", "[adjoint]") {
    const ModelSpec s = linear_node(Matrix{{1.0, 0.0}, {0.0, 1.0}});
    CHECK_THROWS_AS(backward_pass(s, 0.0, 1.0, Vec{1.0, 1.0}, Vec{1.0}, SolverConfig::dopri(1e-6)), DimensionError);
    CHECK_THROWS_AS(adjoint_rhs(s, 0.0, Vec{1.0}, Vec{1.0, 1.0}), DimensionError);
}
