#include <cmath>

#include "doctest.h"
#include "oid/fisher.hpp"
#include "oid/identify.hpp"
#include "oid/monte_carlo.hpp"
#include "oid/mpc.hpp"
#include "oid/rng.hpp"
#include "test_models.hpp"

using namespace oid;

TEST_CASE("identify: FIR on noiseless data is exact") {
    auto m = fir_model({10.0, -9.0});
    Rng rng(71);
    Matrix u(40, 1);
    for (int t = 0; t < 40; ++t) u(t, 0) = rng.uniform() > 0.5 ? 0.5 : -0.5;
    Matrix y = simulate(m, u);
    auto r = identify(m, u, y);
    CHECK(r.converged);
    CHECK((r.theta_hat - m.theta_g).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("identify: Gauss-Newton on noiseless two-tank data recovers theta0") {
    auto m = twotank_model();
    Rng rng(73);
    Matrix u(60, 1);
    for (int t = 0; t < 60; ++t) u(t, 0) = rng.uniform() > 0.5 ? 0.5 : -0.5;
    Matrix y = simulate(m, u);
    auto r = identify(m, u, y);
    CHECK(r.converged);
    CHECK(r.grad_norm <= 1e-8);
    CHECK((r.theta_hat - m.theta_g).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("identify: estimate covariance tracks the inverse FIM") {
    // Persistently exciting random +-0.5 input; the sample covariance over
    // 500 runs should match I_F^{-1} within 30% in Frobenius norm.
    auto m = fir_model({10.0, -9.0});
    const int T = 60, runs = 500;
    Rng urng(79);
    Matrix u(T, 1);
    for (int t = 0; t < T; ++t) u(t, 0) = urng.uniform() > 0.5 ? 0.5 : -0.5;
    auto bank = sensitivity_impulse_responses(m, m.theta_g, 3, 5);
    const NoiseWhitener wh = NoiseWhitener::from_covariance(m.lambda);
    Matrix fim = batch_fim(bank, wh, u);
    Matrix fim_inv = fim.inverse();

    Matrix y_clean = simulate(m, u);
    Matrix cov = Matrix::Zero(2, 2);
    for (int run = 0; run < runs; ++run) {
        Rng rng = Rng::stream(1234, run);
        Matrix y = y_clean;
        for (int t = 0; t < T; ++t) y(t, 0) += rng.normal();
        auto r = identify(m, u, y);
        Vector d = r.theta_hat - m.theta_g;
        cov += d * d.transpose();
    }
    cov /= runs;
    CHECK((cov - fim_inv).norm() <= 0.3 * fim_inv.norm());
}

TEST_CASE("mpc: zero reference from rest keeps the input at zero") {
    auto m = twotank_model();
    auto ref = [](long) { return Vector::Zero(1); };
    Matrix y = closed_loop_outputs(m, m.theta_g, m.theta_g, 1.0, 0.001, 5, {0.5, 5.0}, ref, 20);
    CHECK(y.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mpc: unconstrained scalar horizon-1 matches the closed form") {
    // min q (c b u + c a x - r)^2 + r_w (u - u_prev)^2
    auto m = fir_model({2.0});  // y(t+1) = 2 u(t); state x = u(t-1)
    const double q_w = 1.0, r_w = 0.5, r_ref = 1.3, u_prev = -0.2;
    auto ref = [&](long) { return Vector::Constant(1, r_ref); };
    MpcController ctrl = mpc_controller(m, m.theta_g, q_w, r_w, 1, {1e9, 1e9}, ref);
    Vector x = Vector::Constant(1, 0.7);  // irrelevant for FIR order 1: y(t+1) = 2u
    const double cb = 2.0, ca_x = 0.0;
    const double expect = (q_w * cb * (r_ref - ca_x) + r_w * u_prev) / (q_w * cb * cb + r_w);
    CHECK(ctrl.compute(x, u_prev, 0) == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("mpc: two-tank step reference is tracked at steady state") {
    auto m = twotank_model();
    auto ref = [](long) { return Vector::Constant(1, 1.0); };
    Matrix y = closed_loop_outputs(m, m.theta_g, m.theta_g, 1.0, 0.001, 5, {0.5, 5.0}, ref, 80);
    CHECK(y(79, 0) == doctest::Approx(1.0).epsilon(1e-2));
}

TEST_CASE("monte_carlo: deterministic given the base seed") {
    auto m = fir_model({10.0, -9.0});
    Rng rng(83);
    Matrix u(30, 1);
    for (int t = 0; t < 30; ++t) u(t, 0) = rng.uniform() > 0.5 ? 0.5 : -0.5;
    auto bank = sensitivity_impulse_responses(m, m.theta_g, 3, 5);
    Matrix fim = batch_fim(bank, NoiseWhitener::from_covariance(m.lambda), u);
    auto pair = EllipsoidPair::make(Matrix(Matrix::Identity(2, 2)), fim, m.theta_g, 100.0, 0.95);
    auto r1 = monte_carlo(m, u, pair, 20, 999);
    auto r2 = monte_carlo(m, u, pair, 20, 999);
    REQUIRE(r1.runs.size() == r2.runs.size());
    for (size_t k = 0; k < r1.runs.size(); ++k) {
        CHECK(r1.runs[k].theta_hat(0) == r2.runs[k].theta_hat(0));  // bit-identical
        CHECK(r1.runs[k].theta_hat(1) == r2.runs[k].theta_hat(1));
        CHECK(r1.runs[k].in_id == r2.runs[k].in_id);
    }
    CHECK(r1.inside_id_fraction == r2.inside_id_fraction);
}

TEST_CASE("monte_carlo: zero runs gives an empty report") {
    auto m = fir_model({10.0, -9.0});
    Matrix u = Matrix::Constant(10, 1, 0.5);
    auto bank = sensitivity_impulse_responses(m, m.theta_g, 3, 5);
    Matrix fim = batch_fim(bank, NoiseWhitener::from_covariance(m.lambda), u);
    auto pair = EllipsoidPair::make(Matrix(Matrix::Identity(2, 2)), fim, m.theta_g, 100.0, 0.95);
    auto r = monte_carlo(m, u, pair, 0, 1);
    CHECK(r.runs.empty());
    CHECK(r.inside_id_fraction == 0.0);
}

TEST_CASE("monte_carlo: lambda scale zero collapses the estimates onto theta0") {
    auto m = twotank_model();
    Rng rng(89);
    Matrix u(40, 1);
    for (int t = 0; t < 40; ++t) u(t, 0) = rng.uniform() > 0.5 ? 0.5 : -0.5;
    auto bank = sensitivity_impulse_responses(m, m.theta_g, 16, 5);
    Matrix fim = batch_fim(bank, NoiseWhitener::from_covariance(m.lambda), u);
    auto pair = EllipsoidPair::make(Matrix(Matrix::Identity(4, 4)), fim, m.theta_g, 100.0, 0.95);
    auto r = monte_carlo(m, u, pair, 5, 7, /*lambda_scale=*/0.0);
    CHECK(r.inside_id_fraction == 1.0);
    CHECK(r.inside_app_fraction == 1.0);
    CHECK(r.flagged_runs == 0);
}

TEST_CASE("monte_carlo: containment implies app fraction >= id fraction") {
    auto m = fir_model({10.0, -9.0});
    Rng rng(97);
    Matrix u(50, 1);
    for (int t = 0; t < 50; ++t) u(t, 0) = rng.uniform() > 0.5 ? 0.5 : -0.5;
    auto bank = sensitivity_impulse_responses(m, m.theta_g, 3, 5);
    Matrix fim = batch_fim(bank, NoiseWhitener::from_covariance(m.lambda), u);
    // pick a demand loose enough that E_SI is inside E_app
    Matrix vpp = 1e-4 * Matrix::Identity(2, 2);
    auto pair = EllipsoidPair::make(vpp, fim, m.theta_g, 10.0, 0.95);
    REQUIRE(pair.containment().satisfied);
    auto r = monte_carlo(m, u, pair, 100, 11);
    CHECK(r.inside_app_fraction >= r.inside_id_fraction);
}

TEST_CASE("mpc: unreachable output band saturates at the input bounds with a flag") {
    // Marginally stable first-order plant parked far outside a tight output
    // band that u_max cannot reach within the horizon.
    ParametricLtiModel m;
    StateSpaceStructure s;
    s.a.base = Matrix::Constant(1, 1, 1.0);
    s.b.base = Matrix::Constant(1, 1, 1.0);
    s.c.base = Matrix::Constant(1, 1, 1.0);
    m.structure = std::move(s);
    m.theta_g = Vector(0);
    m.lambda = Matrix::Constant(1, 1, 1.0);
    auto ref = [](long) { return Vector::Zero(1); };
    MpcController ctrl = mpc_controller(m, m.theta_g, 1.0, 0.0, 3, {0.01, 0.1}, ref);
    const double u = ctrl.compute(Vector::Constant(1, 5.0), 0.0, 0);
    CHECK(ctrl.saturated_fallback());
    CHECK(std::abs(u) <= 0.01 + 1e-12);
    CHECK(u == doctest::Approx(-0.01).epsilon(1e-6));  // pushes toward the band
}

TEST_CASE("identify: rational transfer function via finite-difference Jacobians") {
    ParametricLtiModel m;
    m.structure = RationalTfStructure{2, 2};
    m.theta_g = Vector(4);
    m.theta_g << 0.8, 0.3, -0.9, 0.2;
    m.lambda = Matrix::Constant(1, 1, 0.01);
    Rng rng(103);
    Matrix u(80, 1);
    for (int t = 0; t < 80; ++t) u(t, 0) = rng.uniform() > 0.5 ? 1.0 : -1.0;
    Matrix y = simulate(m, u);
    SUBCASE("noiseless data recovers theta0") {
        auto r = identify(m, u, y);
        CHECK(r.converged);
        CHECK((r.theta_hat - m.theta_g).cwiseAbs().maxCoeff() < 1e-7);
    }
    SUBCASE("small noise stays near theta0") {
        Rng nrng(7);
        Matrix yn = y;
        for (int t = 0; t < 80; ++t) yn(t, 0) += 0.1 * nrng.normal();
        auto r = identify(m, u, yn);
        CHECK(r.converged);
        CHECK((r.theta_hat - m.theta_g).cwiseAbs().maxCoeff() < 0.5);
    }
}
