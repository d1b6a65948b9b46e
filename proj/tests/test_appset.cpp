#include <cmath>

#include "doctest.h"
#include "oid/appset.hpp"
#include "oid/rng.hpp"
#include "test_models.hpp"

using namespace oid;

TEST_CASE("chi2_percentile: closed forms at dof 2") {
    // dof 2 has CDF 1 - exp(-x/2), so the percentile is -2 ln(1 - alpha).
    CHECK(chi2_percentile(0.95, 2) == doctest::Approx(5.991464547107979).epsilon(1e-9));
    CHECK(chi2_percentile(0.5, 2) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("chi2_percentile: inverts the CDF to 1e-8") {
    for (int dof : {1, 2, 3, 4, 7, 12}) {
        for (double alpha : {0.01, 0.25, 0.5, 0.9, 0.95, 0.999}) {
            const double x = chi2_percentile(alpha, dof);
            CHECK(std::abs(chi2_cdf(x, dof) - alpha) <= 1e-8);
        }
    }
}

TEST_CASE("chi2_percentile: vanishes as alpha -> 0+") {
    CHECK(chi2_percentile(1e-12, 3) < 1e-3);
}

TEST_CASE("numerical_hessian: quadratic bowl gives 2I") {
    Vector theta0 = Vector::Zero(3);
    auto f = [](const Vector& th) { return th.squaredNorm(); };
    Matrix h = numerical_hessian(f, theta0);
    CHECK((h - 2.0 * Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("numerical_hessian: anisotropic quadratic") {
    Vector theta0(2);
    theta0 << 1.5, -2.0;
    auto f = [&](const Vector& th) {
        return (th(0) - 1.5) * (th(0) - 1.5) + 10.0 * (th(1) + 2.0) * (th(1) + 2.0);
    };
    Matrix h = numerical_hessian(f, theta0);
    CHECK(h(0, 0) == doctest::Approx(2.0).epsilon(1e-4));
    CHECK(h(1, 1) == doctest::Approx(20.0).epsilon(1e-4));
    CHECK(std::abs(h(0, 1)) < 1e-4);
}

TEST_CASE("numerical_hessian: materially negative curvature is rejected") {
    Vector theta0 = Vector::Zero(2);
    auto f = [](const Vector& th) { return th(0) * th(0) - th(1) * th(1); };
    CHECK_THROWS_AS(numerical_hessian(f, theta0), std::invalid_argument);
}

TEST_CASE("numerical_hessian: symmetry after symmetrization") {
    auto m = twotank_model();
    Matrix h = vapp_hessian(m, m.theta_g, OpenLoopStepScenario{1.0, 50});
    CHECK((h - h.transpose()).norm() <= 1e-8 * h.norm());
    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    CHECK(es.eigenvalues().minCoeff() >= 0.0);  // clamped PSD
}

TEST_CASE("vapp_output_mismatch: zero at the true parameters") {
    auto m = fir_model({10.0, -9.0});
    CHECK(vapp_output_mismatch(m, m.theta_g, m.theta_g, OpenLoopStepScenario{}) == 0.0);
    MpcScenario mpc;
    mpc.horizon = 1;
    mpc.reference_amplitude = 1.5;
    mpc.u_max = 0.5;
    mpc.y_max = 5.0;
    CHECK(vapp_output_mismatch(m, m.theta_g, m.theta_g, mpc) == 0.0);
}

TEST_CASE("vapp_output_mismatch: single-tap perturbation closed form") {
    // Unit step through the two-tap FIR: perturbing tap 1 by delta changes
    // y(t) by delta for t >= 2, so the mean square is delta^2 (N-1)/N.
    auto m = fir_model({10.0, -9.0});
    const int N = 50;
    const double delta = 0.37;
    Vector th = m.theta_g;
    th(0) += delta;
    const double v = vapp_output_mismatch(m, th, m.theta_g, OpenLoopStepScenario{1.0, N});
    CHECK(v == doctest::Approx(delta * delta * (N - 1) / static_cast<double>(N)).epsilon(1e-12));
}

TEST_CASE("vapp_output_mismatch: symmetric perturbations agree to first order") {
    auto m = fir_model({10.0, -9.0});
    const double delta = 1e-5;
    Vector tp = m.theta_g, tm = m.theta_g;
    tp(1) += delta;
    tm(1) -= delta;
    const double vp = vapp_output_mismatch(m, tp, m.theta_g, OpenLoopStepScenario{});
    const double vm = vapp_output_mismatch(m, tm, m.theta_g, OpenLoopStepScenario{});
    CHECK(std::abs(vp - vm) <= 1e-6 * std::max(vp, vm));
}

TEST_CASE("vapp hessian: FIR example scenario vs a step-halving oracle") {
    // Independent oracle: plain central differences with two step sizes and
    // Richardson extrapolation, different steps from the implementation.
    auto m = fir_model({10.0, -9.0});
    MpcScenario sc;
    sc.horizon = 1;
    sc.q_weight = 1.0;
    sc.r_weight = 0.0;
    sc.reference_amplitude = 1.5;
    sc.length = 50;
    sc.u_max = 0.5;
    sc.y_max = 5.0;
    Matrix h = vapp_hessian(m, m.theta_g, sc);

    auto f = [&](const Vector& th) { return vapp_output_mismatch(m, th, m.theta_g, sc); };
    auto stencil = [&](double step) {
        Matrix out(2, 2);
        Vector h2(2);
        for (int i = 0; i < 2; ++i) h2(i) = step * std::max(1.0, std::abs(m.theta_g(i)));
        const double f0 = f(m.theta_g);
        for (int i = 0; i < 2; ++i) {
            Vector tp = m.theta_g, tm = m.theta_g;
            tp(i) += h2(i);
            tm(i) -= h2(i);
            out(i, i) = (f(tp) - 2 * f0 + f(tm)) / (h2(i) * h2(i));
        }
        Vector tpp = m.theta_g, tpm = m.theta_g, tmp = m.theta_g, tmm = m.theta_g;
        tpp(0) += h2(0); tpp(1) += h2(1);
        tpm(0) += h2(0); tpm(1) -= h2(1);
        tmp(0) -= h2(0); tmp(1) += h2(1);
        tmm(0) -= h2(0); tmm(1) -= h2(1);
        out(0, 1) = out(1, 0) = (f(tpp) - f(tpm) - f(tmp) + f(tmm)) / (4 * h2(0) * h2(1));
        return out;
    };
    Matrix oracle = (4.0 * stencil(2.5e-5) - stencil(5e-5)) / 3.0;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            CHECK(h(i, j) == doctest::Approx(oracle(i, j)).epsilon(5e-4));  // 3 significant digits
}

TEST_CASE("lmi_satisfied: equality case has zero margin") {
    Matrix vpp(2, 2);
    vpp << 3.0, 1.0, 1.0, 2.0;
    const double gamma = 40.0, alpha = 0.9;
    const double chi2 = chi2_percentile(alpha, 2);
    Matrix i_f = 0.5 * gamma * chi2 * vpp;
    auto r = lmi_satisfied(i_f, vpp, gamma, alpha, 2);
    CHECK(r.satisfied);
    CHECK(std::abs(r.margin) < 1e-9);
}

TEST_CASE("lmi_satisfied: doubling the information gives margin (gamma/2) lambda_min(V'')") {
    Matrix vpp(2, 2);
    vpp << 3.0, 1.0, 1.0, 2.0;
    const double gamma = 40.0, alpha = 0.9;
    const double chi2 = chi2_percentile(alpha, 2);
    Matrix i_f = gamma * chi2 * vpp;  // 2x the boundary
    auto r = lmi_satisfied(i_f, vpp, gamma, alpha, 2);
    Eigen::SelfAdjointEigenSolver<Matrix> es(vpp);
    CHECK(r.satisfied);
    CHECK(r.margin == doctest::Approx(0.5 * gamma * es.eigenvalues().minCoeff()).epsilon(1e-9));
}

TEST_CASE("containment: eigenvalue test agrees with boundary sampling on random 2-D pairs") {
    Rng rng(31);
    int tested = 0;
    while (tested < 100) {
        Matrix a = Matrix::NullaryExpr(2, 2, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
        Matrix b = Matrix::NullaryExpr(2, 2, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
        Matrix vpp = a * a.transpose() + 0.05 * Matrix::Identity(2, 2);
        Matrix fim = 20.0 * (b * b.transpose()) + 0.05 * Matrix::Identity(2, 2);
        const double gamma = 2.0, alpha = 0.95;
        Vector center = Vector::Zero(2);
        auto pair = EllipsoidPair::make(vpp, fim, center, gamma, alpha);
        auto lmi = pair.containment(0.0);
        const double scale = (fim / pair.chi2_level + 0.5 * gamma * vpp).norm();
        if (std::abs(lmi.margin) < 1e-3 * scale) continue;  // near-ties beat the sampling grid

        // dense sampling of the identification-ellipsoid boundary
        Matrix boundary = pair.boundary_slice(0, 1, /*app=*/false, 720);
        bool all_inside = true;
        for (Eigen::Index k = 0; k < boundary.rows(); ++k) {
            Vector th = boundary.row(k).transpose();
            if (!pair.in_app(Vector(th * (1.0 - 1e-9)))) all_inside = false;
        }
        CHECK(all_inside == lmi.satisfied);
        ++tested;
    }
}

TEST_CASE("ellipsoid membership uses the exact quadratic forms") {
    Matrix vpp = Matrix::Identity(2, 2);
    Matrix fim = 100.0 * Matrix::Identity(2, 2);
    Vector center(2);
    center << 1.0, -1.0;
    auto pair = EllipsoidPair::make(vpp, fim, center, 8.0, 0.95);
    // E_app: ||d||^2 <= 2/8 -> radius 0.5
    CHECK(pair.in_app(center));
    CHECK(pair.in_app(Vector(center + Vector(Vector::Constant(2, 0.3)))));
    CHECK(!pair.in_app(Vector(center + Vector(Vector::Constant(2, 0.4)))));
    CHECK(pair.in_id(Vector(center + Vector(Vector::Constant(2, 0.1)))));
}

TEST_CASE("experiment spec validation") {
    ExperimentSpec s;
    s.gamma = 100.0;
    s.alpha = 0.95;
    s.u_max = 0.5;
    s.y_max = 5.0;
    s.horizon_nu = 5;
    s.truncation_n = 3;
    CHECK_NOTHROW(s.validate());
    s.alpha = 1.0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}
