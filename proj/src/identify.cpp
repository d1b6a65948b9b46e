#include "oid/identify.hpp"

#include <Eigen/QR>
#include <cmath>
#include <limits>

namespace oid {

namespace {

// Stacked Jacobian d vec(yhat) / d theta: exact sensitivity recursion for
// the affine state-space map, exact sensitivity filters for rational_tf.
Matrix output_jacobian(const ParametricLtiModel& model, const Vector& theta, const Matrix& u) {
    const auto T = u.rows();
    const int ny = model.n_y;
    const int p = model.n_theta_g();
    Matrix jac(T * ny, p);
    if (const auto* ssq = std::get_if<StateSpaceStructure>(&model.structure)) {
        const Matrix A = ssq->a.materialize(theta), B = ssq->b.materialize(theta),
                     C = ssq->c.materialize(theta);
        for (int i = 0; i < p; ++i) {
            Matrix dA = Matrix::Zero(A.rows(), A.cols()), dB = Matrix::Zero(B.rows(), B.cols()),
                   dC = Matrix::Zero(C.rows(), C.cols());
            for (const auto& r : ssq->a.refs)
                if (r.theta_index == i) dA(r.row, r.col) = 1.0;
            for (const auto& r : ssq->b.refs)
                if (r.theta_index == i) dB(r.row, r.col) = 1.0;
            for (const auto& r : ssq->c.refs)
                if (r.theta_index == i) dC(r.row, r.col) = 1.0;
            Vector x = Vector::Zero(A.rows()), s = Vector::Zero(A.rows());
            for (Eigen::Index t = 0; t < T; ++t) {
                jac.block(t * ny, i, ny, 1) = dC * x + C * s;
                s = A * s + dA * x + dB * u.row(t).transpose();
                x = A * x + B * u.row(t).transpose();
            }
        }
        return jac;
    }
    // rational_tf, y = (B/A) u: d y/d b_i = q^-i (1/A) u and
    // d y/d a_j = -q^-j (1/A) y, both exact filters.
    const auto& tf = std::get<RationalTfStructure>(model.structure);
    auto inv_den_filter = [&](const Vector& x) {
        Vector v(T);
        for (Eigen::Index t = 0; t < T; ++t) {
            double acc = x(t);
            for (int j = 1; j <= tf.den_order; ++j)
                if (t - j >= 0) acc -= theta(tf.num_order + j - 1) * v(t - j);
            v(t) = acc;
        }
        return v;
    };
    const Vector w_u = inv_den_filter(u.col(0));
    const Vector w_y = inv_den_filter(simulate(model, theta, u).col(0));
    jac.setZero();
    for (int i = 1; i <= tf.num_order; ++i)
        for (Eigen::Index t = i; t < T; ++t) jac(t, i - 1) = w_u(t - i);
    for (int j = 1; j <= tf.den_order; ++j)
        for (Eigen::Index t = j; t < T; ++t) jac(t, tf.num_order + j - 1) = -w_y(t - j);
    return jac;
}

IdentifyResult identify_fir(const ParametricLtiModel& model, const Matrix& u, const Matrix& y) {
    const int m = std::get<FirStructure>(model.structure).order;
    const auto T = u.rows();
    Matrix x(T, m);
    for (Eigen::Index t = 0; t < T; ++t)
        for (int k = 1; k <= m; ++k) x(t, k - 1) = (t - k >= 0) ? u(t - k, 0) : 0.0;
    IdentifyResult r;
    r.theta_hat = x.colPivHouseholderQr().solve(y.col(0));
    r.converged = true;
    return r;
}

}  // namespace

IdentifyResult identify(const ParametricLtiModel& model, const Matrix& u, const Matrix& y,
                        double gtol, int max_iterations) {
    if (u.rows() != y.rows()) throw std::invalid_argument("identify: u and y lengths differ");
    if (u.cols() != model.n_u || y.cols() != model.n_y)
        throw std::invalid_argument("identify: channel counts do not match the model");
    if (std::holds_alternative<FirStructure>(model.structure)) return identify_fir(model, u, y);

    // PEM for the output-error structures: Gauss-Newton with Levenberg
    // damping on V(theta) = sum eps' Lambda^{-1} eps, from a 1%-perturbed
    // start at the model's nominal parameters.
    const int p = model.n_theta_g();
    const auto T = u.rows();
    const int ny = model.n_y;
    Eigen::SelfAdjointEigenSolver<Matrix> lam_es(symmetrized(model.lambda));
    const Matrix w = lam_es.operatorInverseSqrt();  // Lambda^{-1/2}

    Vector theta = model.theta_g;
    for (int i = 0; i < p; ++i) theta(i) = theta(i) != 0.0 ? 1.01 * theta(i) : 1e-3;

    auto weighted_residual = [&](const Vector& th) {
        const Matrix yh = simulate(model, th, u);
        Vector r(T * ny);
        for (Eigen::Index t = 0; t < T; ++t)
            r.segment(t * ny, ny) = w * (y.row(t) - yh.row(t)).transpose();
        return r;
    };

    IdentifyResult result;
    double mu = 1e-6;
    Vector r;
    try {
        r = weighted_residual(theta);
    } catch (const SimulationError&) {
        result.theta_hat = theta;
        result.converged = false;
        result.grad_norm = std::numeric_limits<double>::infinity();
        return result;
    }
    double cost = r.squaredNorm();
    int it = 0;
    for (; it < max_iterations; ++it) {
        Matrix jac = output_jacobian(model, theta, u);
        for (Eigen::Index t = 0; t < T; ++t)
            jac.middleRows(t * ny, ny) = w * jac.middleRows(t * ny, ny);
        const Vector grad = 2.0 * jac.transpose() * r;  // = -dV/dtheta; norm is what matters
        result.grad_norm = grad.cwiseAbs().maxCoeff();
        if (result.grad_norm <= gtol) break;

        const Matrix jtj = jac.transpose() * jac;
        bool stepped = false;
        for (int damp = 0; damp < 25; ++damp) {
            const Matrix lhs = jtj + mu * Matrix::Identity(p, p);
            const Vector delta = lhs.ldlt().solve(jac.transpose() * r);
            const Vector cand = theta + delta;
            Vector rc;
            double cc = std::numeric_limits<double>::infinity();
            try {
                rc = weighted_residual(cand);
                cc = rc.squaredNorm();
            } catch (const SimulationError&) {
                // diverged candidate; damp harder
            }
            if (cc <= cost) {
                theta = cand;
                r = rc;
                cost = cc;
                mu = std::max(mu / 3.0, 1e-12);
                stepped = true;
                break;
            }
            mu *= 4.0;
        }
        if (!stepped) break;
    }
    result.theta_hat = theta;
    result.iterations = it;
    result.converged = result.grad_norm <= gtol;
    return result;
}

}  // namespace oid
