#include "oid/appset.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "oid/mpc.hpp"

namespace oid {

void ExperimentSpec::validate() const {
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be inside (0,1)");
    if (!(u_max > 0.0) || !(y_max > 0.0))
        throw std::invalid_argument("amplitude bounds must be positive");
    if (horizon_nu < 0) throw std::invalid_argument("horizon_nu must be nonnegative");
    if (truncation_n < 1) throw std::invalid_argument("truncation_n must be positive");
    if (!(tol_j > 0.0) || !(tol_inner > 0.0) || max_inner < 1 || max_time < 1 ||
        !(tail_energy_tol > 0.0))
        throw std::invalid_argument("tolerances and iteration caps must be positive");
}

namespace {

// Regularized lower incomplete gamma: series for x < a+1, Lentz continued
// fraction for the complement otherwise.
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double term = sum;
    for (int k = 0; k < 500; ++k) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_continued_fraction(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double regularized_gamma_p(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::invalid_argument("regularized_gamma_p domain error");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_continued_fraction(a, x);
}

double chi2_cdf(double x, int dof) {
    if (dof < 1) throw std::invalid_argument("chi2_cdf: dof must be >= 1");
    if (x <= 0.0) return 0.0;
    return regularized_gamma_p(0.5 * dof, 0.5 * x);
}

double chi2_percentile(double alpha, int dof) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("chi2_percentile: alpha in (0,1)");
    if (dof < 1) throw std::invalid_argument("chi2_percentile: dof must be >= 1");
    double hi = static_cast<double>(dof);
    while (chi2_cdf(hi, dof) < alpha) hi *= 2.0;
    double lo = 0.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (chi2_cdf(mid, dof) < alpha)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-12 * (1.0 + hi)) break;
    }
    return 0.5 * (lo + hi);
}

namespace {

Matrix hessian_stencil(const std::function<double(const Vector&)>& f, const Vector& theta0,
                       const Vector& h) {
    const auto p = theta0.size();
    Matrix hess(p, p);
    const double f0 = f(theta0);
    for (Eigen::Index i = 0; i < p; ++i) {
        Vector tp = theta0, tm = theta0;
        tp(i) += h(i);
        tm(i) -= h(i);
        hess(i, i) = (f(tp) - 2.0 * f0 + f(tm)) / (h(i) * h(i));
    }
    for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index j = i + 1; j < p; ++j) {
            Vector tpp = theta0, tpm = theta0, tmp = theta0, tmm = theta0;
            tpp(i) += h(i);
            tpp(j) += h(j);
            tpm(i) += h(i);
            tpm(j) -= h(j);
            tmp(i) -= h(i);
            tmp(j) += h(j);
            tmm(i) -= h(i);
            tmm(j) -= h(j);
            hess(i, j) = hess(j, i) =
                (f(tpp) - f(tpm) - f(tmp) + f(tmm)) / (4.0 * h(i) * h(j));
        }
    }
    return hess;
}

}  // namespace

Matrix numerical_hessian(const std::function<double(const Vector&)>& f, const Vector& theta0,
                         double reject_tol) {
    Vector h(theta0.size());
    for (Eigen::Index i = 0; i < theta0.size(); ++i)
        h(i) = 1e-4 * std::max(1.0, std::abs(theta0(i)));
    const Matrix coarse = hessian_stencil(f, theta0, h);
    const Matrix fine = hessian_stencil(f, theta0, Vector(0.5 * h));
    Matrix hess = symmetrized((4.0 * fine - coarse) / 3.0);

    Eigen::SelfAdjointEigenSolver<Matrix> es(hess);
    const double lmax = std::max(es.eigenvalues().maxCoeff(), 0.0);
    const double lmin = es.eigenvalues().minCoeff();
    if (lmin < -reject_tol * std::max(1.0, lmax)) {
        std::ostringstream msg;
        msg << "numerical_hessian: materially negative curvature " << lmin
            << " (largest eigenvalue " << lmax
            << "); the application cost scenario does not have a minimum here - review it";
        throw std::invalid_argument(msg.str());
    }
    if (lmin < 0.0) {
        Vector clamped = es.eigenvalues().cwiseMax(0.0);
        hess = es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
        hess = symmetrized(hess);
    }
    return hess;
}

LmiResult lmi_satisfied(const Matrix& i_f, const Matrix& hessian, double gamma, double alpha,
                        int n_theta, double slack_tol) {
    const double chi2 = chi2_percentile(alpha, n_theta);
    const Matrix gap = symmetrized(i_f / chi2 - 0.5 * gamma * hessian);
    Eigen::SelfAdjointEigenSolver<Matrix> es(gap);
    LmiResult r;
    r.margin = es.eigenvalues().minCoeff();
    r.satisfied = r.margin >= -slack_tol;
    return r;
}

EllipsoidPair EllipsoidPair::make(const Matrix& hessian, const Matrix& fim, const Vector& theta0,
                                  double gamma, double alpha) {
    EllipsoidPair e;
    e.app_shape = symmetrized(hessian);
    e.id_shape = symmetrized(fim);
    e.center = theta0;
    e.gamma = gamma;
    e.chi2_level = chi2_percentile(alpha, static_cast<int>(theta0.size()));
    return e;
}

bool EllipsoidPair::in_app(const Vector& theta) const {
    const Vector d = theta - center;
    return d.dot(app_shape * d) <= 2.0 / gamma;
}

bool EllipsoidPair::in_id(const Vector& theta) const {
    const Vector d = theta - center;
    return d.dot(id_shape * d) <= chi2_level;
}

LmiResult EllipsoidPair::containment(double slack_tol) const {
    const Matrix gap = symmetrized(id_shape / chi2_level - app_shape / (2.0 / gamma));
    Eigen::SelfAdjointEigenSolver<Matrix> es(gap);
    LmiResult r;
    r.margin = es.eigenvalues().minCoeff();
    r.satisfied = r.margin >= -slack_tol;
    return r;
}

Matrix EllipsoidPair::boundary_slice(int i, int j, bool app, int count) const {
    const Matrix& shape = app ? app_shape : id_shape;
    const double level = app ? 2.0 / gamma : chi2_level;
    Matrix sub(2, 2);
    sub << shape(i, i), shape(i, j), shape(j, i), shape(j, j);
    Matrix points(count, 2);
    for (int k = 0; k < count; ++k) {
        const double phi = 2.0 * M_PI * k / count;
        Eigen::Vector2d d(std::cos(phi), std::sin(phi));
        const double quad = d.dot(sub * d);
        const double r = quad > 0.0 ? std::sqrt(level / quad)
                                    : std::numeric_limits<double>::quiet_NaN();
        points(k, 0) = center(i) + r * d(0);
        points(k, 1) = center(j) + r * d(1);
    }
    return points;
}

namespace {

double mismatch(const Matrix& y0, const Matrix& yh) {
    return (y0 - yh).squaredNorm() / static_cast<double>(y0.rows());
}

}  // namespace

double vapp_output_mismatch(const ParametricLtiModel& model, const Vector& theta_hat,
                            const Vector& theta0, const VappScenario& scenario) {
    if (const auto* s = std::get_if<OpenLoopStepScenario>(&scenario)) {
        Matrix u = Matrix::Constant(s->length, model.n_u, s->amplitude);
        return mismatch(simulate(model, theta0, u), simulate(model, theta_hat, u));
    }
    const auto& s = std::get<MpcScenario>(scenario);
    auto reference = [&s, ny = model.n_y](long) { return Vector::Constant(ny, s.reference_amplitude); };
    const MpcBounds bounds{s.u_max, s.y_max};
    const Matrix y_ideal = closed_loop_outputs(model, theta0, theta0, s.q_weight, s.r_weight,
                                               s.horizon, bounds, reference, s.length);
    const Matrix y_hat = closed_loop_outputs(model, theta_hat, theta0, s.q_weight, s.r_weight,
                                             s.horizon, bounds, reference, s.length);
    return mismatch(y_ideal, y_hat);
}

Matrix vapp_hessian(const ParametricLtiModel& model, const Vector& theta0,
                    const VappScenario& scenario) {
    return numerical_hessian(
        [&](const Vector& th) { return vapp_output_mismatch(model, th, theta0, scenario); },
        theta0);
}

}  // namespace oid
