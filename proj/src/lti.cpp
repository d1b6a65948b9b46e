#include "oid/lti.hpp"

#include <cmath>
#include <sstream>

namespace oid {

namespace {

constexpr double kOverflowGuard = 1e12;

// FIR realization: x = [u(t-1), ..., u(t-m)], shift register.
StateSpace realize_fir(const FirStructure& s, const Vector& theta) {
    const int m = s.order;
    StateSpace ss;
    ss.a = Matrix::Zero(m, m);
    for (int i = 1; i < m; ++i) ss.a(i, i - 1) = 1.0;
    ss.b = Matrix::Zero(m, 1);
    ss.b(0, 0) = 1.0;
    ss.c = theta.transpose();
    return ss;
}

// Controllable canonical form of theta = [b_1..b_nb, a_1..a_na].
StateSpace realize_rational(const RationalTfStructure& s, const Vector& theta) {
    const int nb = s.num_order, na = s.den_order;
    const int nx = std::max(nb, na);
    StateSpace ss;
    ss.a = Matrix::Zero(nx, nx);
    for (int i = 0; i < na; ++i) ss.a(0, i) = -theta(nb + i);
    for (int i = 1; i < nx; ++i) ss.a(i, i - 1) = 1.0;
    ss.b = Matrix::Zero(nx, 1);
    ss.b(0, 0) = 1.0;
    ss.c = Matrix::Zero(1, nx);
    for (int i = 0; i < nb; ++i) ss.c(0, i) = theta(i);
    return ss;
}

}  // namespace

void ParametricLtiModel::validate() const {
    if (theta_h.size() != 0)
        throw std::invalid_argument("theta_h must be empty: all supported structures have H = 1");
    if (n_u <= 0 || n_y <= 0) throw std::invalid_argument("n_u and n_y must be positive");
    if (lambda.rows() != n_y || lambda.cols() != n_y)
        throw std::invalid_argument("lambda must be n_y x n_y");
    if ((lambda - lambda.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + lambda.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("lambda must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(lambda));
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw std::invalid_argument("lambda must be positive definite");

    if (const auto* fir = std::get_if<FirStructure>(&structure)) {
        if (fir->order != theta_g.size())
            throw std::invalid_argument("FIR order must equal theta_g length");
        if (n_u != 1 || n_y != 1) throw std::invalid_argument("FIR structure is SISO");
    } else if (const auto* ssq = std::get_if<StateSpaceStructure>(&structure)) {
        const auto nx = ssq->a.base.rows();
        if (ssq->a.base.cols() != nx || ssq->b.base.rows() != nx || ssq->c.base.cols() != nx)
            throw std::invalid_argument("state-space dimensions inconsistent");
        if (ssq->b.base.cols() != n_u || ssq->c.base.rows() != n_y)
            throw std::invalid_argument("state-space B/C must match n_u/n_y");
        for (const auto* am : {&ssq->a, &ssq->b, &ssq->c})
            for (const auto& r : am->refs)
                if (r.theta_index < 0 || r.theta_index >= theta_g.size())
                    throw std::invalid_argument("theta reference out of range in state-space map");
    } else if (const auto* tf = std::get_if<RationalTfStructure>(&structure)) {
        if (tf->num_order + tf->den_order != theta_g.size())
            throw std::invalid_argument("rational_tf orders must sum to theta_g length");
        if (tf->num_order < 1) throw std::invalid_argument("rational_tf needs at least one numerator tap");
        if (n_u != 1 || n_y != 1) throw std::invalid_argument("rational_tf structure is SISO");
    }
}

StateSpace ParametricLtiModel::realize(const Vector& theta) const {
    if (theta.size() != theta_g.size())
        throw std::invalid_argument("theta length does not match the structure");
    if (const auto* fir = std::get_if<FirStructure>(&structure)) return realize_fir(*fir, theta);
    if (const auto* tf = std::get_if<RationalTfStructure>(&structure))
        return realize_rational(*tf, theta);
    const auto& ssq = std::get<StateSpaceStructure>(structure);
    return StateSpace{ssq.a.materialize(theta), ssq.b.materialize(theta), ssq.c.materialize(theta)};
}

Matrix simulate(const ParametricLtiModel& model, const Vector& theta, const Matrix& u,
                const Matrix* noise) {
    if (u.cols() != model.n_u) throw std::invalid_argument("simulate: u must be T x n_u");
    if (noise && (noise->rows() != u.rows() || noise->cols() != model.n_y))
        throw std::invalid_argument("simulate: noise must be T x n_y");
    const StateSpace ss = model.realize(theta);
    const auto T = u.rows();
    Matrix y(T, model.n_y);
    Vector x = Vector::Zero(ss.n_x());
    for (Eigen::Index t = 0; t < T; ++t) {
        y.row(t) = (ss.c * x).transpose();
        if (noise) y.row(t) += noise->row(t);
        x = ss.a * x + ss.b * u.row(t).transpose();
        if (x.cwiseAbs().maxCoeff() > kOverflowGuard || y.row(t).cwiseAbs().maxCoeff() > kOverflowGuard) {
            std::ostringstream msg;
            msg << "simulate: response exceeded " << kOverflowGuard << " at sample " << (t + 1)
                << "; structure declared stable appears unstable at these parameters";
            throw SimulationError(msg.str());
        }
    }
    return y;
}

std::vector<Matrix> pulse_response(const StateSpace& ss, int lags) {
    std::vector<Matrix> g;
    g.reserve(lags);
    Matrix v = ss.b;
    for (int m = 1; m <= lags; ++m) {
        g.push_back(ss.c * v);
        v = ss.a * v;
    }
    return g;
}

Matrix toeplitz_from_response(const std::vector<Matrix>& f, int horizon_nu) {
    const int n = static_cast<int>(f.size());
    const int ny = static_cast<int>(f.front().rows());
    const int nu = static_cast<int>(f.front().cols());
    Matrix F = Matrix::Zero((horizon_nu + 1) * ny, (horizon_nu + n) * nu);
    for (int r = 1; r <= horizon_nu + 1; ++r) {
        for (int c = 1; c <= horizon_nu + n; ++c) {
            const int m = n + r - 1 - c;
            if (m >= 1 && m <= n) F.block((r - 1) * ny, (c - 1) * nu, ny, nu) = f[m - 1];
        }
    }
    return F;
}

namespace {

// Derivative matrices of the affine map: dM/dtheta_i has a 1 where the map
// references theta_i.
Matrix affine_derivative(const AffineMatrix& am, int theta_index) {
    Matrix d = Matrix::Zero(am.base.rows(), am.base.cols());
    for (const auto& r : am.refs)
        if (r.theta_index == theta_index) d(r.row, r.col) = 1.0;
    return d;
}

// Exact impulse responses of dG/dtheta_i for the affine state-space map:
// joint recursion of (x, s) with s(t+1) = A s + dA x, dy = dC x + C s.
std::vector<Matrix> state_space_sensitivity(const StateSpaceStructure& s, const Vector& theta,
                                            int theta_index, int lags) {
    const Matrix A = s.a.materialize(theta), B = s.b.materialize(theta), C = s.c.materialize(theta);
    const Matrix dA = affine_derivative(s.a, theta_index);
    const Matrix dB = affine_derivative(s.b, theta_index);
    const Matrix dC = affine_derivative(s.c, theta_index);
    std::vector<Matrix> g;
    g.reserve(lags);
    Matrix x = B, sx = dB;  // columns track each input channel's pulse
    for (int m = 1; m <= lags; ++m) {
        g.push_back(dC * x + C * sx);
        sx = A * sx + dA * x;
        x = A * x;
    }
    return g;
}

std::vector<std::vector<Matrix>> impulse_sensitivities(const ParametricLtiModel& model,
                                                       const Vector& theta0, int lags) {
    const int p = model.n_theta_g();
    std::vector<std::vector<Matrix>> out(p);
    if (std::holds_alternative<FirStructure>(model.structure)) {
        for (int i = 0; i < p; ++i) {
            std::vector<Matrix> g(lags, Matrix::Zero(1, 1));
            if (i < lags) g[i](0, 0) = 1.0;  // tap i+1 responds at lag i+1
            out[i] = std::move(g);
        }
        return out;
    }
    if (const auto* ssq = std::get_if<StateSpaceStructure>(&model.structure)) {
        for (int i = 0; i < p; ++i) out[i] = state_space_sensitivity(*ssq, theta0, i, lags);
        return out;
    }
    // RationalTf: central differences on the pulse responses.
    for (int i = 0; i < p; ++i) {
        const double h = std::max(1e-6, 1e-6 * std::abs(theta0(i)));
        Vector tp = theta0, tm = theta0;
        tp(i) += h;
        tm(i) -= h;
        const auto gp = pulse_response(model.realize(tp), lags);
        const auto gm = pulse_response(model.realize(tm), lags);
        std::vector<Matrix> g;
        g.reserve(lags);
        for (int m = 0; m < lags; ++m) g.push_back((gp[m] - gm[m]) / (2.0 * h));
        out[i] = std::move(g);
    }
    return out;
}

}  // namespace

SensitivityBank sensitivity_impulse_responses(const ParametricLtiModel& model,
                                              const Vector& theta0, int n, int horizon_nu,
                                              double tail_tol) {
    if (n < 1 || horizon_nu < 0) throw std::invalid_argument("n >= 1 and N_u >= 0 required");
    // Probe well past n so the discarded tail energy is measurable.
    int probe = std::max(4 * n, n + 64);
    if (const auto* fir = std::get_if<FirStructure>(&model.structure))
        probe = std::max(probe, fir->order + 1);
    const auto full = impulse_sensitivities(model, theta0, probe);

    SensitivityBank bank;
    bank.truncation_n = n;
    bank.horizon_nu = horizon_nu;
    bank.n_u = model.n_u;
    bank.n_y = model.n_y;
    const int p = model.n_theta_g();
    bank.responses.resize(p);
    for (int i = 0; i < p; ++i) {
        double total = 0.0, tail = 0.0;
        std::vector<double> cumulative_from(probe + 1, 0.0);
        for (int m = probe - 1; m >= 0; --m)
            cumulative_from[m] = cumulative_from[m + 1] + full[i][m].squaredNorm();
        total = cumulative_from[0];
        tail = cumulative_from[n];
        if (total > 0.0 && tail > tail_tol * total) {
            int suggestion = n;
            while (suggestion < probe && cumulative_from[suggestion] > tail_tol * total) ++suggestion;
            std::ostringstream msg;
            msg << "sensitivity filter " << (i + 1) << ": discarded tail energy " << tail / total
                << " of total exceeds " << tail_tol << "; increase truncation n to at least "
                << suggestion;
            throw std::invalid_argument(msg.str());
        }
        bank.responses[i].assign(full[i].begin(), full[i].begin() + n);
        for (auto& f : bank.responses[i]) f = -f;  // minus sign of the filter -H^{-1} dG/dtheta
    }
    bank.toeplitz.reserve(p);
    for (int i = 0; i < p; ++i)
        bank.toeplitz.push_back(toeplitz_from_response(bank.responses[i], horizon_nu));
    return bank;
}

}  // namespace oid
