#include "oid/qp.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace oid {

namespace {

double inf_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

struct Kkt {
    Eigen::PartialPivLU<Matrix> lu;
    void factor(const Matrix& ps, const Matrix& a, double sigma, double rho) {
        const auto n = ps.rows();
        const auto m = a.rows();
        Matrix h(n + m, n + m);
        h.topLeftCorner(n, n) = ps + sigma * Matrix::Identity(n, n);
        h.topRightCorner(n, m) = a.transpose();
        h.bottomLeftCorner(m, n) = a;
        h.bottomRightCorner(m, m) = -(1.0 / rho) * Matrix::Identity(m, m);
        lu.compute(h);
    }
};

// Stationarity plus constraint violation of the unscaled problem.
double kkt_residual(const QpProblem& p, const Vector& x, const Vector& y) {
    Vector stationarity = p.p * x + p.q;
    if (p.a.rows()) stationarity += p.a.transpose() * y;
    double r = inf_norm(stationarity);
    if (p.a.rows()) {
        const Vector ax = p.a * x;
        r = std::max(r, inf_norm((p.lower - ax).cwiseMax(0.0)));
        r = std::max(r, inf_norm((ax - p.upper).cwiseMax(0.0)));
    }
    return r;
}

// Equality-KKT solve on the detected active set, with dual-sign cleanup
// passes and iterative refinement. Returns true when the polished point is
// feasible and stationary to near machine precision.
bool polish(const QpProblem& p, Vector& x, Vector& y) {
    const auto n = p.p.rows();
    const auto m = p.a.rows();
    const double delta = 1e-9 * std::max(1.0, p.p.cwiseAbs().maxCoeff());
    const Vector ax0 = m ? Vector(p.a * x) : Vector();

    std::vector<int> active;
    std::vector<bool> at_upper;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double span_tol = 1e-6 * (1.0 + std::abs(p.upper(i)) + std::abs(p.lower(i)));
        if (p.upper(i) - ax0(i) < span_tol && y(i) >= -span_tol) {
            active.push_back(static_cast<int>(i));
            at_upper.push_back(true);
        } else if (ax0(i) - p.lower(i) < span_tol && y(i) <= span_tol) {
            active.push_back(static_cast<int>(i));
            at_upper.push_back(false);
        }
    }

    for (int pass = 0; pass < 4; ++pass) {
        const auto k = static_cast<Eigen::Index>(active.size());
        Matrix kkt(n + k, n + k);
        kkt.topLeftCorner(n, n) = p.p + delta * Matrix::Identity(n, n);
        Matrix aact(k, n);
        Vector bact(k);
        for (Eigen::Index r = 0; r < k; ++r) {
            aact.row(r) = p.a.row(active[r]);
            bact(r) = at_upper[r] ? p.upper(active[r]) : p.lower(active[r]);
        }
        kkt.topRightCorner(n, k) = aact.transpose();
        kkt.bottomLeftCorner(k, n) = aact;
        kkt.bottomRightCorner(k, k) = -delta * Matrix::Identity(k, k);
        Eigen::PartialPivLU<Matrix> lu(kkt);

        Vector rhs(n + k);
        rhs.head(n) = -p.q;
        rhs.tail(k) = bact;
        Vector sol = lu.solve(rhs);
        for (int refine = 0; refine < 2; ++refine) {
            Vector resid = rhs - kkt * sol;
            resid.head(n) += delta * sol.head(n);            // undo regularization
            resid.tail(k) -= delta * sol.tail(k);
            sol += lu.solve(resid);
        }

        Vector xp = sol.head(n);
        Vector yp = Vector::Zero(m);
        bool signs_ok = true;
        std::vector<int> kept;
        std::vector<bool> kept_upper;
        for (Eigen::Index r = 0; r < k; ++r) {
            const double dual = sol(n + r);
            const bool wrong_sign = at_upper[r] ? dual < -1e-9 : dual > 1e-9;
            if (wrong_sign) {
                signs_ok = false;
                continue;  // drop from the working set
            }
            kept.push_back(active[r]);
            kept_upper.push_back(at_upper[r]);
            yp(active[r]) = dual;
        }
        if (!signs_ok) {
            active = std::move(kept);
            at_upper = std::move(kept_upper);
            continue;
        }

        bool feasible = true;
        if (m) {
            const Vector axp = p.a * xp;
            for (Eigen::Index i = 0; i < m; ++i) {
                const double tol = 1e-8 * (1.0 + std::abs(p.upper(i)) + std::abs(p.lower(i)));
                if (axp(i) > p.upper(i) + tol || axp(i) < p.lower(i) - tol) {
                    feasible = false;
                    break;
                }
            }
        }
        if (feasible && kkt_residual(p, xp, yp) <= kkt_residual(p, x, y)) {
            x = xp;
            y = yp;
            return true;
        }
        return false;
    }
    return false;
}

}  // namespace

QpResult solve_qp(const QpProblem& problem, const QpSettings& settings, QpWarmStart* warm) {
    const auto n = problem.p.rows();
    const auto m = problem.a.rows();
    if (problem.p.cols() != n || problem.q.size() != n)
        throw std::invalid_argument("solve_qp: P/q dimensions inconsistent");
    if (m && (problem.a.cols() != n || problem.lower.size() != m || problem.upper.size() != m))
        throw std::invalid_argument("solve_qp: A/l/u dimensions inconsistent");

    if (m == 0) {
        const double reg = 1e-12 * std::max(1.0, problem.p.cwiseAbs().maxCoeff());
        Eigen::PartialPivLU<Matrix> lu(problem.p + reg * Matrix::Identity(n, n));
        QpResult direct;
        direct.x = lu.solve(-problem.q);
        direct.dual = Vector();
        direct.kkt_residual = kkt_residual(problem, direct.x, direct.dual);
        direct.polished = true;
        if (direct.kkt_residual > settings.kkt_tol)
            throw std::runtime_error("solve_qp: unconstrained solve residual above tolerance");
        return direct;
    }

    // Objective scaling keeps the fixed rho/sigma meaningful across the very
    // different magnitudes produced by small noise covariances. Only P sets
    // the scale so warm-started duals stay consistent across calls that
    // share P but vary q. Constraint rows are equilibrated to unit infinity
    // norm; both scalings are undone before polish.
    const double scale = std::max(1.0, problem.p.cwiseAbs().maxCoeff());
    const Matrix ps = problem.p / scale;
    const Vector qs = problem.q / scale;
    Vector row_scale(m);
    for (Eigen::Index i = 0; i < m; ++i)
        row_scale(i) = 1.0 / std::max(1e-12, problem.a.row(i).cwiseAbs().maxCoeff());
    const Matrix a_s = row_scale.asDiagonal() * problem.a;
    const Vector lower_s = row_scale.cwiseProduct(problem.lower);
    const Vector upper_s = row_scale.cwiseProduct(problem.upper);

    Vector x = Vector::Zero(n), z = Vector::Zero(m), y = Vector::Zero(m);
    if (warm && warm->valid && warm->x.size() == n && warm->z.size() == m && warm->y.size() == m) {
        x = warm->x;
        z = warm->z;
        y = warm->y;
    }

    double rho = settings.rho0;
    Kkt kkt;
    kkt.factor(ps, a_s, settings.sigma, rho);

    QpResult result;
    double eps = settings.eps_abs;
    int infeasible_hits = 0;
    int total_iterations = 0;
    Vector x_best = x, y_best = scale * y;
    double kkt_best = std::numeric_limits<double>::infinity();

    for (int attempt = 0; attempt < 3; ++attempt) {
        for (int it = 0; it < settings.max_iter; ++it, ++total_iterations) {
            Vector h(n + m);
            h.head(n) = settings.sigma * x - qs;
            h.tail(m) = z - y / rho;
            const Vector sol = kkt.lu.solve(h);

            const Vector zt = z + (sol.tail(m) - y) / rho;
            const Vector x_next = settings.alpha * sol.head(n) + (1.0 - settings.alpha) * x;
            Vector z_next = (settings.alpha * zt + (1.0 - settings.alpha) * z + y / rho)
                                .cwiseMax(lower_s)
                                .cwiseMin(upper_s);
            const Vector y_next =
                y + rho * (settings.alpha * zt + (1.0 - settings.alpha) * z - z_next);

            const Vector dy = y_next - y;
            x = x_next;
            z = z_next;
            y = y_next;

            if ((it + 1) % settings.check_every == 0) {
                const double r_prim = inf_norm(a_s * x - z);
                const double r_dual = inf_norm(ps * x + qs + a_s.transpose() * y);
                if (r_prim < eps && r_dual < eps) break;

                // Primal infeasibility certificate (conservative thresholds:
                // a false positive would abort a feasible design).
                const double dy_norm = inf_norm(dy);
                if (dy_norm > 1e-12) {
                    const double at_dy = inf_norm(a_s.transpose() * dy);
                    const double support = upper_s.dot(dy.cwiseMax(0.0)) +
                                           lower_s.dot(dy.cwiseMin(0.0));
                    if (at_dy <= 1e-10 * dy_norm && support <= -1e-10 * dy_norm) {
                        if (++infeasible_hits >= 5)
                            throw QpInfeasibleError(
                                "solve_qp: primal infeasibility certificate found", dy / dy_norm);
                    } else {
                        infeasible_hits = 0;
                    }
                }
                if ((it + 1) % (settings.check_every * 25) == 0 && r_prim > 1e-14 &&
                    r_dual > 1e-14) {
                    const double ratio = std::sqrt(r_prim / r_dual);
                    if (ratio > 5.0 || ratio < 0.2) {
                        rho = std::clamp(rho * ratio, 1e-6, 1e6);
                        kkt.factor(ps, a_s, settings.sigma, rho);
                    }
                }
            }
        }

        Vector x_try = x;
        Vector y_try = scale * row_scale.cwiseProduct(y);
        const bool polished = polish(problem, x_try, y_try);
        const double kkt_now = kkt_residual(problem, x_try, y_try);
        if (kkt_now < kkt_best) {
            kkt_best = kkt_now;
            x_best = x_try;
            y_best = y_try;
            result.polished = polished;
        }
        if (kkt_best <= settings.kkt_tol) break;
        eps /= 100.0;  // polish missed the working set; tighten and continue
    }

    result.kkt_residual = kkt_best;
    result.iterations = total_iterations;
    result.x = x_best;
    result.dual = y_best;

    if (warm) {
        warm->x = x;
        warm->z = problem.a * x;
        warm->y = y;
        warm->valid = true;
    }
    if (result.kkt_residual > settings.kkt_tol)
        throw std::runtime_error("solve_qp: KKT residual " + std::to_string(result.kkt_residual) +
                                 " above tolerance after " + std::to_string(total_iterations) +
                                 " iterations");
    return result;
}

}  // namespace oid
