#pragma once

#include <stdexcept>

#include "oid/types.hpp"

namespace oid {

/// Convex QP:  min 1/2 x'Px + q'x  s.t.  l <= Ax <= u.
struct QpProblem {
    Matrix p;
    Vector q;
    Matrix a;
    Vector lower, upper;
};

struct QpSettings {
    double eps_abs = 1e-9;    // ADMM residual target
    double kkt_tol = 1e-7;    // required stationarity residual of the result
    double sigma = 1e-6;
    double alpha = 1.6;
    double rho0 = 0.1;
    int max_iter = 50000;
    int check_every = 10;
};

struct QpWarmStart {
    Vector x, z, y;
    bool valid = false;
};

struct QpResult {
    Vector x;
    Vector dual;
    double kkt_residual = 0.0;
    int iterations = 0;
    bool polished = false;
};

struct QpInfeasibleError : std::runtime_error {
    explicit QpInfeasibleError(const std::string& what, Vector certificate_in)
        : std::runtime_error(what), certificate(std::move(certificate_in)) {}
    Vector certificate;  // dual direction certifying primal infeasibility
};

/// Operator-splitting (OSQP-style ADMM) solver with objective scaling,
/// adaptive rho and an active-set polish step. Throws QpInfeasibleError on a
/// primal infeasibility certificate and std::runtime_error when the KKT
/// residual cannot be brought below settings.kkt_tol.
QpResult solve_qp(const QpProblem& problem, const QpSettings& settings = {},
                  QpWarmStart* warm = nullptr);

}  // namespace oid
