#pragma once

#include <vector>

#include "oid/appset.hpp"
#include "oid/fisher.hpp"
#include "oid/lti.hpp"
#include "oid/qp.hpp"
#include "oid/types.hpp"

namespace oid {

/// Committed-past context of one receding-horizon sample: the n-1 most
/// recent applied inputs, the realization state they produced, and the
/// nominal parameters the design is linearized at.
struct HorizonContext {
    Vector u_past;   // (n-1)*n_u, u(t-n+1..t-1), zero-padded at the start
    Vector x_state;  // realization state x(t) from all applied inputs
    Vector theta0;
};

/// One iterate of the alternating method.
struct CyclicIterate {
    StackedInput u;
    Matrix semi_unitary;  // U, (N_u+1)*n_y x n_theta_G
    Matrix slack;         // S >= 0
    double j = 0.0;       // ||Phi'Phi + C - S||_F^2 at this iterate
    double lambda_min = 0.0;
    int cycles = 0;
    bool converged = true;
    bool procrustes_degenerate = false;
};

/// Deterministic U_init: thin Q factor of a seeded random matrix.
Matrix initial_semi_unitary(int rows, int cols, std::uint64_t seed = 0x01d5eedULL);

/// Step 1.1: the constrained least-squares QP in the stacked input, with the
/// past pinned, |u| <= u_max on the horizon and the noiseless predicted
/// output (including the tail response of committed inputs) within +-y_max.
StackedInput step1_1_qp(const SensitivityBank& bank, const InformationState& state,
                        const HorizonContext& ctx, const Matrix& u_fixed, const Matrix& s_fixed,
                        const ExperimentSpec& spec, const ParametricLtiModel& model,
                        QpWarmStart* warm = nullptr);

struct ProcrustesResult {
    Matrix u;
    bool degenerate = false;  // rank-deficient product; any SVD completion accepted
};

/// Step 1.2: semi-unitary U minimizing ||Phi - U * sqrt_target||_F via SVD of
/// sqrt_target * Phi^T.
ProcrustesResult step1_2_procrustes(const Matrix& phi_at_uopt, const Matrix& sqrt_target);

/// Step 2: Frobenius-nearest PSD matrix (eigenvalue clamp).
Matrix step2_psd_project(const Matrix& m);

/// Hermitian square root with eigenvalues clamped at zero first.
Matrix sqrt_psd_clamped(const Matrix& m);

/// Alternate 1.1 -> 1.2 -> 2 from the warm iterate until the kept-best cost
/// stops improving, the slack stalls, or max_inner is reached. The returned
/// iterate is the best one seen; per-cycle kept costs (non-increasing) go to
/// j_log when given.
CyclicIterate inner_cycle(const InformationState& state, const HorizonContext& ctx,
                          const ExperimentSpec& spec, const ParametricLtiModel& model,
                          const SensitivityBank& bank, CyclicIterate warm,
                          QpWarmStart* qp_warm = nullptr, std::vector<double>* j_log = nullptr);

struct DesignTraceRow {
    long t = 0;
    double j = 0.0;
    double lmi_margin = 0.0;  // lambda_min(Ibar_F^{t+Nu} - rhs)
    int inner_iterations = 0;
    double first_input = 0.0;
};

struct DesignResult {
    Matrix u_star;  // T x n_u: applied inputs followed by the final horizon
    Matrix y_noiseless;
    std::vector<DesignTraceRow> trace;
    std::vector<std::vector<double>> inner_j_logs;  // kept-J per cycle, per sample
    Matrix final_fim;     // batch information matrix of u_star
    Matrix final_slack;   // S_opt at termination
    Matrix target_rhs;
    double lmi_margin = 0.0;
    double j_final = 0.0;
    long t_star = 0;
    bool success = false;
};

/// The receding-horizon loop: at each t run inner_cycle, apply the first
/// horizon input, commit it, advance; stop the first time J_t <= tol_j or
/// fail at max_time. hessian is V''app(theta0).
DesignResult receding_horizon_design(const ParametricLtiModel& model, const ExperimentSpec& spec,
                                     const Matrix& hessian, const Vector& theta0);

}  // namespace oid
