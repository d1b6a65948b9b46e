#pragma once

#include <vector>

#include "oid/lti.hpp"
#include "oid/types.hpp"

namespace oid {

/// Stacked input **u** = [past; horizon]: the n-1 most recent applied inputs
/// u(t-n+1..t-1) followed by the decision window u(t..t+N_u).
struct StackedInput {
    Vector past;
    Vector horizon;

    Vector stacked() const {
        Vector u(past.size() + horizon.size());
        u << past, horizon;
        return u;
    }
};

/// Lambda^{-1} and Lambda^{-1/2}, computed once per design session.
struct NoiseWhitener {
    Matrix lambda_inv;
    Matrix lambda_inv_sqrt;

    static NoiseWhitener from_covariance(const Matrix& lambda);
};

/// Phi(u) = [Le^{-1/2} F_1 u, ..., Le^{-1/2} F_p u], Le = I ox Lambda.
/// Column i stacks the whitened sensitivity-filter outputs over the window.
Matrix build_phi(const SensitivityBank& bank, const StackedInput& u, const NoiseWhitener& wh);
Matrix build_phi(const SensitivityBank& bank, const StackedInput& u, const Matrix& lambda);

/// Ibar_F^{t+N_u} = Phi^T Phi + Ibar_F^{t-1}, symmetrized.
Matrix fim_from_phi(const Matrix& phi, const Matrix& i_bar_past);

/// Reduced information accumulated from applied inputs, plus the constant
/// C(t-1) = Ibar_F^{t-1} - (chi2_alpha(n_theta) * gamma / 2) V''app(theta0).
struct InformationState {
    Matrix i_bar_past;
    Matrix c_matrix;
    Matrix target_rhs;  // (chi2 * gamma / 2) V''app
    long t = 1;

    static InformationState initial(const Matrix& target_rhs);
};

/// Advance by one sample: add the prediction-error term for time t, which
/// depends on the n most recent inputs strictly before t (history, most
/// recent last; shorter histories are zero-padded at the experiment start).
/// applied_u = u*(t) itself only matters for later samples and is accepted
/// for bookkeeping symmetry with the design loop.
InformationState commit_step(const InformationState& state, const SensitivityBank& bank,
                             const NoiseWhitener& wh, const Vector& applied_u,
                             const std::vector<Vector>& history);

/// Exact information matrix of a finished experiment: sum over t = 1..T of
/// the full-lag prediction-error terms (zero inputs before the start).
Matrix batch_fim(const SensitivityBank& bank, const NoiseWhitener& wh, const Matrix& u);

}  // namespace oid
