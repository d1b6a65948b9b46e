#pragma once

#include <stdexcept>
#include <variant>
#include <vector>

#include "oid/types.hpp"

namespace oid {

struct SimulationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Strictly proper discrete-time state-space realization:
///   x(t+1) = A x(t) + B u(t),  y(t) = C x(t).
struct StateSpace {
    Matrix a, b, c;
    int n_x() const { return static_cast<int>(a.rows()); }
    int n_u() const { return static_cast<int>(b.cols()); }
    int n_y() const { return static_cast<int>(c.rows()); }
};

/// Matrix whose entries are either fixed numbers or references into theta.
/// materialize() overwrites the referenced entries with theta values.
struct AffineMatrix {
    Matrix base;
    struct ThetaRef {
        int row, col, theta_index;
    };
    std::vector<ThetaRef> refs;

    Matrix materialize(const Vector& theta) const {
        Matrix m = base;
        for (const auto& r : refs) m(r.row, r.col) = theta(r.theta_index);
        return m;
    }
};

/// y(t) = theta_1 u(t-1) + ... + theta_m u(t-m). SISO.
struct FirStructure {
    int order = 0;
};

/// x(t+1) = A(theta) x + B(theta) u, y = C(theta) x. Output-error (H = 1).
struct StateSpaceStructure {
    AffineMatrix a, b, c;
};

/// Strictly proper B(q)/A(q) with theta = [b_1..b_nb, a_1..a_na],
/// y(t) = -a_1 y(t-1) - ... + b_1 u(t-1) + ... Output-error (H = 1). SISO.
struct RationalTfStructure {
    int num_order = 0, den_order = 0;
};

using ModelStructure = std::variant<FirStructure, StateSpaceStructure, RationalTfStructure>;

/// Parametrized G(q, theta_G) with white measurement noise of covariance
/// lambda. All shipped structures have H(q) = 1, so theta_h must be empty.
struct ParametricLtiModel {
    ModelStructure structure;
    Vector theta_g;
    Vector theta_h;  // must be empty; reserved for parametrized noise models
    int n_u = 1, n_y = 1;
    Matrix lambda;

    int n_theta_g() const { return static_cast<int>(theta_g.size()); }
    int n_theta() const { return n_theta_g() + static_cast<int>(theta_h.size()); }

    /// Throws std::invalid_argument on inconsistent dimensions or a lambda
    /// that is not symmetric positive definite.
    void validate() const;

    /// State-space realization at the given plant parameters.
    StateSpace realize(const Vector& theta) const;
    StateSpace realize() const { return realize(theta_g); }
};

/// Simulate y(1..T) from zero initial state. u is T x n_u; noise, when
/// present, is T x n_y and is added to the output (H = 1).
/// Throws SimulationError when |x| or |y| exceeds the overflow guard.
Matrix simulate(const ParametricLtiModel& model, const Vector& theta, const Matrix& u,
                const Matrix* noise = nullptr);
inline Matrix simulate(const ParametricLtiModel& model, const Matrix& u,
                       const Matrix* noise = nullptr) {
    return simulate(model, model.theta_g, u, noise);
}

/// Impulse response g(m) = C A^(m-1) B for m = 1..lags.
std::vector<Matrix> pulse_response(const StateSpace& ss, int lags);

/// Truncated impulse responses f_i(1..n) of the sensitivity filters
/// -H^{-1} dG/dtheta_i together with their banded block-Toeplitz matrices.
///
/// F_i is (N_u+1)*n_y x (N_u+n)*n_u; block row r (time t+r-1) has f_i(m) at
/// block column c = n+r-1-m, i.e. rows end ...f_i(2) f_i(1) 0 against the
/// stacked input [u(t-n+1)..u(t-1) | u(t)..u(t+N_u)]. Entries before the
/// window (lag n at the first row) are dropped, matching the zero-padding
/// convention of the worked FIR example.
struct SensitivityBank {
    std::vector<std::vector<Matrix>> responses;  // [i][m-1], each n_y x n_u
    std::vector<Matrix> toeplitz;                // F_i
    int truncation_n = 0;
    int horizon_nu = 0;
    int n_u = 1, n_y = 1;

    int n_theta_g() const { return static_cast<int>(responses.size()); }
    int stacked_input_size() const { return (horizon_nu + truncation_n) * n_u; }
    int phi_rows() const { return (horizon_nu + 1) * n_y; }
};

/// Assemble one F_i from a truncated response.
Matrix toeplitz_from_response(const std::vector<Matrix>& f, int horizon_nu);

/// Build the sensitivity bank at theta0. Analytic for FIR and the affine
/// state-space map; central differences on impulse responses for RationalTf.
/// Throws std::invalid_argument when the discarded tail energy beyond lag n
/// exceeds tail_tol * total energy, naming the offending filter and a
/// sufficient n.
SensitivityBank sensitivity_impulse_responses(const ParametricLtiModel& model,
                                              const Vector& theta0, int n, int horizon_nu,
                                              double tail_tol = 1e-6);

}  // namespace oid
