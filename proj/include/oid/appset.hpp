#pragma once

#include <functional>
#include <variant>

#include "oid/lti.hpp"
#include "oid/types.hpp"

namespace oid {

/// Everything the designer needs besides the model: accuracy demand gamma,
/// confidence alpha, amplitude bounds, horizons and stopping controls.
struct ExperimentSpec {
    double gamma = 0.0;
    double alpha = 0.0;
    double u_max = 0.0;
    double y_max = 0.0;
    int horizon_nu = 0;
    int truncation_n = 0;
    double tol_j = 1e-12;
    double tol_inner = 1e-8;
    int max_inner = 60;
    long max_time = 10000;
    double tail_energy_tol = 1e-6;

    void validate() const;
};

/// Regularized lower incomplete gamma P(a, x).
double regularized_gamma_p(double a, double x);

/// chi-square CDF with dof degrees of freedom.
double chi2_cdf(double x, int dof);

/// alpha-percentile of the chi-square distribution, by bisection on the
/// regularized incomplete gamma; |CDF(result) - alpha| <= 1e-8.
double chi2_percentile(double alpha, int dof);

/// Central-difference Hessian with per-coordinate step 1e-4*max(1,|theta_i|)
/// and one Richardson extrapolation level. Result is symmetrized and small
/// negative eigenvalues (> -reject_tol * max(1, lambda_max)) are clamped to
/// zero; materially negative curvature throws std::invalid_argument.
Matrix numerical_hessian(const std::function<double(const Vector&)>& f, const Vector& theta0,
                         double reject_tol = 1e-2);

struct LmiResult {
    bool satisfied = false;
    double margin = 0.0;  // lambda_min(I_F / chi2 - (gamma/2) V''app)
};

/// Experiment-design LMI of the containment E_SI(alpha) within E_app(gamma).
LmiResult lmi_satisfied(const Matrix& i_f, const Matrix& hessian, double gamma, double alpha,
                        int n_theta, double slack_tol = 1e-6);

/// Application ellipsoid (Hessian form, level 2/gamma) paired with the
/// identification ellipsoid (FIM form, level chi2_alpha(n_theta)).
struct EllipsoidPair {
    Matrix app_shape;  // V''app(theta0)
    Matrix id_shape;   // I_F(theta0)
    Vector center;
    double gamma = 0.0;
    double chi2_level = 0.0;

    static EllipsoidPair make(const Matrix& hessian, const Matrix& fim, const Vector& theta0,
                              double gamma, double alpha);

    bool in_app(const Vector& theta) const;
    bool in_id(const Vector& theta) const;
    LmiResult containment(double slack_tol = 1e-6) const;

    /// Boundary of the 2-D slice through the center in the (i, j) parameter
    /// plane; rows are absolute (theta_i, theta_j) samples.
    Matrix boundary_slice(int i, int j, bool app, int count = 256) const;
};

/// Application-cost scenarios for vapp_output_mismatch.
struct OpenLoopStepScenario {
    double amplitude = 1.0;
    int length = 50;
};
struct MpcScenario {
    double q_weight = 1.0;
    double r_weight = 0.0;  // Delta-u penalty
    double reference_amplitude = 1.0;
    int horizon = 5;
    int length = 50;
    double u_max = 0.0;
    double y_max = 0.0;
};
using VappScenario = std::variant<OpenLoopStepScenario, MpcScenario>;

/// Mean squared output mismatch (1/N) sum ||y(t, theta0) - y(t, theta_hat)||^2
/// over the scenario: a shared open-loop step, or the closed loop where the
/// MPC runs on theta_hat against the theta0 plant.
double vapp_output_mismatch(const ParametricLtiModel& model, const Vector& theta_hat,
                            const Vector& theta0, const VappScenario& scenario);

/// Hessian of the scenario's application cost at theta0.
Matrix vapp_hessian(const ParametricLtiModel& model, const Vector& theta0,
                    const VappScenario& scenario);

}  // namespace oid
