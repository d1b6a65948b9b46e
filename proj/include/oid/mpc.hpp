#pragma once

#include <functional>

#include "oid/lti.hpp"
#include "oid/qp.hpp"
#include "oid/types.hpp"

namespace oid {

struct MpcBounds {
    double u_max = 0.0;
    double y_max = 0.0;
};

/// Finite-horizon tracking MPC for a strictly proper SISO-input model:
///   min sum ||y(k+1) - r(k+1)||^2_Q + sum ||du(k)||^2_R
/// under the amplitude bounds, applying the first move. Reuses the design
/// QP solver. When the output constraints make the QP infeasible the
/// controller saturates at the input bounds and raises a flag.
class MpcController {
public:
    MpcController(StateSpace model, double q_weight, double r_weight, int horizon,
                  MpcBounds bounds, std::function<Vector(long)> reference);

    /// Input for the current step given the controller's state estimate and
    /// the previously applied input.
    double compute(const Vector& x_hat, double u_prev, long t);

    bool saturated_fallback() const { return saturated_fallback_; }
    const StateSpace& model() const { return model_; }

private:
    StateSpace model_;
    double q_weight_, r_weight_;
    int horizon_;
    MpcBounds bounds_;
    std::function<Vector(long)> reference_;
    std::vector<Matrix> c_a_pow_;  // C A^j, j = 0..horizon
    Matrix impulse_;               // block lower-triangular C A^(j-1-i) B
    Matrix p_;                     // fixed QP Hessian
    QpWarmStart warm_;
    bool saturated_fallback_ = false;
};

/// Factory matching the harness operation signature.
MpcController mpc_controller(const ParametricLtiModel& model, const Vector& theta, double q_weight,
                             double r_weight, int horizon, MpcBounds bounds,
                             std::function<Vector(long)> reference);

/// Closed loop of MPC(theta_ctrl) driving the theta_plant realization for
/// steps samples; the controller propagates its own model by the applied
/// inputs (certainty equivalence). Returns the plant output trajectory.
Matrix closed_loop_outputs(const ParametricLtiModel& model, const Vector& theta_ctrl,
                           const Vector& theta_plant, double q_weight, double r_weight,
                           int horizon, MpcBounds bounds, std::function<Vector(long)> reference,
                           int steps);

}  // namespace oid
