#pragma once

#include "oid/lti.hpp"
#include "oid/types.hpp"

namespace oid {

struct IdentifyResult {
    Vector theta_hat;
    bool converged = true;
    int iterations = 0;
    double grad_norm = 0.0;
};

/// PEM estimate with quadratic cost. FIR structures are solved exactly by
/// linear least squares on the regression form; output-error structures by
/// Gauss-Newton with Levenberg damping from a 1%-perturbed theta0 start,
/// returning with gradient infinity-norm <= gtol or converged = false.
IdentifyResult identify(const ParametricLtiModel& model, const Matrix& u, const Matrix& y,
                        double gtol = 1e-8, int max_iterations = 100);

}  // namespace oid
