#pragma once

#include <cstdint>
#include <vector>

#include "oid/appset.hpp"
#include "oid/lti.hpp"
#include "oid/types.hpp"

namespace oid {

struct MonteCarloRun {
    int run = 0;
    std::uint64_t seed = 0;  // derived per-run stream seed
    Vector theta_hat;
    bool in_id = false;
    bool in_app = false;
    bool converged = true;
};

struct MonteCarloReport {
    std::vector<MonteCarloRun> runs;  // sorted by run index
    double inside_id_fraction = 0.0;
    double inside_app_fraction = 0.0;
    int flagged_runs = 0;  // non-converged identifications, excluded from fractions
    std::uint64_t base_seed = 0;
};

/// Repeated identification on the designed input under fresh noise
/// realizations (per-run streams split from base_seed; bit-deterministic).
/// lambda_scale scales the noise covariance, 0 meaning noiseless runs.
MonteCarloReport monte_carlo(const ParametricLtiModel& model, const Matrix& designed_u,
                             const EllipsoidPair& ellipsoids, int runs, std::uint64_t base_seed,
                             double lambda_scale = 1.0);

}  // namespace oid
