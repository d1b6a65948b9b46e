#include "oid/monte_carlo.hpp"

#include <cmath>

#include "oid/identify.hpp"
#include "oid/rng.hpp"

namespace oid {

MonteCarloReport monte_carlo(const ParametricLtiModel& model, const Matrix& designed_u,
                             const EllipsoidPair& ellipsoids, int runs, std::uint64_t base_seed,
                             double lambda_scale) {
    if (runs < 0) throw std::invalid_argument("monte_carlo: runs must be nonnegative");
    if (lambda_scale < 0.0) throw std::invalid_argument("monte_carlo: lambda_scale must be >= 0");
    model.validate();
    if (designed_u.cols() != model.n_u)
        throw std::invalid_argument("monte_carlo: designed input does not match model n_u");

    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(model.lambda));
    const Matrix lambda_sqrt = es.operatorSqrt() * std::sqrt(lambda_scale);
    const auto T = designed_u.rows();
    const int ny = model.n_y;
    const Matrix y_clean = simulate(model, designed_u);

    MonteCarloReport report;
    report.base_seed = base_seed;
    report.runs.reserve(runs);
    int inside_id = 0, inside_app = 0, ok_runs = 0;
    for (int run = 0; run < runs; ++run) {
        Rng rng = Rng::stream(base_seed, static_cast<std::uint64_t>(run));
        Matrix y = y_clean;
        for (Eigen::Index t = 0; t < T; ++t) {
            Vector z(ny);
            for (int k = 0; k < ny; ++k) z(k) = rng.normal();
            y.row(t) += (lambda_sqrt * z).transpose();
        }
        IdentifyResult est;
        try {
            est = identify(model, designed_u, y);
        } catch (const SimulationError&) {
            est.theta_hat = model.theta_g;
            est.converged = false;
        }
        MonteCarloRun row;
        row.run = run;
        row.seed = Rng::stream_seed(base_seed, static_cast<std::uint64_t>(run));
        row.theta_hat = est.theta_hat;
        row.converged = est.converged;
        if (est.converged) {
            row.in_id = ellipsoids.in_id(est.theta_hat);
            row.in_app = ellipsoids.in_app(est.theta_hat);
            ++ok_runs;
            inside_id += row.in_id ? 1 : 0;
            inside_app += row.in_app ? 1 : 0;
        } else {
            ++report.flagged_runs;
        }
        report.runs.push_back(std::move(row));
    }
    report.inside_id_fraction = ok_runs ? static_cast<double>(inside_id) / ok_runs : 0.0;
    report.inside_app_fraction = ok_runs ? static_cast<double>(inside_app) / ok_runs : 0.0;
    return report;
}

}  // namespace oid
