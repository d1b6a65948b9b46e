#include "oid/cyclic.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <cmath>
#include <limits>

#include "oid/rng.hpp"

namespace oid {

Matrix initial_semi_unitary(int rows, int cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix g(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) g(i, j) = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(g);
    return Matrix(qr.householderQ()).leftCols(cols);
}

Matrix sqrt_psd_clamped(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(m));
    const Vector lam = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * lam.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

Matrix step2_psd_project(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(m));
    const Vector lam = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

ProcrustesResult step1_2_procrustes(const Matrix& phi_at_uopt, const Matrix& sqrt_target) {
    const Matrix k = sqrt_target * phi_at_uopt.transpose();
    Eigen::JacobiSVD<Matrix> svd(k, Eigen::ComputeFullU | Eigen::ComputeThinV);
    ProcrustesResult r;
    r.u = svd.matrixV() * svd.matrixU().transpose();
    const auto& sv = svd.singularValues();
    r.degenerate = sv.size() == 0 || sv(sv.size() - 1) <= 1e-12 * std::max(sv(0), 1e-300);
    return r;
}

namespace {

// Everything about one sample's QP that does not change across inner cycles.
struct QpPieces {
    std::vector<Matrix> g_horizon;  // whitened F_i columns of the decision window
    std::vector<Matrix> g_past;     // whitened F_i columns of the pinned past
    std::vector<Vector> a_past;     // g_past[i] * u_past
    Matrix p;                       // QP Hessian, 2 sum G_i' G_i
    Matrix a_con;                   // [I; output impulse rows]
    Vector y_free;                  // output response of the committed state
    int nv = 0;                     // decision variables
};

QpPieces build_pieces(const SensitivityBank& bank, const HorizonContext& ctx,
                      const ParametricLtiModel& model, const Vector& theta0,
                      const NoiseWhitener& wh) {
    const int nu = bank.n_u, ny = bank.n_y;
    const int nh_samples = bank.horizon_nu + 1;
    const int nv = nh_samples * nu;
    const int past_cols = (bank.truncation_n - 1) * nu;

    QpPieces pc;
    pc.nv = nv;
    pc.p = Matrix::Zero(nv, nv);
    for (int i = 0; i < bank.n_theta_g(); ++i) {
        Matrix f = bank.toeplitz[i];
        for (int r = 0; r < nh_samples; ++r)
            f.middleRows(r * ny, ny) = wh.lambda_inv_sqrt * f.middleRows(r * ny, ny);
        pc.g_past.push_back(f.leftCols(past_cols));
        pc.g_horizon.push_back(f.rightCols(nv));
        pc.a_past.push_back(pc.g_past.back() * ctx.u_past);
        pc.p += 2.0 * pc.g_horizon.back().transpose() * pc.g_horizon.back();
    }

    // Noiseless predicted outputs y(t+1..t+N_u); y(t) depends on the state
    // alone (strictly proper realization) and was constrained when committed.
    const StateSpace ss = model.realize(theta0);
    const int n_y_rows = bank.horizon_nu * ny;
    Matrix gy = Matrix::Zero(n_y_rows, nv);
    pc.y_free = Vector::Zero(n_y_rows);
    std::vector<Matrix> c_a_pow{ss.c};
    for (int j = 1; j <= bank.horizon_nu; ++j) c_a_pow.push_back(c_a_pow.back() * ss.a);
    for (int j = 1; j <= bank.horizon_nu; ++j) {
        pc.y_free.segment((j - 1) * ny, ny) = c_a_pow[j] * ctx.x_state;
        for (int i = 0; i < j; ++i)
            gy.block((j - 1) * ny, i * nu, ny, nu) = c_a_pow[j - 1 - i] * ss.b;
    }
    pc.a_con = Matrix::Zero(nv + n_y_rows, nv);
    pc.a_con.topRows(nv) = Matrix::Identity(nv, nv);
    pc.a_con.bottomRows(n_y_rows) = gy;
    return pc;
}

Vector solve_horizon_qp(const QpPieces& pc, const Matrix& target, const ExperimentSpec& spec,
                        QpWarmStart* warm) {
    QpProblem qp;
    qp.p = pc.p;
    qp.q = Vector::Zero(pc.nv);
    for (size_t i = 0; i < pc.g_horizon.size(); ++i)
        qp.q += 2.0 * pc.g_horizon[i].transpose() *
                (pc.a_past[i] - target.col(static_cast<Eigen::Index>(i)));
    qp.a = pc.a_con;
    const auto n_y_rows = pc.a_con.rows() - pc.nv;
    qp.lower = Vector(pc.a_con.rows());
    qp.upper = Vector(pc.a_con.rows());
    qp.lower.head(pc.nv).setConstant(-spec.u_max);
    qp.upper.head(pc.nv).setConstant(spec.u_max);
    qp.lower.tail(n_y_rows) = Vector::Constant(n_y_rows, -spec.y_max) - pc.y_free;
    qp.upper.tail(n_y_rows) = Vector::Constant(n_y_rows, spec.y_max) - pc.y_free;
    QpSettings settings;
    settings.eps_abs = 1e-9;
    return solve_qp(qp, settings, warm).x;
}

Matrix phi_from_pieces(const QpPieces& pc, const Vector& v) {
    Matrix phi(pc.g_horizon.front().rows(), static_cast<Eigen::Index>(pc.g_horizon.size()));
    for (size_t i = 0; i < pc.g_horizon.size(); ++i)
        phi.col(static_cast<Eigen::Index>(i)) = pc.g_horizon[i] * v + pc.a_past[i];
    return phi;
}

struct Projection {
    Matrix s;
    double j = 0.0;  // squared Frobenius distance to the PSD cone
    double lambda_min = 0.0;
};

Projection project_with_cost(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(m));
    Projection p;
    const Vector lam = es.eigenvalues();
    p.lambda_min = lam.minCoeff();
    p.j = lam.cwiseMin(0.0).squaredNorm();
    p.s = es.eigenvectors() * lam.cwiseMax(0.0).asDiagonal() * es.eigenvectors().transpose();
    p.s = symmetrized(p.s);
    return p;
}

}  // namespace

StackedInput step1_1_qp(const SensitivityBank& bank, const InformationState& state,
                        const HorizonContext& ctx, const Matrix& u_fixed, const Matrix& s_fixed,
                        const ExperimentSpec& spec, const ParametricLtiModel& model,
                        QpWarmStart* warm) {
    const NoiseWhitener wh = NoiseWhitener::from_covariance(model.lambda);
    const QpPieces pc = build_pieces(bank, ctx, model, ctx.theta0, wh);
    const Matrix target = u_fixed * sqrt_psd_clamped(s_fixed - state.c_matrix);
    return StackedInput{ctx.u_past, solve_horizon_qp(pc, target, spec, warm)};
}

CyclicIterate inner_cycle(const InformationState& state, const HorizonContext& ctx,
                          const ExperimentSpec& spec, const ParametricLtiModel& model,
                          const SensitivityBank& bank, CyclicIterate warm, QpWarmStart* qp_warm,
                          std::vector<double>* j_log) {
    const NoiseWhitener wh = NoiseWhitener::from_covariance(model.lambda);
    const QpPieces pc = build_pieces(bank, ctx, model, ctx.theta0, wh);

    Matrix u_semi = warm.semi_unitary;
    Matrix s = warm.slack;
    Vector v = warm.u.horizon;
    QpWarmStart local_warm;
    QpWarmStart* warm_ptr = qp_warm ? qp_warm : &local_warm;

    CyclicIterate best = warm;
    best.j = std::numeric_limits<double>::infinity();
    best.converged = false;
    Matrix s_prev = s;

    int cycles = 0;
    for (int it = 0; it < spec.max_inner; ++it) {
        cycles = it + 1;
        const Matrix sq = sqrt_psd_clamped(s - state.c_matrix);
        const Matrix target = u_semi * sq;
        v = solve_horizon_qp(pc, target, spec, warm_ptr);
        const Matrix phi = phi_from_pieces(pc, v);
        const ProcrustesResult pr = step1_2_procrustes(phi, sq);
        u_semi = pr.u;
        const Projection proj = project_with_cost(phi.transpose() * phi + state.c_matrix);
        s = proj.s;

        if (proj.j < best.j - 1e-14 || !std::isfinite(best.j)) {
            best.u = StackedInput{ctx.u_past, v};
            best.slack = proj.s;
            best.j = proj.j;
            best.lambda_min = proj.lambda_min;
            best.procrustes_degenerate = pr.degenerate;
        }
        if (j_log) j_log->push_back(best.j);
        if (best.j <= spec.tol_j) {
            best.converged = true;
            break;
        }
        const double ds = (s - s_prev).norm() / std::max(1.0, s.norm());
        s_prev = s;
        if (it > 3 && ds <= spec.tol_inner) {
            best.converged = true;
            break;
        }
    }
    best.semi_unitary = u_semi;  // carried across samples as the warm start
    best.cycles = cycles;
    return best;
}

DesignResult receding_horizon_design(const ParametricLtiModel& model, const ExperimentSpec& spec,
                                     const Matrix& hessian, const Vector& theta0) {
    model.validate();
    spec.validate();
    const int p = model.n_theta_g();
    if (hessian.rows() != p || hessian.cols() != p)
        throw std::invalid_argument("receding_horizon_design: hessian must be n_theta_G square");

    const double chi2 = chi2_percentile(spec.alpha, model.n_theta());
    const Matrix rhs = symmetrized(0.5 * chi2 * spec.gamma * hessian);
    const SensitivityBank bank = sensitivity_impulse_responses(
        model, theta0, spec.truncation_n, spec.horizon_nu, spec.tail_energy_tol);
    const NoiseWhitener wh = NoiseWhitener::from_covariance(model.lambda);
    const StateSpace ss = model.realize(theta0);

    InformationState state = InformationState::initial(rhs);
    const int nu = model.n_u;
    const int nv = (spec.horizon_nu + 1) * nu;
    const int past_len = (spec.truncation_n - 1) * nu;

    CyclicIterate iterate;
    iterate.semi_unitary = initial_semi_unitary(bank.phi_rows(), p);
    iterate.slack = Matrix::Zero(p, p);
    iterate.u = StackedInput{Vector::Zero(past_len), Vector::Zero(nv)};

    DesignResult result;
    result.target_rhs = rhs;
    std::vector<Vector> history;
    Vector x_state = Vector::Zero(ss.n_x());
    QpWarmStart qp_warm;
    double prev_j = std::numeric_limits<double>::infinity();
    int stalled_samples = 0;

    auto assemble_u = [&](const Vector* final_horizon) {
        const auto applied = static_cast<Eigen::Index>(history.size());
        const Eigen::Index extra = final_horizon ? spec.horizon_nu + 1 : 0;
        Matrix u(applied + extra, nu);
        for (Eigen::Index k = 0; k < applied; ++k) u.row(k) = history[k].transpose();
        for (Eigen::Index k = 0; k < extra; ++k)
            u.row(applied + k) = final_horizon->segment(k * nu, nu).transpose();
        return u;
    };

    for (long t = 1; t <= spec.max_time; ++t) {
        HorizonContext ctx;
        ctx.x_state = x_state;
        ctx.theta0 = theta0;
        ctx.u_past = Vector::Zero(past_len);
        for (int k = 1; k < spec.truncation_n; ++k) {  // u(t-n+k) into slot k-1
            const long tau = t - spec.truncation_n + k;
            if (tau >= 1) ctx.u_past.segment((k - 1) * nu, nu) = history[tau - 1];
        }

        // Warm starts: shift the previous horizon left one sample and repeat
        // the last value; the slack restarts from the algorithm's S = 0.
        Vector v = iterate.u.horizon;
        v.head(nv - nu) = v.tail(nv - nu).eval();
        iterate.u.horizon = v;
        iterate.u.past = ctx.u_past;
        iterate.slack = Matrix::Zero(p, p);

        result.inner_j_logs.emplace_back();
        iterate = inner_cycle(state, ctx, spec, model, bank, iterate, &qp_warm,
                              &result.inner_j_logs.back());

        result.trace.push_back(DesignTraceRow{t, iterate.j, iterate.lambda_min, iterate.cycles,
                                              iterate.u.horizon(0)});

        // The alternating method can settle on a window whose first sample
        // is inert (nothing gets committed and the problem never changes).
        // Re-seeding U breaks that fixed point; U is re-optimized by the
        // first Procrustes step of the next sample anyway.
        if (iterate.j >= prev_j * (1.0 - 1e-9) - 1e-15) {
            if (++stalled_samples >= 2)
                iterate.semi_unitary = initial_semi_unitary(
                    bank.phi_rows(), p, 0x57a11ULL ^ static_cast<std::uint64_t>(t));
        } else {
            stalled_samples = 0;
        }
        prev_j = iterate.j;

        if (iterate.j <= spec.tol_j) {
            Vector horizon = iterate.u.horizon.cwiseMax(-spec.u_max).cwiseMin(spec.u_max);
            result.u_star = assemble_u(&horizon);
            result.success = true;
            result.t_star = t;
            break;
        }

        Vector applied = iterate.u.horizon.head(nu).cwiseMax(-spec.u_max).cwiseMin(spec.u_max);
        state = commit_step(state, bank, wh, applied, history);
        history.push_back(applied);
        x_state = ss.a * x_state + ss.b * applied;
    }

    if (!result.success) {
        result.u_star = assemble_u(nullptr);
        result.t_star = spec.max_time;
    }
    result.j_final = result.trace.empty() ? 0.0 : result.trace.back().j;
    result.final_slack = iterate.slack;
    if (result.u_star.rows() > 0) {
        result.y_noiseless = simulate(model, theta0, result.u_star);
        result.final_fim = batch_fim(bank, wh, result.u_star);
    } else {
        result.y_noiseless = Matrix::Zero(0, model.n_y);
        result.final_fim = Matrix::Zero(p, p);
    }
    result.lmi_margin =
        lmi_satisfied(result.final_fim, hessian, spec.gamma, spec.alpha, model.n_theta()).margin;
    return result;
}

}  // namespace oid
