#include "oid/fisher.hpp"

#include <stdexcept>

namespace oid {

NoiseWhitener NoiseWhitener::from_covariance(const Matrix& lambda) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(lambda));
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw std::invalid_argument("noise covariance must be positive definite");
    const Vector inv = es.eigenvalues().cwiseInverse();
    NoiseWhitener wh;
    wh.lambda_inv = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
    wh.lambda_inv_sqrt =
        es.eigenvectors() * inv.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
    return wh;
}

Matrix build_phi(const SensitivityBank& bank, const StackedInput& u, const NoiseWhitener& wh) {
    const Vector stacked = u.stacked();
    if (stacked.size() != bank.stacked_input_size())
        throw std::invalid_argument("build_phi: stacked input length does not match the bank");
    if (u.past.size() != static_cast<Eigen::Index>((bank.truncation_n - 1) * bank.n_u))
        throw std::invalid_argument("build_phi: past block must hold n-1 input samples");
    const int ny = bank.n_y;
    Matrix phi(bank.phi_rows(), bank.n_theta_g());
    for (int i = 0; i < bank.n_theta_g(); ++i) {
        Vector col = bank.toeplitz[i] * stacked;
        for (int r = 0; r <= bank.horizon_nu; ++r)
            col.segment(r * ny, ny) = wh.lambda_inv_sqrt * col.segment(r * ny, ny);
        phi.col(i) = col;
    }
    return phi;
}

Matrix build_phi(const SensitivityBank& bank, const StackedInput& u, const Matrix& lambda) {
    return build_phi(bank, u, NoiseWhitener::from_covariance(lambda));
}

Matrix fim_from_phi(const Matrix& phi, const Matrix& i_bar_past) {
    if (i_bar_past.rows() != phi.cols() || i_bar_past.cols() != phi.cols())
        throw std::invalid_argument("fim_from_phi: accumulated matrix size mismatch");
    return symmetrized(phi.transpose() * phi + i_bar_past);
}

InformationState InformationState::initial(const Matrix& target_rhs) {
    InformationState s;
    s.target_rhs = symmetrized(target_rhs);
    s.i_bar_past = Matrix::Zero(target_rhs.rows(), target_rhs.cols());
    s.c_matrix = -s.target_rhs;
    s.t = 1;
    return s;
}

namespace {

// Prediction-error sensitivity g_i at the sample following `history`:
// sum_m f_i(m) u(t-m), with u zero before the experiment start.
Matrix sensitivity_at_sample(const SensitivityBank& bank, const std::vector<Vector>& history) {
    const int p = bank.n_theta_g();
    Matrix g = Matrix::Zero(bank.n_y, p);
    const int available = static_cast<int>(history.size());
    for (int m = 1; m <= bank.truncation_n; ++m) {
        if (m > available) break;  // earlier inputs are zero
        const Vector& u_lag = history[available - m];
        for (int i = 0; i < p; ++i) g.col(i) += bank.responses[i][m - 1] * u_lag;
    }
    return g;
}

}  // namespace

InformationState commit_step(const InformationState& state, const SensitivityBank& bank,
                             const NoiseWhitener& wh, const Vector& applied_u,
                             const std::vector<Vector>& history) {
    if (applied_u.size() != bank.n_u)
        throw std::invalid_argument("commit_step: applied input has wrong dimension");
    const Matrix g = sensitivity_at_sample(bank, history);
    const Matrix term = g.transpose() * wh.lambda_inv * g;
    InformationState next = state;
    next.i_bar_past = symmetrized(state.i_bar_past + term);
    next.c_matrix = symmetrized(next.i_bar_past - state.target_rhs);
    next.t = state.t + 1;
    return next;
}

Matrix batch_fim(const SensitivityBank& bank, const NoiseWhitener& wh, const Matrix& u) {
    if (u.cols() != bank.n_u) throw std::invalid_argument("batch_fim: u must be T x n_u");
    const int p = bank.n_theta_g();
    Matrix fim = Matrix::Zero(p, p);
    std::vector<Vector> history;
    history.reserve(u.rows());
    for (Eigen::Index t = 0; t < u.rows(); ++t) {
        const Matrix g = sensitivity_at_sample(bank, history);
        fim += g.transpose() * wh.lambda_inv * g;
        history.push_back(u.row(t).transpose());
    }
    return symmetrized(fim);
}

}  // namespace oid
