#include "oid/mpc.hpp"

#include <stdexcept>

namespace oid {

MpcController::MpcController(StateSpace model, double q_weight, double r_weight, int horizon,
                             MpcBounds bounds, std::function<Vector(long)> reference)
    : model_(std::move(model)),
      q_weight_(q_weight),
      r_weight_(r_weight),
      horizon_(horizon),
      bounds_(bounds),
      reference_(std::move(reference)) {
    if (model_.n_u() != 1) throw std::invalid_argument("MpcController: single-input models only");
    if (horizon_ < 1) throw std::invalid_argument("MpcController: horizon must be >= 1");
    if (q_weight_ < 0.0 || r_weight_ < 0.0)
        throw std::invalid_argument("MpcController: weights must be nonnegative");

    const int ny = model_.n_y();
    c_a_pow_.reserve(horizon_ + 1);
    c_a_pow_.push_back(model_.c);
    for (int j = 1; j <= horizon_; ++j) c_a_pow_.push_back(c_a_pow_.back() * model_.a);

    // yhat(t+j) = C A^j x + sum_{i<j} C A^{j-1-i} B u_i
    impulse_ = Matrix::Zero(horizon_ * ny, horizon_);
    for (int j = 1; j <= horizon_; ++j)
        for (int i = 0; i < j; ++i)
            impulse_.block((j - 1) * ny, i, ny, 1) = c_a_pow_[j - 1 - i] * model_.b;

    Matrix delta = Matrix::Identity(horizon_, horizon_);
    for (int i = 1; i < horizon_; ++i) delta(i, i - 1) = -1.0;
    p_ = 2.0 * (q_weight_ * impulse_.transpose() * impulse_ +
                r_weight_ * delta.transpose() * delta);
}

double MpcController::compute(const Vector& x_hat, double u_prev, long t) {
    const int ny = model_.n_y();
    const int h = horizon_;
    Vector y_free(h * ny), r_stack(h * ny);
    for (int j = 1; j <= h; ++j) {
        y_free.segment((j - 1) * ny, ny) = c_a_pow_[j] * x_hat;
        r_stack.segment((j - 1) * ny, ny) = reference_(t + j);
    }
    Matrix delta = Matrix::Identity(h, h);
    for (int i = 1; i < h; ++i) delta(i, i - 1) = -1.0;
    Vector d0 = Vector::Zero(h);
    d0(0) = u_prev;

    QpProblem qp;
    qp.p = p_;
    qp.q = 2.0 * (q_weight_ * impulse_.transpose() * (y_free - r_stack) -
                  r_weight_ * delta.transpose() * d0);
    qp.a = Matrix::Zero(h + h * ny, h);
    qp.a.topRows(h) = Matrix::Identity(h, h);
    qp.a.bottomRows(h * ny) = impulse_;
    qp.lower = Vector(h + h * ny);
    qp.upper = Vector(h + h * ny);
    qp.lower.head(h).setConstant(-bounds_.u_max);
    qp.upper.head(h).setConstant(bounds_.u_max);
    qp.lower.tail(h * ny) = Vector::Constant(h * ny, -bounds_.y_max) - y_free;
    qp.upper.tail(h * ny) = Vector::Constant(h * ny, bounds_.y_max) - y_free;

    double move = 0.0;
    try {
        move = solve_qp(qp, {}, &warm_).x(0);
    } catch (const QpInfeasibleError&) {
        // Output band unreachable from this state: drop it and saturate.
        saturated_fallback_ = true;
        QpProblem box = qp;
        box.a = Matrix::Identity(h, h);
        box.lower = Vector::Constant(h, -bounds_.u_max);
        box.upper = Vector::Constant(h, bounds_.u_max);
        QpWarmStart fresh;
        move = solve_qp(box, {}, &fresh).x(0);
    }
    return std::clamp(move, -bounds_.u_max, bounds_.u_max);
}

MpcController mpc_controller(const ParametricLtiModel& model, const Vector& theta, double q_weight,
                             double r_weight, int horizon, MpcBounds bounds,
                             std::function<Vector(long)> reference) {
    return MpcController(model.realize(theta), q_weight, r_weight, horizon, bounds,
                         std::move(reference));
}

Matrix closed_loop_outputs(const ParametricLtiModel& model, const Vector& theta_ctrl,
                           const Vector& theta_plant, double q_weight, double r_weight,
                           int horizon, MpcBounds bounds, std::function<Vector(long)> reference,
                           int steps) {
    MpcController ctrl =
        mpc_controller(model, theta_ctrl, q_weight, r_weight, horizon, bounds, std::move(reference));
    const StateSpace plant = model.realize(theta_plant);
    Vector x_plant = Vector::Zero(plant.n_x());
    Vector x_ctrl = Vector::Zero(ctrl.model().n_x());
    double u_prev = 0.0;
    Matrix y(steps, model.n_y);
    for (int t = 0; t < steps; ++t) {
        const double u = ctrl.compute(x_ctrl, u_prev, t);
        y.row(t) = (plant.c * x_plant).transpose();
        x_plant = plant.a * x_plant + plant.b * u;
        x_ctrl = ctrl.model().a * x_ctrl + ctrl.model().b * u;
        u_prev = u;
    }
    return y;
}

}  // namespace oid
