#include "unissda/optimizer.hpp"

#include "unissda/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace unissda::optimizer {

OptimizerState make_optimizer(Eigen::Index num_classes, Eigen::Index input_dim, double base_lr,
                              double momentum, double weight_decay, LrSchedule schedule,
                              Eigen::Index warmup_steps, Eigen::Index total_steps) {
    if (base_lr <= 0.0) throw ConfigError("learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
    if (schedule == LrSchedule::cosine_with_warmup) {
        if (total_steps <= 0) throw ConfigError("total_steps must be positive");
        if (warmup_steps < 0 || warmup_steps > total_steps) {
            throw ConfigError("warmup_steps must lie in [0, total_steps]");
        }
    }
    OptimizerState s;
    s.base_lr = base_lr;
    s.momentum = momentum;
    s.weight_decay = weight_decay;
    s.schedule = schedule;
    s.warmup_steps = warmup_steps;
    s.total_steps = total_steps;
    s.velocity_weights = Matrix::Zero(num_classes, input_dim);
    s.velocity_bias = Vector::Zero(num_classes);
    return s;
}

double lr_at(const OptimizerState& state, Eigen::Index step) {
    if (step < 0) throw ConfigError("step must be non-negative");
    if (state.schedule == LrSchedule::constant) return state.base_lr;
    if (step < state.warmup_steps) {
        return state.base_lr * static_cast<double>(step + 1) /
               static_cast<double>(state.warmup_steps);
    }
    const auto span = static_cast<double>(state.total_steps - state.warmup_steps);
    if (span <= 0.0) return state.base_lr;
    const double progress =
        std::min(1.0, static_cast<double>(step - state.warmup_steps) / span);
    return 0.5 * state.base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

void sgd_step(Matrix& weights, Vector& bias, OptimizerState& state, const Matrix& grad_weights,
              const Vector& grad_bias, Eigen::Index step) {
    if (weights.rows() != state.velocity_weights.rows() ||
        weights.cols() != state.velocity_weights.cols() ||
        bias.size() != state.velocity_bias.size()) {
        throw ShapeError("sgd_step: parameter shape does not match optimizer state");
    }
    if (grad_weights.rows() != weights.rows() || grad_weights.cols() != weights.cols() ||
        grad_bias.size() != bias.size()) {
        throw ShapeError("sgd_step: gradient shape does not match parameters");
    }
    const double lr = lr_at(state, step);
    state.velocity_weights = state.momentum * state.velocity_weights + grad_weights;
    state.velocity_bias = state.momentum * state.velocity_bias + grad_bias;
    weights -= lr * state.velocity_weights;
    bias -= lr * state.velocity_bias;
}

}  // namespace unissda::optimizer
