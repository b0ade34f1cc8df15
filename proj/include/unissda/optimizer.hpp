#pragma once

#include "unissda/types.hpp"

#include <cstdint>

namespace unissda::optimizer {

using unissda::Matrix;
using unissda::Vector;

enum class LrSchedule { constant, cosine_with_warmup };

// SGD with momentum and decoupled learning-rate scheduling. One state object
// per parameter block (weights + bias pair).
struct OptimizerState {
    double base_lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    LrSchedule schedule = LrSchedule::constant;
    Eigen::Index warmup_steps = 0;
    Eigen::Index total_steps = 1;
    Matrix velocity_weights;
    Vector velocity_bias;
};

OptimizerState make_optimizer(Eigen::Index num_classes, Eigen::Index input_dim, double base_lr,
                              double momentum, double weight_decay,
                              LrSchedule schedule = LrSchedule::constant,
                              Eigen::Index warmup_steps = 0, Eigen::Index total_steps = 1);

// Learning rate at step t (0-based). Linear warmup to base_lr over
// warmup_steps, then cosine decay to zero at total_steps.
double lr_at(const OptimizerState& state, Eigen::Index step);

// v <- momentum * v + grad;  params <- params - lr(t) * v
void sgd_step(Matrix& weights, Vector& bias, OptimizerState& state, const Matrix& grad_weights,
              const Vector& grad_bias, Eigen::Index step);

}  // namespace unissda::optimizer
