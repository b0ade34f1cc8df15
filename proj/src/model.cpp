#include "unissda/model.hpp"

#include "unissda/errors.hpp"
#include "unissda/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace unissda::model {

namespace {

constexpr double kNormFloor = 1e-12;

Matrix normalized_rows(const Matrix& m) {
    Matrix out = m;
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        out.row(r) /= std::max(out.row(r).norm(), kNormFloor);
    }
    return out;
}

void apply_mask(Matrix& logits, const LogitMask& mask) {
    if (mask.size() != logits.cols()) {
        throw ShapeError("mask size " + std::to_string(mask.size()) + " != class count " +
                         std::to_string(logits.cols()));
    }
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        if (!mask.is_allowed(c)) logits.col(c).setConstant(kMaskedLogit);
    }
}

}  // namespace

LogitMask LogitMask::all(Eigen::Index num_classes) {
    LogitMask m;
    m.allowed.assign(static_cast<std::size_t>(num_classes), 1);
    return m;
}

LogitMask LogitMask::from_indices(Eigen::Index num_classes, const std::vector<int>& indices) {
    LogitMask m;
    m.allowed.assign(static_cast<std::size_t>(num_classes), 0);
    for (const int i : indices) m.allowed.at(static_cast<std::size_t>(i)) = 1;
    bool any = false;
    for (const auto a : m.allowed) any = any || a;
    if (!any) throw ConfigError("logit mask must allow at least one class");
    return m;
}

ClassifierParams init_classifier(Eigen::Index num_classes, Eigen::Index input_dim,
                                 std::uint64_t seed, double init_std, double temperature,
                                 bool cosine_mode) {
    Rng rng(seed);
    ClassifierParams p;
    p.weights.resize(num_classes, input_dim);
    for (Eigen::Index c = 0; c < num_classes; ++c) {
        for (Eigen::Index j = 0; j < input_dim; ++j) {
            p.weights(c, j) = init_std * rng.normal();
        }
    }
    p.bias = Vector::Zero(num_classes);
    p.temperature = temperature;
    p.cosine_mode = cosine_mode;
    return p;
}

Matrix forward(const ClassifierParams& params, const Matrix& features, const LogitMask& mask) {
    if (features.cols() != params.input_dim()) {
        throw ShapeError("feature dim " + std::to_string(features.cols()) +
                         " != classifier input dim " + std::to_string(params.input_dim()));
    }
    if (params.temperature <= 0.0) throw ConfigError("temperature must be positive");

    Matrix logits;
    if (params.cosine_mode) {
        logits = normalized_rows(features) * normalized_rows(params.weights).transpose();
    } else {
        logits = features * params.weights.transpose();
        logits.rowwise() += params.bias.transpose();
    }
    logits /= params.temperature;
    apply_mask(logits, mask);
    return logits;
}

Vector softmax(const Vector& logits) {
    const double peak = logits.maxCoeff();
    if (peak <= kMaskedLogit) throw std::domain_error("softmax: all classes are masked");
    // Eigen's vectorized exp clamps very negative inputs to a denormal rather
    // than underflowing; force sentinel entries to exactly zero.
    Vector p = (logits.array() <= kMaskedLogit)
                   .select(0.0, (logits.array() - peak).exp())
                   .matrix();
    return p / p.sum();
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        p.row(r) = softmax(logits.row(r).transpose()).transpose();
    }
    return p;
}

Vector interpolate_logits(const Vector& g, const Vector& g_prime, double lambda) {
    if (g.size() != g_prime.size()) throw ShapeError("interpolate_logits: size mismatch");
    return softmax(lambda * g + (1.0 - lambda) * g_prime);
}

Matrix interpolate_logits_rows(const Matrix& g, const Matrix& g_prime, double lambda) {
    if (g.rows() != g_prime.rows() || g.cols() != g_prime.cols()) {
        throw ShapeError("interpolate_logits: shape mismatch");
    }
    return softmax_rows(lambda * g + (1.0 - lambda) * g_prime);
}

CeGradients ce_loss_and_grad(const ClassifierParams& params, const Matrix& features,
                             const std::vector<int>& labels, const LogitMask& mask,
                             const Vector& sample_weights, double weight_decay,
                             bool want_feature_grad) {
    const Eigen::Index n = features.rows();
    const Eigen::Index num_classes = params.num_classes();
    if (n == 0) throw ShapeError("ce_loss_and_grad: empty batch");
    if (static_cast<Eigen::Index>(labels.size()) != n) {
        throw ShapeError("ce_loss_and_grad: label count != batch size");
    }
    if (sample_weights.size() != 0 && sample_weights.size() != n) {
        throw ShapeError("ce_loss_and_grad: sample weight count != batch size");
    }

    // Keep the normalized views around in cosine mode; the gradient needs them.
    Matrix features_hat, weights_hat;
    Matrix logits;
    if (params.cosine_mode) {
        features_hat = normalized_rows(features);
        weights_hat = normalized_rows(params.weights);
        logits = features_hat * weights_hat.transpose() / params.temperature;
    } else {
        logits = features * params.weights.transpose();
        logits.rowwise() += params.bias.transpose();
        logits /= params.temperature;
    }
    apply_mask(logits, mask);

    CeGradients out;
    Matrix grad_logits(n, num_classes);  // dLoss/dlogits
    const double inv_n = 1.0 / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= num_classes || !mask.is_allowed(y)) {
            throw LabelError("label " + std::to_string(y) + " outside the allowed class set");
        }
        const double w = sample_weights.size() == 0 ? 1.0 : sample_weights[i];

        const double peak = logits.row(i).maxCoeff();
        const double lse = peak + std::log((logits.row(i).array() - peak).exp().sum());
        out.loss += w * (lse - logits(i, y)) * inv_n;

        grad_logits.row(i) = (logits.row(i).array() - lse).exp().matrix();
        grad_logits(i, y) -= 1.0;
        grad_logits.row(i) *= w * inv_n;
    }
    // Same clamped-exp caveat as softmax: masked classes must see no gradient.
    for (Eigen::Index c = 0; c < num_classes; ++c) {
        if (!mask.is_allowed(c)) grad_logits.col(c).setZero();
    }

    const double inv_t = 1.0 / params.temperature;
    if (params.cosine_mode) {
        // logit_ic = <w_c/|w_c|, x_i/|x_i|> / T. With s = features_hat * weights_hat^T,
        // the chain rule through the normalizations gives
        //   dL/dw_c = ((G^T Xh)_c - wh_c * sum_i G_ic s_ic) / (T |w_c|)
        //   dL/dx_i = ((G Wh)_i  - xh_i * sum_c G_ic s_ic) / (T |x_i|)
        const Matrix similarity = features_hat * weights_hat.transpose();
        const Vector col_dots =
            (grad_logits.array() * similarity.array()).colwise().sum().transpose().matrix();
        out.grad_weights = grad_logits.transpose() * features_hat;
        out.grad_weights -= col_dots.asDiagonal() * weights_hat;
        for (Eigen::Index c = 0; c < num_classes; ++c) {
            out.grad_weights.row(c) *= inv_t / std::max(params.weights.row(c).norm(), kNormFloor);
        }
        out.grad_bias = Vector::Zero(num_classes);
        if (want_feature_grad) {
            const Vector row_dots =
                (grad_logits.array() * similarity.array()).rowwise().sum().matrix();
            out.grad_features = grad_logits * weights_hat;
            out.grad_features -= row_dots.asDiagonal() * features_hat;
            for (Eigen::Index i = 0; i < n; ++i) {
                out.grad_features.row(i) *= inv_t / std::max(features.row(i).norm(), kNormFloor);
            }
        }
    } else {
        out.grad_weights = inv_t * (grad_logits.transpose() * features);
        out.grad_bias = inv_t * grad_logits.colwise().sum().transpose();
        if (want_feature_grad) {
            out.grad_features = inv_t * (grad_logits * params.weights);
        }
    }

    if (weight_decay != 0.0) {
        out.grad_weights += weight_decay * params.weights;
        out.grad_bias += weight_decay * params.bias;
    }
    return out;
}

std::vector<int> argmax_rows(const Matrix& values) {
    std::vector<int> out(static_cast<std::size_t>(values.rows()));
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        int best = 0;
        for (Eigen::Index c = 1; c < values.cols(); ++c) {
            if (values(r, c) > values(r, best)) best = static_cast<int>(c);
        }
        out[static_cast<std::size_t>(r)] = best;
    }
    return out;
}

std::vector<int> Model::predict(const Matrix& inputs, const LogitMask& mask) const {
    if (static_cast<Eigen::Index>(classes.size()) != head.num_classes()) {
        throw ShapeError("model class list size != head output count");
    }
    std::vector<int> out = argmax_rows(logits(inputs, mask));
    for (auto& idx : out) idx = classes[static_cast<std::size_t>(idx)];
    return out;
}

Matrix FeatureExtractor::forward(const Matrix& inputs) const {
    if (is_identity()) return inputs;
    if (inputs.cols() != weights.cols()) {
        throw ShapeError("extractor input dim " + std::to_string(inputs.cols()) +
                         " != weight dim " + std::to_string(weights.cols()));
    }
    Matrix pre = inputs * weights.transpose();
    pre.rowwise() += bias.transpose();
    return pre.array().tanh().matrix();
}

FeatureExtractor init_extractor(Eigen::Index hidden_width, Eigen::Index input_dim,
                                std::uint64_t seed, double init_std) {
    FeatureExtractor f;
    if (hidden_width <= 0) return f;
    Rng rng(seed);
    f.weights.resize(hidden_width, input_dim);
    for (Eigen::Index r = 0; r < hidden_width; ++r) {
        for (Eigen::Index j = 0; j < input_dim; ++j) {
            f.weights(r, j) = init_std * rng.normal();
        }
    }
    f.bias = Vector::Zero(hidden_width);
    return f;
}

ExtractorGradients extractor_backward(const FeatureExtractor& f, const Matrix& inputs,
                                      const Matrix& activations, const Matrix& grad_activations) {
    if (f.is_identity()) throw ShapeError("extractor_backward on identity extractor");
    // z = tanh(a) with a = X W^T + b, so dL/da = dL/dz * (1 - z^2).
    const Matrix grad_pre =
        (grad_activations.array() * (1.0 - activations.array() * activations.array())).matrix();
    ExtractorGradients g;
    g.grad_weights = grad_pre.transpose() * inputs;
    g.grad_bias = grad_pre.colwise().sum().transpose();
    return g;
}

}  // namespace unissda::model
