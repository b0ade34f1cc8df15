#pragma once

#include "unissda/types.hpp"

#include <vector>

namespace unissda::model {

// Logits of disallowed classes are set to this sentinel; after softmax their
// probability underflows to exactly 0, so masking keeps exact softmax
// semantics and gradients.
inline constexpr double kMaskedLogit = -1e30;

// One softmax classification head. In cosine mode, weight rows and inputs
// are unit-normalized before the inner product and the bias is unused.
struct ClassifierParams {
    Matrix weights;  // C×d
    Vector bias;     // C
    double temperature = 1.0;
    bool cosine_mode = false;

    Eigen::Index num_classes() const { return weights.rows(); }
    Eigen::Index input_dim() const { return weights.cols(); }
};

// Per-domain class mask over the C head outputs.
struct LogitMask {
    std::vector<std::uint8_t> allowed;

    static LogitMask all(Eigen::Index num_classes);
    static LogitMask from_indices(Eigen::Index num_classes, const std::vector<int>& indices);
    bool is_allowed(Eigen::Index c) const { return allowed[static_cast<std::size_t>(c)] != 0; }
    Eigen::Index size() const { return static_cast<Eigen::Index>(allowed.size()); }
};

ClassifierParams init_classifier(Eigen::Index num_classes, Eigen::Index input_dim,
                                 std::uint64_t seed, double init_std = 0.01,
                                 double temperature = 1.0, bool cosine_mode = false);

// logits = (optionally cosine-normalized) linear map divided by temperature;
// masked classes carry the sentinel.
Matrix forward(const ClassifierParams& params, const Matrix& features, const LogitMask& mask);

// Numerically stable softmax (max subtraction). Throws std::domain_error if
// every entry is masked.
Vector softmax(const Vector& logits);
Matrix softmax_rows(const Matrix& logits);

// softmax(lambda*g + (1-lambda)*g_prime), applied row-wise in the batch form.
Vector interpolate_logits(const Vector& g, const Vector& g_prime, double lambda);
Matrix interpolate_logits_rows(const Matrix& g, const Matrix& g_prime, double lambda);

struct CeGradients {
    double loss = 0.0;
    Matrix grad_weights;   // C×d
    Vector grad_bias;      // C
    Matrix grad_features;  // N×d, filled only when requested
};

// Mean cross-entropy over the batch with optional per-sample weights, and the
// analytic gradient. The returned loss is the pure (weighted-mean) CE; the
// gradient additionally carries weight_decay * params. Set want_feature_grad
// to also get dLoss/dfeatures for backprop into a learnable extractor.
CeGradients ce_loss_and_grad(const ClassifierParams& params, const Matrix& features,
                             const std::vector<int>& labels, const LogitMask& mask,
                             const Vector& sample_weights = Vector(), double weight_decay = 0.0,
                             bool want_feature_grad = false);

// Row-wise argmax with ties broken by lowest index.
std::vector<int> argmax_rows(const Matrix& values);

// Feature extractor f. Empty weights mean the identity map (frozen-encoder
// regime: heads operate directly on precomputed features). Otherwise a
// single tanh hidden layer.
struct FeatureExtractor {
    Matrix weights;  // width×d
    Vector bias;     // width

    bool is_identity() const { return weights.size() == 0; }
    Eigen::Index output_dim(Eigen::Index input_dim) const {
        return is_identity() ? input_dim : weights.rows();
    }
    Matrix forward(const Matrix& inputs) const;
};

FeatureExtractor init_extractor(Eigen::Index hidden_width, Eigen::Index input_dim,
                                std::uint64_t seed, double init_std = 0.01);

struct ExtractorGradients {
    Matrix grad_weights;
    Vector grad_bias;
};

// Backprop through tanh(inputs * W^T + b). `activations` must be the forward
// output for `inputs`.
ExtractorGradients extractor_backward(const FeatureExtractor& f, const Matrix& inputs,
                                      const Matrix& activations, const Matrix& grad_activations);

// The inference model: extractor plus the semi-supervised head. `classes`
// lists the raw class id behind each head output, sorted ascending (the
// source/target label union), so head index i predicts class classes[i].
struct Model {
    FeatureExtractor extractor;
    ClassifierParams head;
    std::vector<int> classes;

    Matrix logits(const Matrix& inputs, const LogitMask& mask) const {
        return model::forward(head, extractor.forward(inputs), mask);
    }
    std::vector<int> predict(const Matrix& inputs, const LogitMask& mask) const;
};

}  // namespace unissda::model
