#pragma once

#include "unissda/model.hpp"
#include "unissda/optimizer.hpp"
#include "unissda/pgpr.hpp"
#include "unissda/rng.hpp"
#include "unissda/types.hpp"

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace unissda::train {

using unissda::FeatureDataset;
using unissda::LabelSpaceConfig;
using unissda::Matrix;
using unissda::Vector;

enum class Method { s_plus_t, naive_pseudo_label, pgpr };

const char* to_string(Method m);
Method method_from_string(const std::string& name);

struct AugmentConfig {
    double weak_noise_sigma = 0.1;
    double strong_noise_sigma = 1.0;
    double strong_dropout_rate = 0.0;
};

// Which refinement stages run; disabling both leaves raw head predictions
// with the half-weight thresholding still applied.
struct AblationConfig {
    bool group_reweighting = true;
    bool classifier_aggregation = true;
};

struct TrainConfig {
    Method method = Method::pgpr;
    Eigen::Index iterations = 1500;
    Eigen::Index batch_labeled = 24;
    Eigen::Index batch_unlabeled = 24;
    double tau = 0.9;
    Eigen::Index warmup_T = 500;  // unlabeled-loss warmup horizon

    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    optimizer::LrSchedule schedule = optimizer::LrSchedule::constant;
    Eigen::Index lr_warmup_steps = 50;  // used by cosine_with_warmup

    AugmentConfig augmentation;
    bool logit_interpolation = false;
    // Fraction of each labeled batch drawn from the source domain; negative
    // means one pooled uniform draw over all labeled samples.
    double source_fraction = -1.0;
    // Fixed confidence cutoff for the naive baseline; below it samples are
    // dropped from the unlabeled loss entirely.
    double naive_threshold = 0.9;
    double threshold_ema_decay = 0.0;  // 0 disables the EMA

    Eigen::Index hidden_width = 0;  // 0 keeps the identity extractor
    double temperature = 1.0;
    bool cosine_head = false;

    Eigen::Index log_interval = 50;
    std::uint64_t seed = 0;
    AblationConfig ablation;

    // Test hooks: values >= 0 pin the warmup weight / interpolation lambda.
    double mu_override = -1.0;
    double interp_lambda_override = -1.0;

    void validate() const;
};

// Losses and refinement stats for one iteration. The pseudo-label fields are
// batch-level here; history records carry full-set versions.
struct StepStats {
    Eigen::Index iteration = 0;
    double labeled_loss = 0.0;
    double unlabeled_loss = 0.0;
    double mu = 0.0;
    double c_tau = 0.0;
    double pseudo_label_accuracy = 0.0;
    double fraction_above_threshold = 0.0;
};

// One logged snapshot: step stats plus diagnostics over the whole unlabeled
// target training set (the data behind the misclassification-rate curves).
struct HistoryRecord {
    Eigen::Index iteration = 0;
    double labeled_loss = 0.0;
    double unlabeled_loss = 0.0;
    double mu = 0.0;
    double c_tau = 0.0;
    double pseudo_label_accuracy = 0.0;
    double fraction_above_threshold = 0.0;
    double private_as_common_rate = 0.0;
    double target_private_accuracy = 0.0;
    double predicted_private_fraction = 0.0;
};

struct TrainHistory {
    std::vector<HistoryRecord> records;
};

void write_history_jsonl(const TrainHistory& history, const std::string& path);
TrainHistory read_history_jsonl(const std::string& path);

// Warmup weight mu(t) = 1/2 - 1/2 cos(min(pi, pi t / T)); clamps at 1 for
// t >= T.
double warmup_weight(Eigen::Index t, Eigen::Index T);

enum class AugmentKind { weak, strong };

// Weak: additive Gaussian noise. Strong: larger noise, then independent
// coordinate dropout rescaled by 1/(1-rate).
Matrix augment(const Matrix& features, AugmentKind kind, const AugmentConfig& cfg, Rng& rng);

// Mean cross-entropy of the strong-view probabilities against the hard
// pseudo-labels, weight 1 for confident samples and 1/2 below c_tau. Returns
// the loss and the per-sample weights.
std::pair<double, Vector> unlabeled_loss(const std::vector<pgpr::RefinementResult>& refined,
                                         const Matrix& strong_probs, double c_tau);

// Everything a training run consumes. `target` must already carry splits and
// k-shot labels; `source` must carry splits.
struct TrainData {
    FeatureDataset source;
    FeatureDataset target;
    LabelSpaceConfig label_space;
};

struct TrainResult {
    model::Model trained;  // extractor + semi-supervised head, prior dropped
    model::ClassifierParams prior_head;  // exposed for diagnostics only
    TrainHistory history;
};

class Trainer {
   public:
    Trainer(const TrainConfig& cfg, const TrainData& data);
    ~Trainer();
    Trainer(Trainer&&) noexcept;
    Trainer& operator=(Trainer&&) noexcept;

    // One optimization step; throws NumericalAbort on non-finite losses.
    StepStats step();
    Eigen::Index iteration() const;

    model::Model current_model() const;
    const model::ClassifierParams& prior_head() const;
    const model::LogitMask& target_mask() const;
    const model::LogitMask& source_mask() const;

    // Full-set diagnostics used for history records at log points. When a
    // debug stream is attached, the same pass appends one refinement record
    // per unlabeled training sample.
    HistoryRecord log_record(const StepStats& stats);
    void attach_debug_stream(std::ostream* out);

   private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Runs the configured number of iterations, logging every log_interval steps
// (plus the first and last). Deterministic given config and data. A non-null
// debug stream receives per-sample refinement records at each log point.
TrainResult run(const TrainConfig& cfg, const TrainData& data, std::ostream* debug = nullptr);

}  // namespace unissda::train
