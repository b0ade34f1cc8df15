#pragma once

#include "unissda/model.hpp"
#include "unissda/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace unissda::metrics {

using unissda::ClassGroups;
using unissda::FeatureDataset;

enum class SplitKind { inductive_test, transductive_unlabeled_train };

std::string to_string(SplitKind kind);
SplitKind split_kind_from_string(const std::string& name);

// Target-domain evaluation summary. All accuracies are micro-averaged
// (per-sample); per_class_accuracy is provided for inspection only.
struct MetricsReport {
    double overall_accuracy = 0.0;
    double common_accuracy = 0.0;
    double target_private_accuracy = 0.0;
    double private_as_common_rate = 0.0;
    // Fraction of all evaluated samples predicted into a target-private class.
    double predicted_private_fraction = 0.0;
    std::map<int, double> per_class_accuracy;
    long long n_samples = 0;
    long long n_common = 0;
    long long n_target_private = 0;
    // False when the dataset holds no target-private samples; the two private
    // rates are reported as 0 in that case.
    bool has_private_samples = false;
    SplitKind split_kind = SplitKind::inductive_test;
    std::string averaging = "micro";
};

// Predictions are argmax of the model's masked logits; class ids are raw
// (mapped through model.classes). Throws DataError on an empty dataset.
MetricsReport evaluate(const model::Model& m, const FeatureDataset& dataset,
                       const ClassGroups& groups, const model::LogitMask& mask,
                       SplitKind kind = SplitKind::inductive_test);

// Same metrics computed from precomputed prediction/truth class-id vectors.
MetricsReport tally(const std::vector<int>& predictions, const std::vector<int>& truths,
                    const ClassGroups& groups, SplitKind kind);

// Among samples whose true class is target-private, the fraction predicted as
// a common class. With no private samples returns 0 and clears *has_private.
double private_as_common_rate(const std::vector<int>& predictions,
                              const std::vector<int>& truths, const ClassGroups& groups,
                              bool* has_private = nullptr);

struct FieldStats {
    double mean = 0.0;
    double stddev = 0.0;
};

// Per-field sample mean and standard deviation (divisor n-1; 0 when n=1).
struct AggregateReport {
    FieldStats overall_accuracy;
    FieldStats common_accuracy;
    FieldStats target_private_accuracy;
    FieldStats private_as_common_rate;
    FieldStats predicted_private_fraction;
    long long n_runs = 0;
};

AggregateReport aggregate_runs(const std::vector<MetricsReport>& reports);

// Flat CSV row with a frozen column order; the version tag is recorded in
// experiment manifests so downstream readers can detect schema changes.
inline constexpr int kMetricsCsvVersion = 1;
std::string report_csv_header();
std::string report_csv_row(const MetricsReport& report);

std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& text);

}  // namespace unissda::metrics
