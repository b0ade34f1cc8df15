#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace unissda {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Domain : std::uint8_t { source = 0, target = 1 };
enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };

enum class Setting : std::uint8_t {
    closed = 0,
    closed_label_shift = 1,
    open = 2,
    partial = 3,
    open_partial = 4,
};

const char* to_string(Domain d);
const char* to_string(Split s);
const char* to_string(Setting s);
Setting setting_from_string(const std::string& name);

// Controls the synthetic covariate-shift generator. Identical config + seed
// yields bit-identical datasets.
struct SyntheticConfig {
    int num_classes_total = 12;
    int feature_dim = 3;
    int samples_per_class_per_domain = 90;
    double cluster_spread = 1.0;    // within-class standard deviation
    double shift_magnitude = 3.0;   // norm of the per-class mean translation
    double rotation_angle = 1.2;    // radians; rotation of target features
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

// Source/target label sets under one of the five adaptation settings.
struct LabelSpaceConfig {
    std::vector<int> source_classes;  // sorted, unique
    std::vector<int> target_classes;  // sorted, unique
    Setting setting = Setting::closed;
};

// The three disjoint class groups induced by the label sets.
struct ClassGroups {
    std::vector<int> common;          // target ∩ source
    std::vector<int> source_private;  // source \ target
    std::vector<int> target_private;  // target \ source
};

// A set of feature vectors with per-sample metadata. `label_set` is the
// domain's label space; every class_id is a member of it.
struct FeatureDataset {
    Matrix features;                    // N×d
    std::vector<int> class_ids;         // N
    Domain domain = Domain::source;
    std::vector<std::uint8_t> labeled;  // N, 0/1
    std::vector<Split> splits;          // N
    std::vector<int> label_set;         // sorted, unique

    Eigen::Index size() const { return features.rows(); }
    Eigen::Index dim() const { return features.cols(); }

    void validate() const;  // throws DataError on inconsistent fields
};

// Row selection helpers.
FeatureDataset subset(const FeatureDataset& ds, const std::vector<int>& rows);
std::vector<int> rows_with_split(const FeatureDataset& ds, Split split);
std::vector<int> rows_labeled(const FeatureDataset& ds, bool labeled);

// Sorted union of the two label sets; the classifier head has one output per
// entry. Class id <-> head index translation goes through this.
std::vector<int> label_union(const LabelSpaceConfig& cfg);

}  // namespace unissda
