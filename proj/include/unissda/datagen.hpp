#pragma once

#include "unissda/types.hpp"

#include <cstdint>
#include <utility>

namespace unissda::datagen {

// Class counts per group when carving up the label space. Ignored for the
// closed settings, where every class is common.
struct GroupCounts {
    int common = 0;
    int source_private = 0;
    int target_private = 0;
};

// Draws one source/target dataset pair from the seeded generator. Source
// clusters are isotropic Gaussians whose means lie uniformly on a sphere of
// radius 10*cluster_spread; target clusters share class identity but their
// means are translated by shift_magnitude along one shared seeded direction,
// and every target feature is rotated by rotation_angle in the plane of the
// first two coordinates.
std::pair<FeatureDataset, FeatureDataset> generate_domain_pair(const SyntheticConfig& cfg);

// Assigns classes to groups by contiguous index blocks (first block common,
// then source-private, then target-private) and removes samples of excluded
// classes from each domain. closed_label_shift additionally down-samples
// target class counts geometrically (ratio 0.85 per class rank).
struct LabelSpaceResult {
    FeatureDataset source;
    FeatureDataset target;
    LabelSpaceConfig config;
};
LabelSpaceResult apply_label_space_setting(const FeatureDataset& src, const FeatureDataset& trg,
                                           Setting setting, const GroupCounts& counts);

// 50/20/30 train/val/test split by count per class; rounding remainder goes
// to train. Deterministic given the seed.
void assign_splits(FeatureDataset& ds, std::uint64_t seed);

// Splits the target dataset and marks exactly k training samples per class
// as labeled, drawn without replacement. k = 0 leaves everything unlabeled.
FeatureDataset split_and_label(const FeatureDataset& trg, int k, std::uint64_t seed);

// Set algebra over the label space: common, source-private, target-private.
ClassGroups class_groups(const LabelSpaceConfig& cfg);

}  // namespace unissda::datagen
