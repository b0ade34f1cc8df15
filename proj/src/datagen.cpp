#include "unissda/datagen.hpp"

#include "unissda/errors.hpp"
#include "unissda/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace unissda::datagen {

namespace {

Vector random_unit_vector(Rng& rng, int dim) {
    Vector v(dim);
    double norm_sq = 0.0;
    do {
        for (int i = 0; i < dim; ++i) v[i] = rng.normal();
        norm_sq = v.squaredNorm();
    } while (norm_sq < 1e-24);
    return v / std::sqrt(norm_sq);
}

// Rotation in the plane of coordinates 0 and 1; identity elsewhere.
void rotate_in_place(Matrix& features, double angle) {
    if (angle == 0.0) return;
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    for (Eigen::Index r = 0; r < features.rows(); ++r) {
        const double x0 = features(r, 0);
        const double x1 = features(r, 1);
        features(r, 0) = c * x0 - s * x1;
        features(r, 1) = s * x0 + c * x1;
    }
}

FeatureDataset sample_domain(const SyntheticConfig& cfg, const Matrix& class_means,
                             Domain domain, Rng& rng) {
    const int n_per_class = cfg.samples_per_class_per_domain;
    const Eigen::Index total = static_cast<Eigen::Index>(cfg.num_classes_total) * n_per_class;

    FeatureDataset ds;
    ds.domain = domain;
    ds.features.resize(total, cfg.feature_dim);
    ds.class_ids.reserve(static_cast<std::size_t>(total));
    Eigen::Index row = 0;
    for (int c = 0; c < cfg.num_classes_total; ++c) {
        for (int i = 0; i < n_per_class; ++i, ++row) {
            for (int j = 0; j < cfg.feature_dim; ++j) {
                ds.features(row, j) = class_means(c, j) + cfg.cluster_spread * rng.normal();
            }
            ds.class_ids.push_back(c);
        }
    }
    ds.labeled.assign(static_cast<std::size_t>(total), 1);
    ds.splits.assign(static_cast<std::size_t>(total), Split::train);
    ds.label_set.resize(static_cast<std::size_t>(cfg.num_classes_total));
    std::iota(ds.label_set.begin(), ds.label_set.end(), 0);
    return ds;
}

FeatureDataset filter_classes(const FeatureDataset& ds, const std::vector<int>& keep) {
    std::vector<int> rows;
    for (std::size_t i = 0; i < ds.class_ids.size(); ++i) {
        if (std::binary_search(keep.begin(), keep.end(), ds.class_ids[i])) {
            rows.push_back(static_cast<int>(i));
        }
    }
    FeatureDataset out = subset(ds, rows);
    out.label_set = keep;
    return out;
}

}  // namespace

std::pair<FeatureDataset, FeatureDataset> generate_domain_pair(const SyntheticConfig& cfg) {
    cfg.validate();

    const double radius = 10.0 * cfg.cluster_spread;
    Rng mean_rng = stream(cfg.seed, "means");
    Matrix source_means(cfg.num_classes_total, cfg.feature_dim);
    for (int c = 0; c < cfg.num_classes_total; ++c) {
        source_means.row(c) = (radius * random_unit_vector(mean_rng, cfg.feature_dim)).transpose();
    }

    Rng shift_rng = stream(cfg.seed, "shift");
    const Vector shift_direction = random_unit_vector(shift_rng, cfg.feature_dim);
    Matrix target_means = source_means;
    target_means.rowwise() += (cfg.shift_magnitude * shift_direction).transpose();

    Rng src_rng = stream(cfg.seed, "source_samples");
    Rng trg_rng = stream(cfg.seed, "target_samples");
    FeatureDataset source = sample_domain(cfg, source_means, Domain::source, src_rng);
    FeatureDataset target = sample_domain(cfg, target_means, Domain::target, trg_rng);
    rotate_in_place(target.features, cfg.rotation_angle);
    return {std::move(source), std::move(target)};
}

LabelSpaceResult apply_label_space_setting(const FeatureDataset& src, const FeatureDataset& trg,
                                           Setting setting, const GroupCounts& counts) {
    const int total = static_cast<int>(src.label_set.size());

    LabelSpaceConfig cfg;
    cfg.setting = setting;

    if (setting == Setting::closed || setting == Setting::closed_label_shift) {
        cfg.source_classes = src.label_set;
        cfg.target_classes = src.label_set;
    } else {
        if (counts.common < 1) {
            throw ConfigError("common class count must be positive in every setting");
        }
        const bool needs_src_private = setting == Setting::partial || setting == Setting::open_partial;
        const bool needs_trg_private = setting == Setting::open || setting == Setting::open_partial;
        if (needs_src_private && counts.source_private < 1) {
            throw ConfigError("setting requires at least one source-private class");
        }
        if (needs_trg_private && counts.target_private < 1) {
            throw ConfigError("setting requires at least one target-private class");
        }
        if (!needs_src_private && counts.source_private > 0) {
            throw ConfigError("setting does not admit source-private classes");
        }
        if (!needs_trg_private && counts.target_private > 0) {
            throw ConfigError("setting does not admit target-private classes");
        }
        const int needed = counts.common + counts.source_private + counts.target_private;
        if (needed > total) {
            throw ConfigError("group counts need " + std::to_string(needed) + " classes but only " +
                              std::to_string(total) + " are available");
        }
        // Contiguous index blocks: common, then source-private, then target-private.
        const auto& all = src.label_set;
        cfg.source_classes.assign(all.begin(), all.begin() + counts.common + counts.source_private);
        cfg.target_classes.assign(all.begin(), all.begin() + counts.common);
        cfg.target_classes.insert(cfg.target_classes.end(),
                                  all.begin() + counts.common + counts.source_private,
                                  all.begin() + needed);
    }

    LabelSpaceResult result;
    result.config = cfg;
    result.source = filter_classes(src, cfg.source_classes);
    result.target = filter_classes(trg, cfg.target_classes);

    if (setting == Setting::closed_label_shift) {
        // Geometric down-sampling of target class counts, ratio 0.85 per class
        // rank, keeping the leading samples of each class (draws are iid).
        std::vector<int> keep_rows;
        for (std::size_t rank = 0; rank < cfg.target_classes.size(); ++rank) {
            const int cls = cfg.target_classes[rank];
            std::vector<int> rows;
            for (std::size_t i = 0; i < result.target.class_ids.size(); ++i) {
                if (result.target.class_ids[i] == cls) rows.push_back(static_cast<int>(i));
            }
            const auto keep = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::llround(
                       static_cast<double>(rows.size()) * std::pow(0.85, static_cast<double>(rank)))));
            rows.resize(std::min(rows.size(), keep));
            keep_rows.insert(keep_rows.end(), rows.begin(), rows.end());
        }
        std::sort(keep_rows.begin(), keep_rows.end());
        const auto label_set = result.target.label_set;
        result.target = subset(result.target, keep_rows);
        result.target.label_set = label_set;
    }
    return result;
}

void assign_splits(FeatureDataset& ds, std::uint64_t seed) {
    Rng rng = stream(seed, "split");
    // Per-class shuffled order, then 50/20/30 with the remainder to train.
    for (const int cls : ds.label_set) {
        std::vector<int> rows;
        for (std::size_t i = 0; i < ds.class_ids.size(); ++i) {
            if (ds.class_ids[i] == cls) rows.push_back(static_cast<int>(i));
        }
        rng.shuffle(rows);
        const auto n = rows.size();
        const auto n_val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
        const auto n_test = static_cast<std::size_t>(std::llround(0.3 * static_cast<double>(n)));
        const auto n_train = n - n_val - n_test;
        for (std::size_t i = 0; i < n; ++i) {
            Split s = Split::train;
            if (i >= n_train && i < n_train + n_val) s = Split::val;
            if (i >= n_train + n_val) s = Split::test;
            ds.splits[static_cast<std::size_t>(rows[i])] = s;
        }
    }
}

FeatureDataset split_and_label(const FeatureDataset& trg, int k, std::uint64_t seed) {
    if (k < 0) throw ConfigError("k-shot count must be nonnegative");

    FeatureDataset out = trg;
    assign_splits(out, derive_seed(seed, "split"));

    std::fill(out.labeled.begin(), out.labeled.end(), 0);
    Rng rng = stream(seed, "label");
    for (const int cls : out.label_set) {
        std::vector<int> train_rows;
        for (std::size_t i = 0; i < out.class_ids.size(); ++i) {
            if (out.class_ids[i] == cls && out.splits[i] == Split::train) {
                train_rows.push_back(static_cast<int>(i));
            }
        }
        if (static_cast<int>(train_rows.size()) < k) {
            throw DataError("class " + std::to_string(cls) + " has only " +
                            std::to_string(train_rows.size()) + " training samples, need k=" +
                            std::to_string(k));
        }
        rng.shuffle(train_rows);
        for (int i = 0; i < k; ++i) {
            out.labeled[static_cast<std::size_t>(train_rows[static_cast<std::size_t>(i)])] = 1;
        }
    }
    return out;
}

ClassGroups class_groups(const LabelSpaceConfig& cfg) {
    ClassGroups groups;
    std::set_intersection(cfg.source_classes.begin(), cfg.source_classes.end(),
                          cfg.target_classes.begin(), cfg.target_classes.end(),
                          std::back_inserter(groups.common));
    std::set_difference(cfg.source_classes.begin(), cfg.source_classes.end(),
                        cfg.target_classes.begin(), cfg.target_classes.end(),
                        std::back_inserter(groups.source_private));
    std::set_difference(cfg.target_classes.begin(), cfg.target_classes.end(),
                        cfg.source_classes.begin(), cfg.source_classes.end(),
                        std::back_inserter(groups.target_private));
    return groups;
}

}  // namespace unissda::datagen
