#include "unissda/types.hpp"

#include "unissda/errors.hpp"

#include <algorithm>
#include <set>

namespace unissda {

const char* to_string(Domain d) {
    return d == Domain::source ? "source" : "target";
}

const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        default: return "test";
    }
}

const char* to_string(Setting s) {
    switch (s) {
        case Setting::closed: return "closed";
        case Setting::closed_label_shift: return "closed_label_shift";
        case Setting::open: return "open";
        case Setting::partial: return "partial";
        default: return "open_partial";
    }
}

Setting setting_from_string(const std::string& name) {
    if (name == "closed") return Setting::closed;
    if (name == "closed_label_shift") return Setting::closed_label_shift;
    if (name == "open") return Setting::open;
    if (name == "partial") return Setting::partial;
    if (name == "open_partial") return Setting::open_partial;
    throw ConfigError("unknown setting name: '" + name + "'");
}

void SyntheticConfig::validate() const {
    if (num_classes_total < 2) {
        throw ConfigError("num_classes_total must be >= 2, got " +
                          std::to_string(num_classes_total));
    }
    if (feature_dim < 2) {
        throw ConfigError("feature_dim must be >= 2, got " + std::to_string(feature_dim));
    }
    if (samples_per_class_per_domain < 1) {
        throw ConfigError("samples_per_class_per_domain must be positive, got " +
                          std::to_string(samples_per_class_per_domain));
    }
    if (cluster_spread < 0.0) {
        throw ConfigError("cluster_spread must be nonnegative");
    }
    if (shift_magnitude < 0.0) {
        throw ConfigError("shift_magnitude must be nonnegative");
    }
}

void FeatureDataset::validate() const {
    const auto n = static_cast<std::size_t>(features.rows());
    if (class_ids.size() != n || labeled.size() != n || splits.size() != n) {
        throw DataError("FeatureDataset metadata arrays do not match row count");
    }
    for (const int c : class_ids) {
        if (!std::binary_search(label_set.begin(), label_set.end(), c)) {
            throw DataError("class id " + std::to_string(c) +
                            " is not in the dataset's label set");
        }
    }
    if (domain == Domain::source) {
        for (const auto flag : labeled) {
            if (!flag) throw DataError("source samples must all be labeled");
        }
    }
}

FeatureDataset subset(const FeatureDataset& ds, const std::vector<int>& rows) {
    FeatureDataset out;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), ds.features.cols());
    out.class_ids.reserve(rows.size());
    out.labeled.reserve(rows.size());
    out.splits.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int r = rows[i];
        out.features.row(static_cast<Eigen::Index>(i)) = ds.features.row(r);
        out.class_ids.push_back(ds.class_ids[static_cast<std::size_t>(r)]);
        out.labeled.push_back(ds.labeled[static_cast<std::size_t>(r)]);
        out.splits.push_back(ds.splits[static_cast<std::size_t>(r)]);
    }
    out.domain = ds.domain;
    out.label_set = ds.label_set;
    return out;
}

std::vector<int> rows_with_split(const FeatureDataset& ds, Split split) {
    std::vector<int> rows;
    for (std::size_t i = 0; i < ds.splits.size(); ++i) {
        if (ds.splits[i] == split) rows.push_back(static_cast<int>(i));
    }
    return rows;
}

std::vector<int> rows_labeled(const FeatureDataset& ds, bool labeled) {
    std::vector<int> rows;
    for (std::size_t i = 0; i < ds.labeled.size(); ++i) {
        if (static_cast<bool>(ds.labeled[i]) == labeled) rows.push_back(static_cast<int>(i));
    }
    return rows;
}

std::vector<int> label_union(const LabelSpaceConfig& cfg) {
    std::set<int> all(cfg.source_classes.begin(), cfg.source_classes.end());
    all.insert(cfg.target_classes.begin(), cfg.target_classes.end());
    return {all.begin(), all.end()};
}

}  // namespace unissda
