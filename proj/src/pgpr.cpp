#include "unissda/pgpr.hpp"

#include "unissda/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <ostream>
#include <string>

namespace unissda::pgpr {

namespace {

constexpr double kGroupMassEps = 1e-12;

void check_distribution_pair(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) {
        throw ShapeError("probability vectors have sizes " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
    }
    if (a.size() == 0) throw ShapeError("empty probability vector");
}

void check_group_ids(const std::vector<int>& group, Eigen::Index num_classes) {
    for (const int c : group) {
        if (c < 0 || c >= num_classes) {
            throw ConfigError("group class index " + std::to_string(c) +
                              " outside [0, " + std::to_string(num_classes) + ")");
        }
    }
}

std::vector<int> remap(const std::vector<int>& ids, const std::vector<int>& class_order) {
    std::vector<int> out;
    out.reserve(ids.size());
    for (const int id : ids) {
        const auto it = std::lower_bound(class_order.begin(), class_order.end(), id);
        if (it == class_order.end() || *it != id) {
            throw ConfigError("class id " + std::to_string(id) + " not present in class order");
        }
        out.push_back(static_cast<int>(it - class_order.begin()));
    }
    return out;
}

}  // namespace

ClassGroups to_index_space(const ClassGroups& groups, const std::vector<int>& class_order) {
    ClassGroups out;
    out.common = remap(groups.common, class_order);
    out.source_private = remap(groups.source_private, class_order);
    out.target_private = remap(groups.target_private, class_order);
    return out;
}

Vector group_reweight(const Vector& p_u, const Vector& prior, const ClassGroups& groups,
                      bool* zero_mass_group) {
    check_distribution_pair(p_u, prior);
    const Eigen::Index num_classes = p_u.size();
    if (zero_mass_group != nullptr) *zero_mass_group = false;

    Vector out = p_u;
    for (const auto* group : {&groups.common, &groups.source_private, &groups.target_private}) {
        if (group->empty()) continue;
        check_group_ids(*group, num_classes);
        // A group spanning every class can only rescale by total/total = 1;
        // skip the division so the closed-set case stays bit-identical.
        if (static_cast<Eigen::Index>(group->size()) == num_classes) continue;

        double p_mass = 0.0;
        double prior_mass = 0.0;
        for (const int c : *group) {
            p_mass += p_u[c];
            prior_mass += prior[c];
        }
        if (p_mass > kGroupMassEps) {
            const double scale = prior_mass / p_mass;
            for (const int c : *group) out[c] = p_u[c] * scale;
        } else if (prior_mass > kGroupMassEps) {
            const double share = prior_mass / static_cast<double>(group->size());
            for (const int c : *group) out[c] = share;
            if (zero_mass_group != nullptr) *zero_mass_group = true;
        } else {
            for (const int c : *group) out[c] = 0.0;
        }
    }
    return out;
}

Vector aggregate(const Vector& reweighted, const Vector& prior) {
    check_distribution_pair(reweighted, prior);
    return 0.5 * (reweighted + prior);
}

RefinementResult refine(const Vector& p_u, const Vector& prior, const ClassGroups& groups) {
    RefinementResult r;
    r.reweighted = group_reweight(p_u, prior, groups, &r.zero_mass_group);
    r.refined = aggregate(r.reweighted, prior);
    int best = 0;
    for (Eigen::Index c = 1; c < r.refined.size(); ++c) {
        if (r.refined[c] > r.refined[best]) best = static_cast<int>(c);
    }
    r.pseudo_label = best;
    r.confidence = r.refined[best];
    return r;
}

std::vector<RefinementResult> refine_rows(const Matrix& p_u, const Matrix& prior,
                                          const ClassGroups& groups) {
    if (p_u.rows() != prior.rows() || p_u.cols() != prior.cols()) {
        throw ShapeError("refine_rows: shape mismatch");
    }
    std::vector<RefinementResult> out;
    out.reserve(static_cast<std::size_t>(p_u.rows()));
    for (Eigen::Index i = 0; i < p_u.rows(); ++i) {
        out.push_back(refine(p_u.row(i).transpose(), prior.row(i).transpose(), groups));
    }
    return out;
}

void apply_threshold(RefinementResult& result, double c_tau) {
    result.above_threshold = result.confidence >= c_tau;
}

void apply_threshold(std::vector<RefinementResult>& results, double c_tau) {
    for (auto& r : results) apply_threshold(r, c_tau);
}

double confidence_threshold(const Vector& labeled_max_probs, double tau) {
    if (tau <= 0.0 || tau > 1.0) throw ConfigError("tau must lie in (0, 1]");
    if (labeled_max_probs.size() == 0) {
        throw ConfigError("confidence_threshold requires a nonempty batch");
    }
    return tau * labeled_max_probs.mean();
}

ThresholdTracker::ThresholdTracker(double tau, Eigen::Index num_classes, double ema_decay)
    : tau_(tau), ema_decay_(ema_decay) {
    if (tau <= 0.0 || tau > 1.0) throw ConfigError("tau must lie in (0, 1]");
    if (num_classes <= 0) throw ConfigError("num_classes must be positive");
    if (ema_decay < 0.0 || ema_decay >= 1.0) throw ConfigError("ema_decay must lie in [0, 1)");
    c_tau_ = tau_ / static_cast<double>(num_classes);
}

double ThresholdTracker::update(const Vector& labeled_max_probs) {
    if (labeled_max_probs.size() == 0) return c_tau_;
    const double batch_mean = labeled_max_probs.mean();
    if (ema_decay_ > 0.0 && has_batch_) {
        running_mean_ = ema_decay_ * running_mean_ + (1.0 - ema_decay_) * batch_mean;
    } else {
        running_mean_ = batch_mean;
    }
    has_batch_ = true;
    c_tau_ = tau_ * running_mean_;
    return c_tau_;
}

void write_debug_record(std::ostream& out, long long iteration, long long sample_index,
                        const RefinementResult& result) {
    nlohmann::json record;
    record["iteration"] = iteration;
    record["sample_index"] = sample_index;
    record["reweighted"] = std::vector<double>(result.reweighted.data(),
                                               result.reweighted.data() + result.reweighted.size());
    record["refined"] =
        std::vector<double>(result.refined.data(), result.refined.data() + result.refined.size());
    record["pseudo_label"] = result.pseudo_label;
    record["confidence"] = result.confidence;
    record["above_threshold"] = result.above_threshold;
    record["zero_mass_group"] = result.zero_mass_group;
    out << record.dump() << '\n';
}

}  // namespace unissda::pgpr
