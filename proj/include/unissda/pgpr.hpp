#pragma once

#include "unissda/types.hpp"

#include <iosfwd>
#include <vector>

namespace unissda::pgpr {

using unissda::ClassGroups;
using unissda::Matrix;
using unissda::Vector;

// Refinement outcome for one unlabeled sample. `reweighted` is the
// semi-supervised head's distribution after per-group mass alignment with the
// prior head; `refined` is the elementwise mean of `reweighted` and the prior.
struct RefinementResult {
    Vector reweighted;
    Vector refined;
    int pseudo_label = -1;
    double confidence = 0.0;
    bool above_threshold = false;
    // Set when some group had (near-)zero mass under p_u while the prior
    // assigned it positive mass; the prior mass was spread uniformly there.
    bool zero_mass_group = false;
};

// Remaps class-id groups into positions within `class_order` (the sorted
// class list that indexes probability vectors). Ids absent from class_order
// raise ConfigError.
ClassGroups to_index_space(const ClassGroups& groups, const std::vector<int>& class_order);

// Rescales p_u so that each group's total mass matches the prior's, keeping
// within-group ratios. A group covering every class is left untouched. Groups
// where p_u's mass falls below 1e-12 but the prior's is positive receive the
// prior mass uniformly (reported through zero_mass_group when non-null).
Vector group_reweight(const Vector& p_u, const Vector& prior, const ClassGroups& groups,
                      bool* zero_mass_group = nullptr);

// Elementwise mean of two distributions over the same classes.
Vector aggregate(const Vector& reweighted, const Vector& prior);

// group_reweight followed by aggregate; fills pseudo_label (argmax of the
// refined distribution, ties to the lowest index) and confidence (its max).
// above_threshold is left false; apply_threshold fills it in.
RefinementResult refine(const Vector& p_u, const Vector& prior, const ClassGroups& groups);

std::vector<RefinementResult> refine_rows(const Matrix& p_u, const Matrix& prior,
                                          const ClassGroups& groups);

void apply_threshold(RefinementResult& result, double c_tau);
void apply_threshold(std::vector<RefinementResult>& results, double c_tau);

// c_tau = tau * mean(labeled_max_probs).
double confidence_threshold(const Vector& labeled_max_probs, double tau);

// Stateful threshold: falls back to tau/C before any labeled batch has been
// seen and keeps the previous value across empty batches. With ema_decay in
// (0,1) the batch means are smoothed exponentially instead of used directly.
class ThresholdTracker {
   public:
    ThresholdTracker(double tau, Eigen::Index num_classes, double ema_decay = 0.0);

    double update(const Vector& labeled_max_probs);
    double value() const { return c_tau_; }

   private:
    double tau_;
    double ema_decay_;
    double running_mean_ = 0.0;
    bool has_batch_ = false;
    double c_tau_;
};

// One JSON line per sample for offline diagnostics.
void write_debug_record(std::ostream& out, long long iteration, long long sample_index,
                        const RefinementResult& result);

}  // namespace unissda::pgpr
