#include "unissda/train.hpp"

#include "unissda/datagen.hpp"
#include "unissda/errors.hpp"
#include "unissda/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <string>

namespace unissda::train {

namespace {

using model::ClassifierParams;
using model::LogitMask;
using nlohmann::json;

constexpr double kStdFloor = 1e-8;
constexpr double kProbFloor = 1e-300;

struct RowRef {
    bool from_source = true;
    int row = 0;
};

class BatchCycler {
   public:
    BatchCycler() = default;
    BatchCycler(std::size_t pool_size, Rng rng) : rng_(std::move(rng)) {
        order_.resize(pool_size);
        std::iota(order_.begin(), order_.end(), 0);
        if (!order_.empty()) rng_.shuffle(order_);
    }

    bool empty() const { return order_.empty(); }

    int next() {
        if (order_.empty()) throw DataError("batch drawn from an empty sample pool");
        if (pos_ == order_.size()) {
            rng_.shuffle(order_);
            pos_ = 0;
        }
        return order_[pos_++];
    }

   private:
    std::vector<int> order_;
    std::size_t pos_ = 0;
    Rng rng_{0};
};

Matrix gather_rows(const Matrix& features, const std::vector<int>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), features.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = features.row(rows[i]);
    }
    return out;
}

std::pair<Vector, Vector> column_stats(const Matrix& a) {
    Vector mean = a.colwise().mean().transpose();
    Vector stddev(a.cols());
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
        const double var =
            (a.col(c).array() - mean[c]).square().sum() / static_cast<double>(a.rows());
        stddev[c] = std::max(std::sqrt(var), kStdFloor);
    }
    return {std::move(mean), std::move(stddev)};
}

Matrix standardize(const Matrix& x, const Vector& mean, const Vector& stddev) {
    Matrix out = x;
    out.rowwise() -= mean.transpose();
    out.array().rowwise() /= stddev.transpose().array();
    return out;
}

json record_to_json(const HistoryRecord& r) {
    json j;
    j["iteration"] = static_cast<long long>(r.iteration);
    j["labeled_loss"] = r.labeled_loss;
    j["unlabeled_loss"] = r.unlabeled_loss;
    j["mu"] = r.mu;
    j["c_tau"] = r.c_tau;
    j["pseudo_label_accuracy"] = r.pseudo_label_accuracy;
    j["fraction_above_threshold"] = r.fraction_above_threshold;
    j["private_as_common_rate"] = r.private_as_common_rate;
    j["target_private_accuracy"] = r.target_private_accuracy;
    j["predicted_private_fraction"] = r.predicted_private_fraction;
    return j;
}

HistoryRecord record_from_json(const json& j) {
    HistoryRecord r;
    r.iteration = j.at("iteration").get<long long>();
    r.labeled_loss = j.at("labeled_loss").get<double>();
    r.unlabeled_loss = j.at("unlabeled_loss").get<double>();
    r.mu = j.at("mu").get<double>();
    r.c_tau = j.at("c_tau").get<double>();
    r.pseudo_label_accuracy = j.at("pseudo_label_accuracy").get<double>();
    r.fraction_above_threshold = j.at("fraction_above_threshold").get<double>();
    r.private_as_common_rate = j.at("private_as_common_rate").get<double>();
    r.target_private_accuracy = j.at("target_private_accuracy").get<double>();
    r.predicted_private_fraction = j.at("predicted_private_fraction").get<double>();
    return r;
}

}  // namespace

const char* to_string(Method m) {
    switch (m) {
        case Method::s_plus_t: return "s_plus_t";
        case Method::naive_pseudo_label: return "naive_pseudo_label";
        case Method::pgpr: return "pgpr";
    }
    return "?";
}

Method method_from_string(const std::string& name) {
    if (name == "s_plus_t") return Method::s_plus_t;
    if (name == "naive_pseudo_label") return Method::naive_pseudo_label;
    if (name == "pgpr") return Method::pgpr;
    throw ConfigError("unknown method: " + name);
}

void TrainConfig::validate() const {
    if (iterations < 0) throw ConfigError("iterations must be nonnegative");
    if (batch_labeled < 1 || batch_unlabeled < 1) throw ConfigError("batch sizes must be positive");
    if (tau <= 0.0 || tau > 1.0) throw ConfigError("tau must lie in (0, 1]");
    if (warmup_T < 1) throw ConfigError("warmup_T must be positive");
    if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("weight decay must be nonnegative");
    if (augmentation.weak_noise_sigma < 0.0 || augmentation.strong_noise_sigma < 0.0) {
        throw ConfigError("noise sigmas must be nonnegative");
    }
    if (augmentation.strong_noise_sigma < augmentation.weak_noise_sigma) {
        throw ConfigError("strong noise sigma must be >= weak noise sigma");
    }
    if (augmentation.strong_dropout_rate < 0.0 || augmentation.strong_dropout_rate >= 1.0) {
        throw ConfigError("dropout rate must lie in [0, 1)");
    }
    if (source_fraction > 1.0) throw ConfigError("source_fraction must be <= 1");
    if (naive_threshold < 0.0 || naive_threshold > 1.0) {
        throw ConfigError("naive_threshold must lie in [0, 1]");
    }
    if (threshold_ema_decay < 0.0 || threshold_ema_decay >= 1.0) {
        throw ConfigError("threshold_ema_decay must lie in [0, 1)");
    }
    if (hidden_width < 0) throw ConfigError("hidden_width must be nonnegative");
    if (temperature <= 0.0) throw ConfigError("temperature must be positive");
    if (log_interval < 1) throw ConfigError("log_interval must be positive");
    if (logit_interpolation && hidden_width > 0) {
        throw ConfigError("logit interpolation is only supported with the identity extractor");
    }
    if (interp_lambda_override > 1.0) throw ConfigError("lambda override must lie in [0, 1]");
    if (schedule == optimizer::LrSchedule::cosine_with_warmup &&
        (lr_warmup_steps < 0 || lr_warmup_steps > iterations)) {
        throw ConfigError("lr_warmup_steps must lie in [0, iterations]");
    }
}

double warmup_weight(Eigen::Index t, Eigen::Index T) {
    if (t < 0) throw ConfigError("iteration must be nonnegative");
    if (T < 1) throw ConfigError("warmup horizon must be positive");
    const double angle =
        std::min(std::numbers::pi, std::numbers::pi * static_cast<double>(t) / static_cast<double>(T));
    return 0.5 - 0.5 * std::cos(angle);
}

Matrix augment(const Matrix& features, AugmentKind kind, const AugmentConfig& cfg, Rng& rng) {
    const double sigma =
        kind == AugmentKind::weak ? cfg.weak_noise_sigma : cfg.strong_noise_sigma;
    Matrix out = features;
    if (sigma > 0.0) {
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
            for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) += sigma * rng.normal();
        }
    }
    if (kind == AugmentKind::strong && cfg.strong_dropout_rate > 0.0) {
        const double keep_scale = 1.0 / (1.0 - cfg.strong_dropout_rate);
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
            for (Eigen::Index j = 0; j < out.cols(); ++j) {
                out(i, j) = rng.uniform() < cfg.strong_dropout_rate ? 0.0 : out(i, j) * keep_scale;
            }
        }
    }
    return out;
}

std::pair<double, Vector> unlabeled_loss(const std::vector<pgpr::RefinementResult>& refined,
                                         const Matrix& strong_probs, double c_tau) {
    const auto n = static_cast<Eigen::Index>(refined.size());
    if (n != strong_probs.rows()) throw ShapeError("unlabeled_loss: batch size mismatch");
    if (n == 0) throw ShapeError("unlabeled_loss: empty batch");
    Vector weights(n);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = refined[static_cast<std::size_t>(i)];
        weights[i] = r.confidence >= c_tau ? 1.0 : 0.5;
        const double p = std::max(strong_probs(i, r.pseudo_label), kProbFloor);
        loss += weights[i] * -std::log(p);
    }
    return {loss / static_cast<double>(n), std::move(weights)};
}

void write_history_jsonl(const TrainHistory& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open history file for writing: " + path);
    for (const auto& r : history.records) out << record_to_json(r).dump() << '\n';
    if (!out) throw DataError("history write failed: " + path);
}

TrainHistory read_history_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open history file: " + path);
    TrainHistory history;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        history.records.push_back(record_from_json(json::parse(line)));
    }
    return history;
}

struct Trainer::Impl {
    TrainConfig cfg;
    FeatureDataset source;
    FeatureDataset target;
    LabelSpaceConfig label_space;

    std::vector<int> classes;  // sorted union; head index -> class id
    LogitMask mask_source{};
    LogitMask mask_target{};
    ClassGroups groups_raw;  // class-id space, for metrics
    ClassGroups groups_idx;  // head-index space, for refinement

    model::FeatureExtractor extractor;
    ClassifierParams head;
    ClassifierParams prior;
    optimizer::OptimizerState head_opt;
    optimizer::OptimizerState prior_opt;
    optimizer::OptimizerState ext_opt;

    std::vector<RowRef> labeled_pool;
    std::vector<int> labeled_source_rows;
    std::vector<int> labeled_target_rows;
    std::vector<int> unlabeled_rows;
    BatchCycler pooled_cycler;
    BatchCycler source_cycler;
    BatchCycler target_cycler;
    BatchCycler unlabeled_cycler;

    Rng aug_labeled{0};
    Rng aug_unlabeled_weak{0};
    Rng aug_unlabeled_strong{0};
    Rng interp_rng{0};

    pgpr::ThresholdTracker tracker{0.9, 1};
    double last_c_tau = 0.0;
    Eigen::Index t = 0;

    FeatureDataset unlabeled_train;  // cached full unlabeled training subset
    std::ostream* debug_stream = nullptr;

    Impl(const TrainConfig& config, const TrainData& data)
        : cfg(config),
          source(data.source),
          target(data.target),
          label_space(data.label_space),
          tracker(config.tau, 1, config.threshold_ema_decay) {
        cfg.validate();
        source.validate();
        target.validate();
        if (source.domain != Domain::source || target.domain != Domain::target) {
            throw DataError("train data domains are swapped");
        }
        if (source.dim() != target.dim()) throw DataError("feature dimensions differ across domains");

        classes = label_union(label_space);
        const auto num_classes = static_cast<Eigen::Index>(classes.size());
        mask_source = LogitMask::from_indices(num_classes, indices_of(label_space.source_classes));
        mask_target = LogitMask::from_indices(num_classes, indices_of(label_space.target_classes));
        groups_raw = datagen::class_groups(label_space);
        groups_idx = pgpr::to_index_space(groups_raw, classes);

        const Eigen::Index head_dim =
            cfg.hidden_width > 0 ? cfg.hidden_width : source.dim();
        const std::uint64_t init_root = derive_seed(cfg.seed, "init");
        head = model::init_classifier(num_classes, head_dim, derive_seed(init_root, "head"), 0.01,
                                      cfg.temperature, cfg.cosine_head);
        if (cfg.method == Method::pgpr) {
            prior = model::init_classifier(num_classes, head_dim, derive_seed(init_root, "prior"),
                                           0.01, cfg.temperature, cfg.cosine_head);
        }
        if (cfg.hidden_width > 0) {
            extractor =
                model::init_extractor(cfg.hidden_width, source.dim(), derive_seed(init_root, "extractor"));
        }

        head_opt = optimizer::make_optimizer(num_classes, head_dim, cfg.learning_rate, cfg.momentum,
                                             cfg.weight_decay, cfg.schedule, cfg.lr_warmup_steps,
                                             std::max<Eigen::Index>(cfg.iterations, 1));
        prior_opt = head_opt;
        if (cfg.hidden_width > 0) {
            ext_opt = optimizer::make_optimizer(cfg.hidden_width, source.dim(), cfg.learning_rate,
                                                cfg.momentum, cfg.weight_decay, cfg.schedule,
                                                cfg.lr_warmup_steps,
                                                std::max<Eigen::Index>(cfg.iterations, 1));
        }

        for (const int row : rows_with_split(source, Split::train)) {
            labeled_source_rows.push_back(row);
            labeled_pool.push_back({true, row});
        }
        for (const int row : rows_with_split(target, Split::train)) {
            if (target.labeled[static_cast<std::size_t>(row)]) {
                labeled_target_rows.push_back(row);
                labeled_pool.push_back({false, row});
            } else {
                unlabeled_rows.push_back(row);
            }
        }
        if (labeled_pool.empty()) throw DataError("no labeled training samples");
        if (cfg.method != Method::s_plus_t && unlabeled_rows.empty()) {
            throw DataError("no unlabeled target training samples");
        }

        const std::uint64_t batch_root = derive_seed(cfg.seed, "batch");
        pooled_cycler = BatchCycler(labeled_pool.size(), Rng(derive_seed(batch_root, "labeled")));
        source_cycler =
            BatchCycler(labeled_source_rows.size(), Rng(derive_seed(batch_root, "labeled_source")));
        target_cycler =
            BatchCycler(labeled_target_rows.size(), Rng(derive_seed(batch_root, "labeled_target")));
        unlabeled_cycler =
            BatchCycler(unlabeled_rows.size(), Rng(derive_seed(batch_root, "unlabeled")));

        const std::uint64_t aug_root = derive_seed(cfg.seed, "augment");
        aug_labeled = Rng(derive_seed(aug_root, "labeled"));
        aug_unlabeled_weak = Rng(derive_seed(aug_root, "unlabeled_weak"));
        aug_unlabeled_strong = Rng(derive_seed(aug_root, "unlabeled_strong"));
        interp_rng = stream(cfg.seed, "interp");

        tracker = pgpr::ThresholdTracker(cfg.tau, num_classes, cfg.threshold_ema_decay);
        last_c_tau = tracker.value();

        unlabeled_train = subset(target, unlabeled_rows);
    }

    std::vector<int> indices_of(const std::vector<int>& ids) const {
        std::vector<int> out;
        out.reserve(ids.size());
        for (const int id : ids) {
            const auto it = std::lower_bound(classes.begin(), classes.end(), id);
            if (it == classes.end() || *it != id) {
                throw DataError("class id " + std::to_string(id) + " missing from the label union");
            }
            out.push_back(static_cast<int>(it - classes.begin()));
        }
        return out;
    }

    int class_index(int id) const {
        const auto it = std::lower_bound(classes.begin(), classes.end(), id);
        if (it == classes.end() || *it != id) {
            throw DataError("class id " + std::to_string(id) + " missing from the label union");
        }
        return static_cast<int>(it - classes.begin());
    }

    struct LabeledBatch {
        Matrix features;               // raw rows before augmentation
        std::vector<int> label_idx;    // head-index labels
        std::vector<std::uint8_t> is_source;
        std::vector<int> truths;       // raw class ids
    };

    LabeledBatch draw_labeled_batch() {
        LabeledBatch b;
        std::vector<RowRef> refs;
        refs.reserve(static_cast<std::size_t>(cfg.batch_labeled));
        if (cfg.source_fraction < 0.0 || labeled_target_rows.empty()) {
            for (Eigen::Index i = 0; i < cfg.batch_labeled; ++i) {
                refs.push_back(labeled_pool[static_cast<std::size_t>(pooled_cycler.next())]);
            }
        } else {
            const auto n_src = std::min<Eigen::Index>(
                cfg.batch_labeled,
                static_cast<Eigen::Index>(
                    std::llround(cfg.source_fraction * static_cast<double>(cfg.batch_labeled))));
            for (Eigen::Index i = 0; i < n_src; ++i) {
                refs.push_back({true, labeled_source_rows[static_cast<std::size_t>(source_cycler.next())]});
            }
            for (Eigen::Index i = n_src; i < cfg.batch_labeled; ++i) {
                refs.push_back(
                    {false, labeled_target_rows[static_cast<std::size_t>(target_cycler.next())]});
            }
        }

        b.features.resize(static_cast<Eigen::Index>(refs.size()), source.dim());
        for (std::size_t i = 0; i < refs.size(); ++i) {
            const auto& ds = refs[i].from_source ? source : target;
            b.features.row(static_cast<Eigen::Index>(i)) = ds.features.row(refs[i].row);
            const int id = ds.class_ids[static_cast<std::size_t>(refs[i].row)];
            b.truths.push_back(id);
            b.label_idx.push_back(class_index(id));
            b.is_source.push_back(refs[i].from_source ? 1 : 0);
        }
        return b;
    }

    struct CeTotals {
        double loss = 0.0;
        Matrix grad_weights;
        Vector grad_bias;
        Matrix grad_features;  // aligned with the input rows
    };

    // Mean CE over a mixed-domain batch, applying each sample's domain mask.
    CeTotals masked_ce(const ClassifierParams& params, const Matrix& z,
                       const std::vector<int>& label_idx,
                       const std::vector<std::uint8_t>& is_source, bool want_fgrad) const {
        const Eigen::Index n = z.rows();
        CeTotals total;
        total.grad_weights = Matrix::Zero(params.weights.rows(), params.weights.cols());
        total.grad_bias = Vector::Zero(params.bias.size());
        if (want_fgrad) total.grad_features = Matrix::Zero(n, z.cols());

        for (const bool source_part : {true, false}) {
            std::vector<int> rows;
            for (Eigen::Index i = 0; i < n; ++i) {
                if ((is_source[static_cast<std::size_t>(i)] != 0) == source_part) {
                    rows.push_back(static_cast<int>(i));
                }
            }
            if (rows.empty()) continue;
            Matrix zp(static_cast<Eigen::Index>(rows.size()), z.cols());
            std::vector<int> labels;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                zp.row(static_cast<Eigen::Index>(i)) = z.row(rows[i]);
                labels.push_back(label_idx[static_cast<std::size_t>(rows[i])]);
            }
            const auto& mask = source_part ? mask_source : mask_target;
            const auto part =
                model::ce_loss_and_grad(params, zp, labels, mask, Vector(), 0.0, want_fgrad);
            const double share = static_cast<double>(rows.size()) / static_cast<double>(n);
            total.loss += share * part.loss;
            total.grad_weights += share * part.grad_weights;
            total.grad_bias += share * part.grad_bias;
            if (want_fgrad) {
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    total.grad_features.row(rows[i]) =
                        share * part.grad_features.row(static_cast<Eigen::Index>(i));
                }
            }
        }
        return total;
    }

    Vector labeled_max_probs(const Matrix& z, const std::vector<std::uint8_t>& is_source) const {
        Vector out(z.rows());
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
            const auto& mask = is_source[static_cast<std::size_t>(i)] ? mask_source : mask_target;
            const Matrix logits = model::forward(head, z.row(i), mask);
            out[i] = model::softmax(logits.row(0).transpose()).maxCoeff();
        }
        return out;
    }

    std::vector<pgpr::RefinementResult> refine_with_ablation(const Matrix& p_u,
                                                             const Matrix& prior_p) const {
        std::vector<pgpr::RefinementResult> out;
        out.reserve(static_cast<std::size_t>(p_u.rows()));
        for (Eigen::Index i = 0; i < p_u.rows(); ++i) {
            const Vector p = p_u.row(i).transpose();
            const Vector q = prior_p.row(i).transpose();
            pgpr::RefinementResult r;
            r.reweighted = cfg.ablation.group_reweighting
                               ? pgpr::group_reweight(p, q, groups_idx, &r.zero_mass_group)
                               : p;
            r.refined = cfg.ablation.classifier_aggregation ? pgpr::aggregate(r.reweighted, q)
                                                            : r.reweighted;
            int best = 0;
            for (Eigen::Index c = 1; c < r.refined.size(); ++c) {
                if (r.refined[c] > r.refined[best]) best = static_cast<int>(c);
            }
            r.pseudo_label = best;
            r.confidence = r.refined[best];
            out.push_back(std::move(r));
        }
        return out;
    }

    StepStats step() {
        StepStats stats;
        stats.iteration = t;
        const double mu =
            cfg.mu_override >= 0.0 ? cfg.mu_override : warmup_weight(t, cfg.warmup_T);
        stats.mu = mu;

        // Labeled batch, weak view.
        LabeledBatch lb = draw_labeled_batch();
        const Matrix xl = augment(lb.features, AugmentKind::weak, cfg.augmentation, aug_labeled);
        const Matrix zl = extractor.forward(xl);

        // Unlabeled batch, weak and strong views.
        Matrix xu_raw, xu_weak, xu_strong, zu_weak, zu_strong;
        std::vector<int> unlabeled_truths;
        if (cfg.method != Method::s_plus_t) {
            std::vector<int> rows;
            for (Eigen::Index i = 0; i < cfg.batch_unlabeled; ++i) {
                rows.push_back(unlabeled_rows[static_cast<std::size_t>(unlabeled_cycler.next())]);
            }
            xu_raw = gather_rows(target.features, rows);
            for (const int row : rows) {
                unlabeled_truths.push_back(target.class_ids[static_cast<std::size_t>(row)]);
            }
            xu_weak = augment(xu_raw, AugmentKind::weak, cfg.augmentation, aug_unlabeled_weak);
            xu_strong = augment(xu_raw, AugmentKind::strong, cfg.augmentation, aug_unlabeled_strong);
            zu_weak = extractor.forward(xu_weak);
            zu_strong = extractor.forward(xu_strong);
        }

        // Labeled loss for the semi-supervised head, optionally on
        // interpolated features. The frozen extractor has no normalization
        // layer, so the default forward pass already reflects the combined
        // batch; the alternate view re-standardizes the labeled features by
        // labeled-only statistics. With a linear head, mixing inputs equals
        // mixing logits, which keeps ce_loss_and_grad exact for the
        // interpolated objective, and lambda = 1 falls back to the plain
        // labeled loss.
        const bool want_fgrad = cfg.hidden_width > 0;
        Matrix z_for_loss = zl;
        if (cfg.logit_interpolation) {
            const auto [mean_lab, std_lab] = column_stats(zl);
            const Matrix z_lab = standardize(zl, mean_lab, std_lab);
            const double lambda = cfg.interp_lambda_override >= 0.0 ? cfg.interp_lambda_override
                                                                    : interp_rng.uniform();
            if (lambda == 0.0) {
                z_for_loss = z_lab;
            } else if (lambda < 1.0) {
                z_for_loss = lambda * zl + (1.0 - lambda) * z_lab;
            }
        }
        const CeTotals labeled = masked_ce(head, z_for_loss, lb.label_idx, lb.is_source, want_fgrad);
        stats.labeled_loss = labeled.loss;

        // Prior head: labeled samples only, features treated as constants.
        CeTotals prior_grads;
        if (cfg.method == Method::pgpr) {
            prior_grads = masked_ce(prior, zl, lb.label_idx, lb.is_source, false);
        }

        // Confidence threshold from the labeled batch.
        if (cfg.method == Method::pgpr) {
            last_c_tau = tracker.update(labeled_max_probs(zl, lb.is_source));
            stats.c_tau = last_c_tau;
        } else if (cfg.method == Method::naive_pseudo_label) {
            last_c_tau = cfg.naive_threshold;
            stats.c_tau = last_c_tau;
        }

        // Unlabeled loss on the strong view against weak-view pseudo-labels.
        CeTotals unlabeled;
        bool have_unlabeled = false;
        if (cfg.method != Method::s_plus_t) {
            std::vector<int> pseudo_idx;
            Vector weights(zu_weak.rows());
            const Matrix p_u = model::softmax_rows(model::forward(head, zu_weak, mask_target));
            long long correct = 0, above = 0;
            if (cfg.method == Method::pgpr) {
                const Matrix prior_p =
                    model::softmax_rows(model::forward(prior, zu_weak, mask_target));
                auto results = refine_with_ablation(p_u, prior_p);
                pgpr::apply_threshold(results, last_c_tau);
                for (std::size_t i = 0; i < results.size(); ++i) {
                    pseudo_idx.push_back(results[i].pseudo_label);
                    weights[static_cast<Eigen::Index>(i)] = results[i].above_threshold ? 1.0 : 0.5;
                    above += results[i].above_threshold;
                    correct += classes[static_cast<std::size_t>(results[i].pseudo_label)] ==
                               unlabeled_truths[i];
                }
            } else {
                const auto argmax = model::argmax_rows(p_u);
                for (std::size_t i = 0; i < argmax.size(); ++i) {
                    const double conf = p_u(static_cast<Eigen::Index>(i), argmax[i]);
                    pseudo_idx.push_back(argmax[i]);
                    const bool keep = conf >= last_c_tau;
                    weights[static_cast<Eigen::Index>(i)] = keep ? 1.0 : 0.0;
                    above += keep;
                    correct += classes[static_cast<std::size_t>(argmax[i])] == unlabeled_truths[i];
                }
            }
            const auto ce = model::ce_loss_and_grad(head, zu_strong, pseudo_idx, mask_target,
                                                    weights, 0.0, want_fgrad);
            unlabeled.loss = ce.loss;
            unlabeled.grad_weights = ce.grad_weights;
            unlabeled.grad_bias = ce.grad_bias;
            if (want_fgrad) unlabeled.grad_features = ce.grad_features;
            have_unlabeled = true;
            stats.unlabeled_loss = ce.loss;
            stats.pseudo_label_accuracy =
                static_cast<double>(correct) / static_cast<double>(pseudo_idx.size());
            stats.fraction_above_threshold =
                static_cast<double>(above) / static_cast<double>(pseudo_idx.size());
        }

        if (!std::isfinite(stats.labeled_loss) || !std::isfinite(stats.unlabeled_loss)) {
            throw NumericalAbort("non-finite loss", static_cast<int>(t), stats.labeled_loss,
                                 stats.unlabeled_loss);
        }

        // Composite gradient for h: dL_l + mu * dL_u, weight decay added once.
        Matrix gw = labeled.grad_weights;
        Vector gb = labeled.grad_bias;
        if (have_unlabeled && mu > 0.0) {
            gw += mu * unlabeled.grad_weights;
            gb += mu * unlabeled.grad_bias;
        }
        if (cfg.weight_decay != 0.0) {
            gw += cfg.weight_decay * head.weights;
            gb += cfg.weight_decay * head.bias;
        }
        optimizer::sgd_step(head.weights, head.bias, head_opt, gw, gb, t);

        if (cfg.method == Method::pgpr) {
            Matrix pgw = prior_grads.grad_weights;
            Vector pgb = prior_grads.grad_bias;
            if (cfg.weight_decay != 0.0) {
                pgw += cfg.weight_decay * prior.weights;
                pgb += cfg.weight_decay * prior.bias;
            }
            optimizer::sgd_step(prior.weights, prior.bias, prior_opt, pgw, pgb, t);
        }

        if (cfg.hidden_width > 0) {
            // Backprop through the extractor: labeled path plus the
            // strong-view unlabeled path (pseudo-labels are treated as
            // constants, and the prior head is blocked by construction).
            auto ext_grads = model::extractor_backward(extractor, xl, zl, labeled.grad_features);
            if (have_unlabeled && mu > 0.0) {
                const auto u =
                    model::extractor_backward(extractor, xu_strong, zu_strong,
                                              (mu * unlabeled.grad_features).eval());
                ext_grads.grad_weights += u.grad_weights;
                ext_grads.grad_bias += u.grad_bias;
            }
            if (cfg.weight_decay != 0.0) {
                ext_grads.grad_weights += cfg.weight_decay * extractor.weights;
                ext_grads.grad_bias += cfg.weight_decay * extractor.bias;
            }
            optimizer::sgd_step(extractor.weights, extractor.bias, ext_opt, ext_grads.grad_weights,
                                ext_grads.grad_bias, t);
        }

        // Diverged parameters would poison the next forward pass with
        // overflowing logits, so stop here while the losses are still
        // reportable.
        bool params_finite = head.weights.allFinite() && head.bias.allFinite();
        if (cfg.method == Method::pgpr) {
            params_finite = params_finite && prior.weights.allFinite() && prior.bias.allFinite();
        }
        if (cfg.hidden_width > 0) {
            params_finite =
                params_finite && extractor.weights.allFinite() && extractor.bias.allFinite();
        }
        if (!params_finite) {
            throw NumericalAbort("non-finite parameters", static_cast<int>(t), stats.labeled_loss,
                                 stats.unlabeled_loss);
        }

        t += 1;
        return stats;
    }

    HistoryRecord log_record(const StepStats& stats) {
        HistoryRecord rec;
        rec.iteration = stats.iteration;
        rec.labeled_loss = stats.labeled_loss;
        rec.unlabeled_loss = stats.unlabeled_loss;
        rec.mu = stats.mu;
        rec.c_tau = stats.c_tau;
        rec.pseudo_label_accuracy = stats.pseudo_label_accuracy;
        rec.fraction_above_threshold = stats.fraction_above_threshold;

        const model::Model m{extractor, head, classes};
        const auto report =
            metrics::evaluate(m, unlabeled_train, groups_raw, mask_target,
                              metrics::SplitKind::transductive_unlabeled_train);
        rec.private_as_common_rate = report.private_as_common_rate;
        rec.target_private_accuracy = report.target_private_accuracy;
        rec.predicted_private_fraction = report.predicted_private_fraction;

        // Full-set pseudo-label diagnostics on raw (unaugmented) features,
        // shared with the debug stream so the two always agree.
        if (cfg.method != Method::s_plus_t) {
            const Matrix zu = extractor.forward(unlabeled_train.features);
            const Matrix p_u = model::softmax_rows(model::forward(head, zu, mask_target));
            std::vector<pgpr::RefinementResult> results;
            if (cfg.method == Method::pgpr) {
                const Matrix prior_p = model::softmax_rows(model::forward(prior, zu, mask_target));
                results = refine_with_ablation(p_u, prior_p);
            } else {
                results.reserve(static_cast<std::size_t>(p_u.rows()));
                for (Eigen::Index i = 0; i < p_u.rows(); ++i) {
                    pgpr::RefinementResult r;
                    r.reweighted = p_u.row(i).transpose();
                    r.refined = r.reweighted;
                    int best = 0;
                    for (Eigen::Index c = 1; c < r.refined.size(); ++c) {
                        if (r.refined[c] > r.refined[best]) best = static_cast<int>(c);
                    }
                    r.pseudo_label = best;
                    r.confidence = r.refined[best];
                    results.push_back(std::move(r));
                }
            }
            pgpr::apply_threshold(results, last_c_tau);
            long long correct = 0, above = 0;
            for (std::size_t i = 0; i < results.size(); ++i) {
                correct += classes[static_cast<std::size_t>(results[i].pseudo_label)] ==
                           unlabeled_train.class_ids[i];
                above += results[i].above_threshold;
                if (debug_stream != nullptr) {
                    pgpr::write_debug_record(*debug_stream, stats.iteration,
                                             static_cast<long long>(i), results[i]);
                }
            }
            const auto n = static_cast<double>(results.size());
            rec.pseudo_label_accuracy = static_cast<double>(correct) / n;
            rec.fraction_above_threshold = static_cast<double>(above) / n;
        }
        return rec;
    }
};

Trainer::Trainer(const TrainConfig& cfg, const TrainData& data)
    : impl_(std::make_unique<Impl>(cfg, data)) {}
Trainer::~Trainer() = default;
Trainer::Trainer(Trainer&&) noexcept = default;
Trainer& Trainer::operator=(Trainer&&) noexcept = default;

StepStats Trainer::step() { return impl_->step(); }
Eigen::Index Trainer::iteration() const { return impl_->t; }

model::Model Trainer::current_model() const {
    return model::Model{impl_->extractor, impl_->head, impl_->classes};
}

const model::ClassifierParams& Trainer::prior_head() const { return impl_->prior; }
const model::LogitMask& Trainer::target_mask() const { return impl_->mask_target; }
const model::LogitMask& Trainer::source_mask() const { return impl_->mask_source; }

HistoryRecord Trainer::log_record(const StepStats& stats) { return impl_->log_record(stats); }
void Trainer::attach_debug_stream(std::ostream* out) { impl_->debug_stream = out; }

TrainResult run(const TrainConfig& cfg, const TrainData& data, std::ostream* debug) {
    Trainer trainer(cfg, data);
    trainer.attach_debug_stream(debug);
    TrainResult result;
    for (Eigen::Index t = 0; t < cfg.iterations; ++t) {
        const StepStats stats = trainer.step();
        if (t % cfg.log_interval == 0 || t == cfg.iterations - 1) {
            result.history.records.push_back(trainer.log_record(stats));
        }
    }
    result.trained = trainer.current_model();
    result.prior_head = trainer.prior_head();
    return result;
}

}  // namespace unissda::train
