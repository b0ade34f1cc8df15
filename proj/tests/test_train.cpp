#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "unissda/datagen.hpp"
#include "unissda/errors.hpp"
#include "unissda/metrics.hpp"
#include "unissda/train.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

using namespace unissda;
using namespace unissda::train;

namespace {

bool same_matrix(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

bool same_vector(const Vector& a, const Vector& b) {
    return a.size() == b.size() && (a.array() == b.array()).all();
}

struct Bench {
    TrainData data;
    LabelSpaceConfig label_space;
    ClassGroups groups;
    std::vector<int> classes;
};

// Small source/target pair with train/val/test splits and k-shot target
// labels, sized so a full run stays in the millisecond range.
Bench make_bench(Setting setting, std::uint64_t seed, double rotation = 0.6,
                 double shift = 2.0, int k = 3) {
    SyntheticConfig syn;
    syn.num_classes_total = 6;
    syn.feature_dim = 3;
    syn.samples_per_class_per_domain = 30;
    syn.cluster_spread = 1.0;
    syn.shift_magnitude = shift;
    syn.rotation_angle = rotation;
    syn.seed = seed;
    auto [src, trg] = datagen::generate_domain_pair(syn);
    auto ls = datagen::apply_label_space_setting(src, trg, setting, {2, 2, 2});
    datagen::assign_splits(ls.source, derive_seed(seed, "source_split"));
    FeatureDataset target = datagen::split_and_label(ls.target, k, derive_seed(seed, "target_split"));

    Bench b;
    b.data = TrainData{ls.source, std::move(target), ls.config};
    b.label_space = ls.config;
    b.groups = datagen::class_groups(ls.config);
    b.classes = label_union(ls.config);
    return b;
}

TrainConfig fast_config(Method method, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.method = method;
    cfg.iterations = 40;
    cfg.batch_labeled = 16;
    cfg.batch_unlabeled = 16;
    cfg.warmup_T = 20;
    cfg.learning_rate = 0.02;
    cfg.log_interval = 10;
    cfg.seed = seed;
    return cfg;
}

// The order the trainer uses for the unlabeled target pool: training rows
// without a label, in row order.
std::vector<int> unlabeled_train_rows(const FeatureDataset& target) {
    std::vector<int> rows;
    for (const int row : rows_with_split(target, Split::train)) {
        if (!target.labeled[static_cast<std::size_t>(row)]) rows.push_back(row);
    }
    return rows;
}

struct TempFile {
    std::filesystem::path path;
    explicit TempFile(const std::string& name)
        : path(std::filesystem::temp_directory_path() /
               (name + "_" + std::to_string(::getpid()) + ".jsonl")) {}
    ~TempFile() {
        std::error_code ec;
        std::filesystem::remove(path, ec);
    }
};

}  // namespace

TEST_CASE("warmup weight hits the cosine anchor points") {
    for (const Eigen::Index T : {2, 10, 500, 1234}) {
        CHECK(warmup_weight(0, T) == 0.0);
        CHECK(std::abs(warmup_weight(T / 2, T) - 0.5) <= 1e-15);
        CHECK(std::abs(warmup_weight(T, T) - 1.0) <= 1e-15);
        CHECK(std::abs(warmup_weight(2 * T, T) - 1.0) <= 1e-15);
        CHECK(std::abs(warmup_weight(13 * T, T) - 1.0) <= 1e-15);
    }
}

TEST_CASE("warmup weight is nondecreasing and clamps at one") {
    const Eigen::Index T = 400;
    double prev = -1.0;
    for (Eigen::Index t = 0; t < 1000; ++t) {
        const double mu = warmup_weight(t, T);
        CHECK(mu >= prev);
        CHECK(mu >= 0.0);
        CHECK(mu <= 1.0);
        if (t >= T) CHECK(mu == warmup_weight(T, T));
        prev = mu;
    }
}

TEST_CASE("warmup weight rejects bad arguments") {
    CHECK_THROWS_AS(warmup_weight(-1, 10), ConfigError);
    CHECK_THROWS_AS(warmup_weight(0, 0), ConfigError);
}

TEST_CASE("augmentation with zero noise is the identity and draws nothing") {
    Rng rng(99);
    Matrix x(3, 4);
    x << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12;
    AugmentConfig cfg;
    cfg.weak_noise_sigma = 0.0;
    cfg.strong_noise_sigma = 0.0;
    cfg.strong_dropout_rate = 0.0;
    CHECK(same_matrix(augment(x, AugmentKind::weak, cfg, rng), x));
    CHECK(same_matrix(augment(x, AugmentKind::strong, cfg, rng), x));
    Rng fresh(99);
    CHECK(rng.uniform() == fresh.uniform());
}

TEST_CASE("strong view equals weak view when sigmas match and dropout is off") {
    Rng a(7), b(7);
    Matrix x = Matrix::Random(5, 3);
    AugmentConfig cfg;
    cfg.weak_noise_sigma = 0.3;
    cfg.strong_noise_sigma = 0.3;
    cfg.strong_dropout_rate = 0.0;
    const Matrix weak = augment(x, AugmentKind::weak, cfg, a);
    const Matrix strong = augment(x, AugmentKind::strong, cfg, b);
    CHECK(same_matrix(weak, strong));
    CHECK(a.uniform() == b.uniform());

    Rng c(7);
    CHECK(same_matrix(augment(x, AugmentKind::weak, cfg, c), weak));
}

TEST_CASE("weak view never applies dropout and strong dropout rescales survivors") {
    Matrix x = Matrix::Constant(40, 5, 2.0);
    AugmentConfig cfg;
    cfg.weak_noise_sigma = 0.0;
    cfg.strong_noise_sigma = 0.0;
    cfg.strong_dropout_rate = 0.5;

    Rng a(11);
    CHECK(same_matrix(augment(x, AugmentKind::weak, cfg, a), x));

    Rng b(11);
    const Matrix strong = augment(x, AugmentKind::strong, cfg, b);
    int zeros = 0;
    for (Eigen::Index i = 0; i < strong.rows(); ++i) {
        for (Eigen::Index j = 0; j < strong.cols(); ++j) {
            if (strong(i, j) == 0.0) {
                ++zeros;
            } else {
                CHECK(strong(i, j) == 4.0);  // 2.0 / (1 - 0.5)
            }
        }
    }
    CHECK(zeros > 40);
    CHECK(zeros < 160);
}

TEST_CASE("unlabeled loss halves the weight below the confidence cutoff") {
    Matrix probs(2, 3);
    probs << 0.8, 0.1, 0.1, 0.6, 0.3, 0.1;
    std::vector<pgpr::RefinementResult> refined(2);
    refined[0].pseudo_label = 0;
    refined[0].confidence = 0.95;
    refined[1].pseudo_label = 0;
    refined[1].confidence = 0.50;

    const auto [loss, weights] = unlabeled_loss(refined, probs, 0.9);
    CHECK(weights[0] == 1.0);
    CHECK(weights[1] == 0.5);
    const double expected = (-std::log(0.8) + 0.5 * -std::log(0.6)) / 2.0;
    CHECK(std::abs(loss - expected) <= 1e-15);

    refined[1].confidence = 0.9;  // boundary counts as confident
    const auto [loss2, weights2] = unlabeled_loss(refined, probs, 0.9);
    CHECK(weights2[1] == 1.0);
    CHECK(loss2 > loss);
}

TEST_CASE("unlabeled loss rejects mismatched and empty batches") {
    Matrix probs(2, 3);
    probs << 0.8, 0.1, 0.1, 0.6, 0.3, 0.1;
    std::vector<pgpr::RefinementResult> one(1);
    one[0].pseudo_label = 0;
    CHECK_THROWS_AS(unlabeled_loss(one, probs, 0.9), ShapeError);
    std::vector<pgpr::RefinementResult> none;
    CHECK_THROWS_AS(unlabeled_loss(none, Matrix(0, 3), 0.9), ShapeError);
}

TEST_CASE("training twice from the same seed is bit-identical") {
    const Bench bench = make_bench(Setting::open_partial, 31);
    const TrainConfig cfg = fast_config(Method::pgpr, 5);
    const TrainResult a = run(cfg, bench.data);
    const TrainResult b = run(cfg, bench.data);

    CHECK(same_matrix(a.trained.head.weights, b.trained.head.weights));
    CHECK(same_vector(a.trained.head.bias, b.trained.head.bias));
    CHECK(same_matrix(a.prior_head.weights, b.prior_head.weights));
    REQUIRE(a.history.records.size() == b.history.records.size());
    for (std::size_t i = 0; i < a.history.records.size(); ++i) {
        const auto& ra = a.history.records[i];
        const auto& rb = b.history.records[i];
        CHECK(ra.iteration == rb.iteration);
        CHECK(ra.labeled_loss == rb.labeled_loss);
        CHECK(ra.unlabeled_loss == rb.unlabeled_loss);
        CHECK(ra.mu == rb.mu);
        CHECK(ra.c_tau == rb.c_tau);
        CHECK(ra.pseudo_label_accuracy == rb.pseudo_label_accuracy);
        CHECK(ra.private_as_common_rate == rb.private_as_common_rate);
    }
}

TEST_CASE("zero iterations returns the untouched initialization") {
    const Bench bench = make_bench(Setting::open_partial, 8);
    TrainConfig cfg = fast_config(Method::pgpr, 77);
    cfg.iterations = 0;
    const TrainResult result = run(cfg, bench.data);
    CHECK(result.history.records.empty());

    const auto num_classes = static_cast<Eigen::Index>(bench.classes.size());
    const std::uint64_t init_root = derive_seed(cfg.seed, "init");
    const auto head0 = model::init_classifier(num_classes, bench.data.source.dim(),
                                              derive_seed(init_root, "head"), 0.01,
                                              cfg.temperature, cfg.cosine_head);
    const auto prior0 = model::init_classifier(num_classes, bench.data.source.dim(),
                                               derive_seed(init_root, "prior"), 0.01,
                                               cfg.temperature, cfg.cosine_head);
    CHECK(same_matrix(result.trained.head.weights, head0.weights));
    CHECK(same_vector(result.trained.head.bias, head0.bias));
    CHECK(same_matrix(result.prior_head.weights, prior0.weights));
    CHECK(result.trained.classes == bench.classes);
}

TEST_CASE("one composite step is affine in the unlabeled weight") {
    const Bench bench = make_bench(Setting::open_partial, 13);
    auto step_with_mu = [&](double mu) {
        TrainConfig cfg = fast_config(Method::pgpr, 21);
        cfg.mu_override = mu;
        Trainer trainer(cfg, bench.data);
        trainer.step();
        return trainer.current_model().head;
    };
    const auto h0 = step_with_mu(0.0);
    const auto h1 = step_with_mu(1.0);
    const auto hm = step_with_mu(0.5);

    const Matrix blend_w = 0.5 * (h0.weights + h1.weights);
    const Vector blend_b = 0.5 * (h0.bias + h1.bias);
    CHECK((hm.weights - blend_w).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((hm.bias - blend_b).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((h1.weights - h0.weights).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("muting the unlabeled term reproduces the labeled-only baseline") {
    const Bench bench = make_bench(Setting::open_partial, 4);
    TrainConfig muted = fast_config(Method::pgpr, 9);
    muted.mu_override = 0.0;
    const TrainResult pg = run(muted, bench.data);
    const TrainResult st = run(fast_config(Method::s_plus_t, 9), bench.data);

    CHECK(same_matrix(pg.trained.head.weights, st.trained.head.weights));
    CHECK(same_vector(pg.trained.head.bias, st.trained.head.bias));
    REQUIRE(pg.history.records.size() == st.history.records.size());
    for (std::size_t i = 0; i < pg.history.records.size(); ++i) {
        CHECK(pg.history.records[i].labeled_loss == st.history.records[i].labeled_loss);
        CHECK(st.history.records[i].c_tau == 0.0);
        CHECK(pg.history.records[i].c_tau > 0.0);
    }

    // The prior keeps training even while the unlabeled term is muted.
    const auto num_classes = static_cast<Eigen::Index>(bench.classes.size());
    const auto prior0 = model::init_classifier(num_classes, bench.data.source.dim(),
                                               derive_seed(derive_seed(muted.seed, "init"), "prior"),
                                               0.01, muted.temperature, muted.cosine_head);
    CHECK_FALSE(same_matrix(pg.prior_head.weights, prior0.weights));
    CHECK_FALSE(same_matrix(pg.prior_head.weights, pg.trained.head.weights));
}

TEST_CASE("an unreachable naive threshold degenerates to the labeled-only baseline") {
    const Bench bench = make_bench(Setting::open_partial, 15);
    TrainConfig naive = fast_config(Method::naive_pseudo_label, 33);
    naive.iterations = 30;
    naive.naive_threshold = 1.0;
    TrainConfig labeled_only = fast_config(Method::s_plus_t, 33);
    labeled_only.iterations = 30;

    const TrainResult nv = run(naive, bench.data);
    const TrainResult st = run(labeled_only, bench.data);
    CHECK(same_matrix(nv.trained.head.weights, st.trained.head.weights));
    CHECK(same_vector(nv.trained.head.bias, st.trained.head.bias));
    for (const auto& rec : nv.history.records) {
        CHECK(rec.c_tau == 1.0);
        CHECK(rec.fraction_above_threshold == 0.0);
    }
}

TEST_CASE("forcing full interpolation weight reproduces the plain labeled loss") {
    const Bench bench = make_bench(Setting::open_partial, 19);
    const TrainConfig plain = fast_config(Method::pgpr, 3);
    TrainConfig pinned = plain;
    pinned.logit_interpolation = true;
    pinned.interp_lambda_override = 1.0;

    const TrainResult a = run(plain, bench.data);
    const TrainResult b = run(pinned, bench.data);
    CHECK(same_matrix(a.trained.head.weights, b.trained.head.weights));
    CHECK(same_vector(a.trained.head.bias, b.trained.head.bias));
    REQUIRE(a.history.records.size() == b.history.records.size());
    for (std::size_t i = 0; i < a.history.records.size(); ++i) {
        CHECK(a.history.records[i].labeled_loss == b.history.records[i].labeled_loss);
        CHECK(a.history.records[i].unlabeled_loss == b.history.records[i].unlabeled_loss);
    }

    // The opposite endpoint standardizes the labeled batch, so it must move
    // the loss on generic data.
    TrainConfig zeroed = pinned;
    zeroed.interp_lambda_override = 0.0;
    const TrainResult c = run(zeroed, bench.data);
    CHECK(c.history.records.front().labeled_loss != a.history.records.front().labeled_loss);
}

TEST_CASE("random interpolation weights stay deterministic per seed") {
    const Bench bench = make_bench(Setting::open_partial, 23);
    TrainConfig cfg = fast_config(Method::pgpr, 41);
    cfg.logit_interpolation = true;
    cfg.iterations = 20;
    const TrainResult a = run(cfg, bench.data);
    const TrainResult b = run(cfg, bench.data);
    CHECK(same_matrix(a.trained.head.weights, b.trained.head.weights));
    for (std::size_t i = 0; i < a.history.records.size(); ++i) {
        CHECK(a.history.records[i].labeled_loss == b.history.records[i].labeled_loss);
    }
}

TEST_CASE("history records land on the logging grid with matching warmup weights") {
    const Bench bench = make_bench(Setting::open_partial, 2);
    TrainConfig cfg = fast_config(Method::pgpr, 12);
    cfg.iterations = 120;
    cfg.log_interval = 50;
    cfg.warmup_T = 80;
    const TrainResult result = run(cfg, bench.data);

    std::vector<Eigen::Index> logged;
    for (const auto& rec : result.history.records) logged.push_back(rec.iteration);
    CHECK(logged == std::vector<Eigen::Index>{0, 50, 100, 119});
    for (const auto& rec : result.history.records) {
        CHECK(rec.mu == warmup_weight(rec.iteration, cfg.warmup_T));
        CHECK(rec.c_tau > 0.0);
        CHECK(rec.c_tau <= cfg.tau);
    }

    TrainConfig single = cfg;
    single.iterations = 1;
    CHECK(run(single, bench.data).history.records.size() == 1);
}

TEST_CASE("streamed refinement records agree with the logged diagnostics") {
    const Bench bench = make_bench(Setting::open_partial, 6);
    TrainConfig cfg = fast_config(Method::pgpr, 27);
    std::ostringstream debug;
    const TrainResult result = run(cfg, bench.data, &debug);
    REQUIRE_FALSE(result.history.records.empty());
    const auto& last = result.history.records.back();

    const std::vector<int> pool = unlabeled_train_rows(bench.data.target);
    REQUIRE_FALSE(pool.empty());

    std::istringstream lines(debug.str());
    std::string line;
    long long correct = 0, above = 0, seen = 0;
    while (std::getline(lines, line)) {
        const auto j = nlohmann::json::parse(line);
        if (j.at("iteration").get<long long>() != last.iteration) continue;
        const auto sample = j.at("sample_index").get<long long>();
        const int truth =
            bench.data.target.class_ids[static_cast<std::size_t>(pool[static_cast<std::size_t>(sample)])];
        const int predicted = bench.classes[static_cast<std::size_t>(j.at("pseudo_label").get<int>())];
        correct += predicted == truth;
        above += j.at("above_threshold").get<bool>();
        seen += 1;

        const auto refined = j.at("refined").get<std::vector<double>>();
        REQUIRE(refined.size() == bench.classes.size());
        const double mass = std::accumulate(refined.begin(), refined.end(), 0.0);
        CHECK(std::abs(mass - 1.0) <= 1e-9);
    }
    REQUIRE(seen == static_cast<long long>(pool.size()));
    const auto n = static_cast<double>(seen);
    CHECK(last.pseudo_label_accuracy == static_cast<double>(correct) / n);
    CHECK(last.fraction_above_threshold == static_cast<double>(above) / n);
}

TEST_CASE("labeled-only training separates a mildly shifted closed benchmark") {
    const Bench bench = make_bench(Setting::closed, 1, 0.3, 1.5);
    TrainConfig cfg = fast_config(Method::s_plus_t, 14);
    cfg.iterations = 300;
    cfg.learning_rate = 0.05;
    const TrainResult result = run(cfg, bench.data);

    const auto test_rows = rows_with_split(bench.data.target, Split::test);
    const auto test_set = subset(bench.data.target, test_rows);
    std::vector<int> all_indices(bench.classes.size());
    std::iota(all_indices.begin(), all_indices.end(), 0);
    const auto mask = model::LogitMask::from_indices(
        static_cast<Eigen::Index>(bench.classes.size()), all_indices);
    const auto report = metrics::evaluate(result.trained, test_set, bench.groups, mask,
                                          metrics::SplitKind::inductive_test);
    CHECK(report.overall_accuracy > 0.95);
}

TEST_CASE("method names round-trip") {
    for (const Method m : {Method::s_plus_t, Method::naive_pseudo_label, Method::pgpr}) {
        CHECK(method_from_string(to_string(m)) == m);
    }
    CHECK_THROWS_AS(method_from_string("fixmatch"), ConfigError);
}

TEST_CASE("train config validation rejects out-of-range values") {
    const TrainConfig base;
    auto broken = [&](auto mutate) {
        TrainConfig cfg = base;
        mutate(cfg);
        return cfg;
    };
    CHECK_NOTHROW(base.validate());
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.iterations = -1; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.batch_labeled = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.batch_unlabeled = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.tau = 0.0; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.tau = 1.1; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.warmup_T = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.learning_rate = 0.0; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.momentum = 1.0; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.weight_decay = -0.1; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.augmentation.weak_noise_sigma = -0.1; }).validate(),
                    ConfigError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) {
                        c.augmentation.weak_noise_sigma = 0.5;
                        c.augmentation.strong_noise_sigma = 0.1;
                    }).validate(),
                    ConfigError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.augmentation.strong_dropout_rate = 1.0; }).validate(),
                    ConfigError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.source_fraction = 1.5; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.naive_threshold = 1.5; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.threshold_ema_decay = 1.0; }).validate(),
                    ConfigError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.hidden_width = -1; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.temperature = 0.0; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.log_interval = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) {
                        c.logit_interpolation = true;
                        c.hidden_width = 8;
                    }).validate(),
                    ConfigError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.interp_lambda_override = 1.5; }).validate(),
                    ConfigError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) {
                        c.schedule = optimizer::LrSchedule::cosine_with_warmup;
                        c.lr_warmup_steps = c.iterations + 1;
                    }).validate(),
                    ConfigError);
}

TEST_CASE("trainer rejects inconsistent data") {
    const Bench bench = make_bench(Setting::open_partial, 10);
    const TrainConfig cfg = fast_config(Method::pgpr, 1);

    TrainData swapped = bench.data;
    std::swap(swapped.source, swapped.target);
    CHECK_THROWS_AS(Trainer(cfg, swapped), DataError);

    TrainData widened = bench.data;
    widened.source.features.conservativeResize(Eigen::NoChange,
                                               widened.source.features.cols() + 1);
    widened.source.features.rightCols(1).setZero();
    CHECK_THROWS_AS(Trainer(cfg, widened), DataError);

    TrainData all_labeled = bench.data;
    for (auto& flag : all_labeled.target.labeled) flag = 1;
    CHECK_THROWS_AS(Trainer(cfg, all_labeled), DataError);
    CHECK_NOTHROW(Trainer(fast_config(Method::s_plus_t, 1), all_labeled));
}

TEST_CASE("history jsonl round-trips exactly") {
    TrainHistory history;
    HistoryRecord a;
    a.iteration = 0;
    a.labeled_loss = 0.1 + 0.2;
    a.unlabeled_loss = 1e-300;
    a.mu = 0.49999999999999994;
    a.c_tau = 0.9;
    a.pseudo_label_accuracy = 2.0 / 3.0;
    a.fraction_above_threshold = 1.0;
    a.private_as_common_rate = 5e-324;
    a.target_private_accuracy = 0.0;
    a.predicted_private_fraction = 0.125;
    HistoryRecord b = a;
    b.iteration = 50;
    b.mu = 1.0;
    history.records = {a, b};

    const TempFile file("unissda_history");
    write_history_jsonl(history, file.path.string());
    const TrainHistory loaded = read_history_jsonl(file.path.string());
    REQUIRE(loaded.records.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        const auto& in = history.records[i];
        const auto& out = loaded.records[i];
        CHECK(out.iteration == in.iteration);
        CHECK(out.labeled_loss == in.labeled_loss);
        CHECK(out.unlabeled_loss == in.unlabeled_loss);
        CHECK(out.mu == in.mu);
        CHECK(out.c_tau == in.c_tau);
        CHECK(out.pseudo_label_accuracy == in.pseudo_label_accuracy);
        CHECK(out.fraction_above_threshold == in.fraction_above_threshold);
        CHECK(out.private_as_common_rate == in.private_as_common_rate);
        CHECK(out.target_private_accuracy == in.target_private_accuracy);
        CHECK(out.predicted_private_fraction == in.predicted_private_fraction);
    }
    CHECK_THROWS_AS(read_history_jsonl("/nonexistent/unissda/history.jsonl"), DataError);
}
