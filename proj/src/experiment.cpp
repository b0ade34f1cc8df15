#include "unissda/experiment.hpp"

#include "unissda/errors.hpp"
#include "unissda/rng.hpp"
#include "unissda/serialize.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace unissda::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* schedule_name(optimizer::LrSchedule s) {
    return s == optimizer::LrSchedule::constant ? "constant" : "cosine_with_warmup";
}

optimizer::LrSchedule schedule_from_string(const std::string& name) {
    if (name == "constant") return optimizer::LrSchedule::constant;
    if (name == "cosine_with_warmup") return optimizer::LrSchedule::cosine_with_warmup;
    throw ConfigError("unknown schedule: " + name);
}

json train_to_json(const train::TrainConfig& t) {
    json j;
    j["iterations"] = static_cast<long long>(t.iterations);
    j["batch_labeled"] = static_cast<long long>(t.batch_labeled);
    j["batch_unlabeled"] = static_cast<long long>(t.batch_unlabeled);
    j["tau"] = t.tau;
    j["warmup_T"] = static_cast<long long>(t.warmup_T);
    j["learning_rate"] = t.learning_rate;
    j["momentum"] = t.momentum;
    j["weight_decay"] = t.weight_decay;
    j["schedule"] = schedule_name(t.schedule);
    j["lr_warmup_steps"] = static_cast<long long>(t.lr_warmup_steps);
    j["augmentation"] = {{"weak_noise_sigma", t.augmentation.weak_noise_sigma},
                         {"strong_noise_sigma", t.augmentation.strong_noise_sigma},
                         {"strong_dropout_rate", t.augmentation.strong_dropout_rate}};
    j["logit_interpolation"] = t.logit_interpolation;
    j["source_fraction"] = t.source_fraction;
    j["naive_threshold"] = t.naive_threshold;
    j["threshold_ema_decay"] = t.threshold_ema_decay;
    j["hidden_width"] = static_cast<long long>(t.hidden_width);
    j["temperature"] = t.temperature;
    j["cosine_head"] = t.cosine_head;
    j["log_interval"] = static_cast<long long>(t.log_interval);
    j["ablation"] = {{"group_reweighting", t.ablation.group_reweighting},
                     {"classifier_aggregation", t.ablation.classifier_aggregation}};
    return j;
}

train::TrainConfig train_from_json(const json& j) {
    train::TrainConfig t;
    t.iterations = j.value("iterations", static_cast<long long>(t.iterations));
    t.batch_labeled = j.value("batch_labeled", static_cast<long long>(t.batch_labeled));
    t.batch_unlabeled = j.value("batch_unlabeled", static_cast<long long>(t.batch_unlabeled));
    t.tau = j.value("tau", t.tau);
    t.warmup_T = j.value("warmup_T", static_cast<long long>(t.warmup_T));
    t.learning_rate = j.value("learning_rate", t.learning_rate);
    t.momentum = j.value("momentum", t.momentum);
    t.weight_decay = j.value("weight_decay", t.weight_decay);
    t.schedule = schedule_from_string(j.value("schedule", std::string(schedule_name(t.schedule))));
    t.lr_warmup_steps = j.value("lr_warmup_steps", static_cast<long long>(t.lr_warmup_steps));
    if (j.contains("augmentation")) {
        const auto& a = j.at("augmentation");
        t.augmentation.weak_noise_sigma = a.value("weak_noise_sigma", t.augmentation.weak_noise_sigma);
        t.augmentation.strong_noise_sigma =
            a.value("strong_noise_sigma", t.augmentation.strong_noise_sigma);
        t.augmentation.strong_dropout_rate =
            a.value("strong_dropout_rate", t.augmentation.strong_dropout_rate);
    }
    t.logit_interpolation = j.value("logit_interpolation", t.logit_interpolation);
    t.source_fraction = j.value("source_fraction", t.source_fraction);
    t.naive_threshold = j.value("naive_threshold", t.naive_threshold);
    t.threshold_ema_decay = j.value("threshold_ema_decay", t.threshold_ema_decay);
    t.hidden_width = j.value("hidden_width", static_cast<long long>(t.hidden_width));
    t.temperature = j.value("temperature", t.temperature);
    t.cosine_head = j.value("cosine_head", t.cosine_head);
    t.log_interval = j.value("log_interval", static_cast<long long>(t.log_interval));
    if (j.contains("ablation")) {
        const auto& a = j.at("ablation");
        t.ablation.group_reweighting = a.value("group_reweighting", t.ablation.group_reweighting);
        t.ablation.classifier_aggregation =
            a.value("classifier_aggregation", t.ablation.classifier_aggregation);
    }
    return t;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open file for writing: " + path);
    out << text;
    if (!out) throw DataError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

constexpr const char* kAggregateHeader =
    "method,split_kind,n_runs,"
    "overall_accuracy_mean,overall_accuracy_std,"
    "common_accuracy_mean,common_accuracy_std,"
    "target_private_accuracy_mean,target_private_accuracy_std,"
    "private_as_common_rate_mean,private_as_common_rate_std,"
    "predicted_private_fraction_mean,predicted_private_fraction_std";

}  // namespace

void ExperimentConfig::validate() const {
    synthetic.validate();
    train.validate();
    if (seeds.empty()) throw ConfigError("seeds must be nonempty");
    if (methods.empty()) throw ConfigError("methods must be nonempty");
    if (k_shot < 0) throw ConfigError("k_shot must be nonnegative");
    if (output_dir.empty()) throw ConfigError("output_dir must be nonempty");
}

ExperimentConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    ExperimentConfig cfg;
    if (j.contains("synthetic")) {
        const auto& s = j.at("synthetic");
        cfg.synthetic.num_classes_total = s.value("num_classes_total", cfg.synthetic.num_classes_total);
        cfg.synthetic.feature_dim = s.value("feature_dim", cfg.synthetic.feature_dim);
        cfg.synthetic.samples_per_class_per_domain =
            s.value("samples_per_class_per_domain", cfg.synthetic.samples_per_class_per_domain);
        cfg.synthetic.cluster_spread = s.value("cluster_spread", cfg.synthetic.cluster_spread);
        cfg.synthetic.shift_magnitude = s.value("shift_magnitude", cfg.synthetic.shift_magnitude);
        cfg.synthetic.rotation_angle = s.value("rotation_angle", cfg.synthetic.rotation_angle);
        cfg.synthetic.seed = s.value("seed", cfg.synthetic.seed);
    }
    cfg.setting = setting_from_string(j.value("setting", std::string(to_string(cfg.setting))));
    if (j.contains("group_counts")) {
        const auto& g = j.at("group_counts");
        cfg.group_counts.common = g.value("common", cfg.group_counts.common);
        cfg.group_counts.source_private = g.value("source_private", cfg.group_counts.source_private);
        cfg.group_counts.target_private = g.value("target_private", cfg.group_counts.target_private);
    }
    cfg.k_shot = j.value("k_shot", cfg.k_shot);
    if (j.contains("train")) cfg.train = train_from_json(j.at("train"));
    if (j.contains("methods")) {
        cfg.methods.clear();
        for (const auto& m : j.at("methods")) {
            cfg.methods.push_back(train::method_from_string(m.get<std::string>()));
        }
    }
    if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.debug_refinements = j.value("debug_refinements", cfg.debug_refinements);
    return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["synthetic"] = {{"num_classes_total", cfg.synthetic.num_classes_total},
                      {"feature_dim", cfg.synthetic.feature_dim},
                      {"samples_per_class_per_domain", cfg.synthetic.samples_per_class_per_domain},
                      {"cluster_spread", cfg.synthetic.cluster_spread},
                      {"shift_magnitude", cfg.synthetic.shift_magnitude},
                      {"rotation_angle", cfg.synthetic.rotation_angle},
                      {"seed", cfg.synthetic.seed}};
    j["setting"] = to_string(cfg.setting);
    j["group_counts"] = {{"common", cfg.group_counts.common},
                         {"source_private", cfg.group_counts.source_private},
                         {"target_private", cfg.group_counts.target_private}};
    j["k_shot"] = cfg.k_shot;
    j["train"] = train_to_json(cfg.train);
    json methods = json::array();
    for (const auto m : cfg.methods) methods.push_back(train::to_string(m));
    j["methods"] = methods;
    j["seeds"] = cfg.seeds;
    j["output_dir"] = cfg.output_dir;
    j["debug_refinements"] = cfg.debug_refinements;
    return j.dump(2);
}

ExperimentConfig load_config_file(const std::string& path) {
    return config_from_json(read_text_file(path));
}

PreparedData prepare_data(const ExperimentConfig& cfg, std::uint64_t seed) {
    SyntheticConfig syn = cfg.synthetic;
    syn.seed = seed;
    auto [src_raw, trg_raw] = datagen::generate_domain_pair(syn);
    auto ls = datagen::apply_label_space_setting(src_raw, trg_raw, cfg.setting, cfg.group_counts);
    datagen::assign_splits(ls.source, derive_seed(seed, "source_split"));
    FeatureDataset target =
        datagen::split_and_label(ls.target, cfg.k_shot, derive_seed(seed, "target_split"));

    PreparedData p;
    p.groups = datagen::class_groups(ls.config);
    p.classes = label_union(ls.config);
    std::vector<int> target_idx;
    for (const int id : ls.config.target_classes) {
        const auto it = std::lower_bound(p.classes.begin(), p.classes.end(), id);
        target_idx.push_back(static_cast<int>(it - p.classes.begin()));
    }
    p.target_mask = model::LogitMask::from_indices(
        static_cast<Eigen::Index>(p.classes.size()), target_idx);
    p.data.source = std::move(ls.source);
    p.data.target = std::move(target);
    p.data.label_space = ls.config;
    return p;
}

RunOutcome execute_run(const ExperimentConfig& cfg, train::Method method, std::uint64_t seed,
                       std::ostream* debug) {
    PreparedData prep = prepare_data(cfg, seed);
    train::TrainConfig tc = cfg.train;
    tc.method = method;
    tc.seed = seed;

    RunOutcome out;
    out.method = method;
    out.seed = seed;
    try {
        const auto result = train::run(tc, prep.data, debug);
        out.history = result.history;

        const auto test_set = subset(prep.data.target, rows_with_split(prep.data.target, Split::test));
        out.inductive = metrics::evaluate(result.trained, test_set, prep.groups, prep.target_mask,
                                          metrics::SplitKind::inductive_test);

        std::vector<int> unlabeled_train_rows;
        for (const int row : rows_with_split(prep.data.target, Split::train)) {
            if (!prep.data.target.labeled[static_cast<std::size_t>(row)]) {
                unlabeled_train_rows.push_back(row);
            }
        }
        const auto transductive_set = subset(prep.data.target, unlabeled_train_rows);
        out.transductive =
            metrics::evaluate(result.trained, transductive_set, prep.groups, prep.target_mask,
                              metrics::SplitKind::transductive_unlabeled_train);
    } catch (const NumericalAbort& e) {
        out.aborted = true;
        std::ostringstream msg;
        msg << e.what() << " at iteration " << e.iteration << " (labeled_loss=" << e.labeled_loss
            << ", unlabeled_loss=" << e.unlabeled_loss << ")";
        out.abort_message = msg.str();
    }
    return out;
}

std::string runs_root(const ExperimentConfig& cfg) {
    return (fs::path(cfg.output_dir) / "runs" / to_string(cfg.setting)).string();
}

std::string run_dir(const ExperimentConfig& cfg, train::Method method, std::uint64_t seed) {
    return (fs::path(runs_root(cfg)) / train::to_string(method) / ("seed_" + std::to_string(seed)))
        .string();
}

int cmd_generate(const ExperimentConfig& cfg) {
    cfg.validate();
    const fs::path data_root = fs::path(cfg.output_dir) / "data";
    json manifest;
    manifest["synthetic"] = json::parse(config_to_json(cfg)).at("synthetic");
    manifest["setting"] = to_string(cfg.setting);
    manifest["k_shot"] = cfg.k_shot;
    manifest["metrics_csv_version"] = metrics::kMetricsCsvVersion;
    json per_seed = json::array();

    for (const std::uint64_t seed : cfg.seeds) {
        const PreparedData prep = prepare_data(cfg, seed);
        const fs::path dir = data_root / ("seed_" + std::to_string(seed));
        ensure_dir(dir);

        const std::string source_bin = (dir / "source.bin").string();
        const std::string target_bin = (dir / "target.bin").string();
        const std::string source_jsonl = (dir / "source.jsonl").string();
        const std::string target_jsonl = (dir / "target.jsonl").string();
        serialize::write_dataset_binary(prep.data.source, source_bin);
        serialize::write_dataset_binary(prep.data.target, target_bin);
        serialize::write_dataset_jsonl(prep.data.source, source_jsonl);
        serialize::write_dataset_jsonl(prep.data.target, target_jsonl);

        long long labeled_target = 0;
        for (const auto flag : prep.data.target.labeled) labeled_target += flag;

        json entry;
        entry["seed"] = seed;
        entry["label_space"] = {{"source_classes", prep.data.label_space.source_classes},
                                {"target_classes", prep.data.label_space.target_classes},
                                {"setting", to_string(prep.data.label_space.setting)}};
        entry["group_sizes"] = {{"common", prep.groups.common.size()},
                                {"source_private", prep.groups.source_private.size()},
                                {"target_private", prep.groups.target_private.size()}};
        entry["counts"] = {{"source", prep.data.source.size()},
                           {"target", prep.data.target.size()},
                           {"target_labeled", labeled_target}};
        entry["digests"] = {
            {"source.bin", serialize::digest_hex(serialize::fnv1a64_file(source_bin))},
            {"target.bin", serialize::digest_hex(serialize::fnv1a64_file(target_bin))},
            {"source.jsonl", serialize::digest_hex(serialize::fnv1a64_file(source_jsonl))},
            {"target.jsonl", serialize::digest_hex(serialize::fnv1a64_file(target_jsonl))}};
        per_seed.push_back(std::move(entry));
    }
    manifest["datasets"] = std::move(per_seed);
    ensure_dir(data_root);
    write_text_file((data_root / "manifest.json").string(), manifest.dump(2) + "\n");
    return 0;
}

std::string build_aggregate_csv(const std::string& run_root) {
    std::vector<std::string> method_dirs;
    if (fs::exists(run_root)) {
        for (const auto& entry : fs::directory_iterator(run_root)) {
            if (entry.is_directory()) method_dirs.push_back(entry.path().filename().string());
        }
    }
    std::sort(method_dirs.begin(), method_dirs.end());

    std::ostringstream out;
    out << kAggregateHeader << '\n';
    for (const auto& method : method_dirs) {
        std::vector<std::string> seed_dirs;
        for (const auto& entry : fs::directory_iterator(fs::path(run_root) / method)) {
            if (entry.is_directory()) seed_dirs.push_back(entry.path().string());
        }
        std::sort(seed_dirs.begin(), seed_dirs.end());

        std::vector<metrics::MetricsReport> inductive;
        for (const auto& dir : seed_dirs) {
            const fs::path reports = fs::path(dir) / "reports.jsonl";
            if (!fs::exists(reports)) continue;  // aborted run
            std::ifstream in(reports);
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                const json rec = json::parse(line);
                const auto report = metrics::report_from_json(rec.at("report").dump());
                if (report.split_kind == metrics::SplitKind::inductive_test) {
                    inductive.push_back(report);
                }
            }
        }
        if (inductive.empty()) continue;
        const auto agg = metrics::aggregate_runs(inductive);
        out << method << ",inductive_test," << agg.n_runs << ','
            << fmt17(agg.overall_accuracy.mean) << ',' << fmt17(agg.overall_accuracy.stddev) << ','
            << fmt17(agg.common_accuracy.mean) << ',' << fmt17(agg.common_accuracy.stddev) << ','
            << fmt17(agg.target_private_accuracy.mean) << ','
            << fmt17(agg.target_private_accuracy.stddev) << ','
            << fmt17(agg.private_as_common_rate.mean) << ','
            << fmt17(agg.private_as_common_rate.stddev) << ','
            << fmt17(agg.predicted_private_fraction.mean) << ','
            << fmt17(agg.predicted_private_fraction.stddev) << '\n';
    }
    return out.str();
}

int cmd_run(const ExperimentConfig& cfg, bool dry_run) {
    cfg.validate();
    if (dry_run) {
        std::cout << "resolved grid (" << cfg.methods.size() * cfg.seeds.size() << " runs):\n";
        for (const auto method : cfg.methods) {
            for (const auto seed : cfg.seeds) {
                std::cout << "  setting=" << to_string(cfg.setting)
                          << " method=" << train::to_string(method) << " seed=" << seed << '\n';
            }
        }
        return 0;
    }

    const std::string root = runs_root(cfg);
    json manifest;
    manifest["config"] = json::parse(config_to_json(cfg));
    manifest["metrics_csv_version"] = metrics::kMetricsCsvVersion;
    manifest["metrics_csv_columns"] = metrics::report_csv_header();
    manifest["aggregate_csv_columns"] = kAggregateHeader;
    json run_entries = json::array();
    json aborted_entries = json::array();
    long long succeeded = 0;

    for (const auto method : cfg.methods) {
        for (const auto seed : cfg.seeds) {
            const std::string dir = run_dir(cfg, method, seed);
            ensure_dir(dir);

            std::ofstream debug_stream;
            if (cfg.debug_refinements) {
                debug_stream.open(fs::path(dir) / "refinements.jsonl");
                if (!debug_stream) throw DataError("cannot open refinements.jsonl in " + dir);
            }
            const RunOutcome outcome = execute_run(cfg, method, seed,
                                                   cfg.debug_refinements ? &debug_stream : nullptr);
            if (outcome.aborted) {
                json abort;
                abort["method"] = train::to_string(method);
                abort["seed"] = seed;
                abort["message"] = outcome.abort_message;
                write_text_file((fs::path(dir) / "aborted.json").string(), abort.dump(2) + "\n");
                aborted_entries.push_back(std::move(abort));
                std::cerr << "warning: run method=" << train::to_string(method) << " seed=" << seed
                          << " aborted (" << outcome.abort_message
                          << "); excluded from aggregation\n";
                continue;
            }
            succeeded += 1;

            std::ostringstream reports;
            for (const auto* report : {&outcome.inductive, &outcome.transductive}) {
                json rec;
                rec["method"] = train::to_string(method);
                rec["seed"] = seed;
                rec["setting"] = to_string(cfg.setting);
                rec["report"] = json::parse(metrics::report_to_json(*report));
                reports << rec.dump() << '\n';
            }
            const std::string reports_path = (fs::path(dir) / "reports.jsonl").string();
            const std::string history_path = (fs::path(dir) / "history.jsonl").string();
            write_text_file(reports_path, reports.str());
            train::write_history_jsonl(outcome.history, history_path);

            json entry;
            entry["method"] = train::to_string(method);
            entry["seed"] = seed;
            entry["reports_digest"] = serialize::digest_hex(serialize::fnv1a64_file(reports_path));
            entry["history_digest"] = serialize::digest_hex(serialize::fnv1a64_file(history_path));
            run_entries.push_back(std::move(entry));
        }
    }

    manifest["runs"] = std::move(run_entries);
    manifest["aborted"] = std::move(aborted_entries);

    if (succeeded > 0) {
        const std::string aggregate = build_aggregate_csv(root);
        const std::string aggregate_path = (fs::path(root) / "aggregate.csv").string();
        write_text_file(aggregate_path, aggregate);
        manifest["aggregate_digest"] =
            serialize::digest_hex(serialize::fnv1a64_file(aggregate_path));
    }
    write_text_file((fs::path(root) / "manifest.json").string(), manifest.dump(2) + "\n");

    return succeeded > 0 ? 0 : 4;
}

int cmd_diagnose(const std::string& run_dir_arg) {
    std::vector<fs::path> history_files;
    const fs::path root(run_dir_arg);
    if (!fs::exists(root)) throw DataError("run directory does not exist: " + run_dir_arg);
    if (fs::exists(root / "history.jsonl")) {
        history_files.push_back(root / "history.jsonl");
    } else {
        for (const auto& entry : fs::recursive_directory_iterator(root)) {
            if (entry.is_regular_file() && entry.path().filename() == "history.jsonl") {
                history_files.push_back(entry.path());
            }
        }
        std::sort(history_files.begin(), history_files.end());
    }
    if (history_files.empty()) {
        throw DataError("no history.jsonl found under " + run_dir_arg);
    }

    for (const auto& path : history_files) {
        const auto history = train::read_history_jsonl(path.string());
        std::ostringstream csv;
        csv << "iteration,private_as_common_rate,target_private_accuracy,"
               "predicted_private_fraction\n";
        for (const auto& r : history.records) {
            csv << r.iteration << ',' << fmt17(r.private_as_common_rate) << ','
                << fmt17(r.target_private_accuracy) << ',' << fmt17(r.predicted_private_fraction)
                << '\n';
        }
        write_text_file((path.parent_path() / "diagnostics.csv").string(), csv.str());
    }
    return 0;
}

}  // namespace unissda::experiment
