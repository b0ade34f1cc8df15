#pragma once

#include "unissda/datagen.hpp"
#include "unissda/metrics.hpp"
#include "unissda/train.hpp"
#include "unissda/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace unissda::experiment {

// One experiment grid: a synthetic benchmark, a label-space setting, and the
// methods x seeds to run. The per-run seed replaces both the generator seed
// and the training seed, so a (method, seed) pair fully determines a run.
struct ExperimentConfig {
    SyntheticConfig synthetic;
    Setting setting = Setting::open_partial;
    datagen::GroupCounts group_counts{6, 3, 3};
    int k_shot = 3;
    train::TrainConfig train;
    std::vector<train::Method> methods{train::Method::s_plus_t,
                                       train::Method::naive_pseudo_label, train::Method::pgpr};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::string output_dir = "out";
    bool debug_refinements = false;

    void validate() const;
};

ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config_file(const std::string& path);

struct PreparedData {
    train::TrainData data;
    ClassGroups groups;
    std::vector<int> classes;  // sorted label union
    model::LogitMask target_mask;
};

// Deterministic per-seed dataset pipeline: generate the domain pair, apply
// the label-space setting, split both domains, draw the k-shot labels.
PreparedData prepare_data(const ExperimentConfig& cfg, std::uint64_t seed);

struct RunOutcome {
    train::Method method = train::Method::pgpr;
    std::uint64_t seed = 0;
    bool aborted = false;
    std::string abort_message;
    metrics::MetricsReport inductive;
    metrics::MetricsReport transductive;
    train::TrainHistory history;
};

// Trains one (method, seed) cell and evaluates on the target test split
// (inductive) and the unlabeled training samples (transductive).
RunOutcome execute_run(const ExperimentConfig& cfg, train::Method method, std::uint64_t seed,
                       std::ostream* debug = nullptr);

// Rebuilds the aggregate CSV purely from the per-run report files under
// <run_root> (the per-setting runs directory). Byte-deterministic.
std::string build_aggregate_csv(const std::string& run_root);

// Subcommand bodies; return process exit codes.
int cmd_generate(const ExperimentConfig& cfg);
int cmd_run(const ExperimentConfig& cfg, bool dry_run);
int cmd_diagnose(const std::string& run_dir);

// Directory layout helpers shared by the CLI and the tests.
std::string runs_root(const ExperimentConfig& cfg);
std::string run_dir(const ExperimentConfig& cfg, train::Method method, std::uint64_t seed);

}  // namespace unissda::experiment
