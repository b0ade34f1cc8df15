#include "unissda/errors.hpp"
#include "unissda/experiment.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

namespace {

using unissda::experiment::ExperimentConfig;

struct CommonFlags {
    std::string config_path;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> methods;
    std::string setting;
    std::string out;
    bool debug_refinements = false;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON experiment config file");
    cmd->add_option("--seeds", f.seeds, "seeds to run (overrides config)")->delimiter(',');
    cmd->add_option("--methods", f.methods,
                    "methods to run: s_plus_t, naive_pseudo_label, pgpr (overrides config)")
        ->delimiter(',');
    cmd->add_option("--setting", f.setting,
                    "label-space setting: closed, closed_label_shift, open, partial, open_partial");
    cmd->add_option("--out", f.out, "output directory (overrides config)");
}

ExperimentConfig resolve_config(const CLI::App* cmd, const CommonFlags& f) {
    ExperimentConfig cfg;
    if (!f.config_path.empty()) cfg = unissda::experiment::load_config_file(f.config_path);
    if (cmd->count("--seeds") > 0) cfg.seeds = f.seeds;
    if (cmd->count("--methods") > 0) {
        cfg.methods.clear();
        for (const auto& name : f.methods) {
            cfg.methods.push_back(unissda::train::method_from_string(name));
        }
    }
    if (cmd->count("--setting") > 0) cfg.setting = unissda::setting_from_string(f.setting);
    if (cmd->count("--out") > 0) cfg.output_dir = f.out;
    const auto* debug_opt = cmd->get_option_no_throw("--debug-refinements");
    if (debug_opt != nullptr && debug_opt->count() > 0) cfg.debug_refinements = f.debug_refinements;
    if (const char* env = std::getenv("UNISSDA_OUTPUT_DIR")) cfg.output_dir = env;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"universal semi-supervised domain adaptation benchmark"};
    app.require_subcommand(1);

    CommonFlags flags;
    bool dry_run = false;
    std::string diagnose_dir;

    CLI::App* gen = app.add_subcommand("generate", "write the benchmark datasets and a manifest");
    add_common_flags(gen, flags);

    CLI::App* run = app.add_subcommand("run", "execute the method x seed grid and aggregate");
    add_common_flags(run, flags);
    run->add_flag("--dry-run", dry_run, "print the resolved grid and write nothing");
    run->add_flag("--debug-refinements", flags.debug_refinements,
                  "stream per-sample refinement records to refinements.jsonl");

    CLI::App* diag =
        app.add_subcommand("diagnose", "write per-iteration diagnostic CSVs from run histories");
    diag->add_option("run_dir", diagnose_dir, "directory containing history.jsonl files")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return unissda::experiment::cmd_generate(resolve_config(gen, flags));
        if (run->parsed()) return unissda::experiment::cmd_run(resolve_config(run, flags), dry_run);
        if (diag->parsed()) return unissda::experiment::cmd_diagnose(diagnose_dir);
    } catch (const unissda::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const unissda::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const unissda::NumericalAbort& e) {
        std::cerr << "numerical abort: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
