// Command-line front end: gen, run, compare.

#include <iostream>

#include "CLI11.hpp"
#include "lwsr/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Continual whole-slide retrieval with distance-consistency rehearsal"};
    app.require_subcommand(1);

    std::string gen_config, gen_out;
    auto* gen = app.add_subcommand("gen", "Materialize a synthetic task stream as a manifest plus feature binaries");
    gen->add_option("--config", gen_config, "Synthetic stream spec (JSON)")->required()->check(CLI::ExistingFile);
    gen->add_option("--out", gen_out, "Manifest path to write")->required();

    std::string run_config, run_out, run_mode;
    std::uint64_t run_seed = 0;
    auto* run = app.add_subcommand("run", "Train over a stream, evaluate every stage, write reports");
    run->add_option("--config", run_config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    auto* out_opt = run->add_option("--out", run_out, "Output directory (overrides output_dir)");
    auto* seed_opt = run->add_option("--seed", run_seed, "Override the config seed");
    auto* mode_opt = run->add_option("--mode", run_mode, "Override the mode")
                         ->check(CLI::IsMember({"finetune", "joint", "lwsr", "lwsr_no_dcr"}));

    std::vector<std::string> compare_dirs;
    std::string compare_csv;
    auto* compare = app.add_subcommand("compare", "Side-by-side final-stage metrics of completed runs");
    compare->add_option("runs", compare_dirs, "Run directories")->required()->expected(2, -1);
    auto* csv_opt = compare->add_option("--out", compare_csv, "Also write the table as CSV");

    CLI11_PARSE(app, argc, argv);

    if (*gen) return lwsr::cmd_gen(gen_config, gen_out, std::cout, std::cerr);
    if (*run) {
        lwsr::CliOverrides overrides;
        if (*seed_opt) overrides.seed = run_seed;
        if (*mode_opt) overrides.mode = run_mode;
        if (*out_opt) overrides.out = run_out;
        return lwsr::cmd_run(run_config, overrides, std::cout, std::cerr);
    }
    std::vector<std::filesystem::path> dirs(compare_dirs.begin(), compare_dirs.end());
    std::optional<std::filesystem::path> csv;
    if (*csv_opt) csv = compare_csv;
    return lwsr::cmd_compare(dirs, csv, std::cout, std::cerr);
}
