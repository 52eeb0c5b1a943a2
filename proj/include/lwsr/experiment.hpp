#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "lwsr/corpus.hpp"
#include "lwsr/metrics.hpp"
#include "lwsr/trainer.hpp"

namespace lwsr {

struct ExperimentConfig {
    std::variant<std::filesystem::path, SyntheticSpec> stream;
    TrainerConfig trainer;
    MetricOptions metrics;
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> output_dir;

    /// Throws invalid_config naming the first bad field.
    void validate() const;
};

/// Parses the JSON config format documented in README.md. Unknown keys and
/// out-of-range values raise invalid_config naming the offending field.
/// A relative manifest path resolves against `base_dir`.
ExperimentConfig parse_experiment_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Fully explicit echo of a config; parse_experiment_config(to_json(c)) == c.
nlohmann::json to_json(const ExperimentConfig& config);

SyntheticSpec parse_synthetic_spec(const nlohmann::json& doc);
nlohmann::json to_json(const SyntheticSpec& spec);

nlohmann::json to_json(const StageReport& report, TrainMode mode);
nlohmann::json to_json(const ConsistencyTable& table);

struct ExperimentResult {
    TaskStream stream;
    HeldOutSplit split;
    RunResult run;
    std::vector<StageReport> reports;  // one per checkpoint; the last carries SRC/KRC
    std::optional<ConsistencyTable> consistency;
};

/// Loads or synthesizes the stream, trains, and evaluates every checkpoint.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Writes config.json, checkpoints/, reports/, consistency.json,
/// trajectory.csv, run_log.csv and final_report.json into `dir`, bracketed
/// by status.json ("incomplete" first, "complete" last).
void write_run_outputs(const ExperimentResult& result, const ExperimentConfig& config,
                       const std::filesystem::path& dir);

struct ComparisonRow {
    std::string run;
    std::string mode;
    std::vector<std::optional<double>> values;  // in comparison_columns() order
};

const std::vector<std::string>& comparison_columns();

/// Reads final_report.json from each directory. Throws invalid_state on a
/// missing, incomplete, or schema-incompatible run.
std::vector<ComparisonRow> compare_runs(const std::vector<std::filesystem::path>& run_dirs);
std::string comparison_text(const std::vector<ComparisonRow>& rows);
std::string comparison_csv(const std::vector<ComparisonRow>& rows);

struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> mode;
    std::optional<std::filesystem::path> out;
};

// CLI verbs. Each returns a process exit status and reports errors on `err`.
int cmd_gen(const std::filesystem::path& spec_path, const std::filesystem::path& manifest_path, std::ostream& out,
            std::ostream& err);
int cmd_run(const std::filesystem::path& config_path, const CliOverrides& overrides, std::ostream& out,
            std::ostream& err);
int cmd_compare(const std::vector<std::filesystem::path>& run_dirs, const std::optional<std::filesystem::path>& csv_out,
                std::ostream& out, std::ostream& err);

}  // namespace lwsr
