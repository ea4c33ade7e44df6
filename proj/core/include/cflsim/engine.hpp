#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cflsim/config.hpp"

namespace cflsim {

// $CFLSIM_OUTPUT_ROOT when set, otherwise "runs" under the working directory.
std::string output_root();

std::string run_dir_for(const ExperimentConfig& cfg, std::uint64_t seed);

struct RunResult {
    std::string run_dir;
    std::uint64_t seed = 0;
    long rounds = 0;
    int final_k = 0;
    double final_accuracy = 0.0;
    std::vector<std::pair<double, std::optional<double>>> tta_s;  // target -> seconds
    long recluster_events = 0;
    long moved_clients = 0;
    long dropped_stragglers = 0;
    long diverged_clients = 0;
};

// One seed: builds the world, runs every event block, writes config.toml,
// rounds.csv, events.jsonl, checkpoints/, summary.json, timings.json.
RunResult run_single(const ExperimentConfig& cfg, std::uint64_t seed);

// Every seed in cfg.run.seeds, one run directory each.
std::vector<RunResult> run_experiment(const ExperimentConfig& cfg);

// Continues a run from its latest checkpoint. Refuses when the stored config
// hash does not match the directory's config.toml.
RunResult resume_run(const std::string& run_dir);

struct AblationCell {
    std::string axis;
    std::string value;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    RunResult result;
};

// Axes: tau_grid, policy_modes, representation, metric, malicious_fraction,
// shared_level. One run per value and seed; failures are recorded and the
// remaining cells still run. Writes <name>-ablate-<axis>/ablation.csv.
std::vector<AblationCell> run_ablation(const ExperimentConfig& cfg, const std::string& axis);

// Accuracy and heterogeneity series of a finished run as CSV for plotting.
void write_report(const std::string& run_dir, std::ostream& out);

}  // namespace cflsim
