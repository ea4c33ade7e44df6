#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cflsim/drift.hpp"
#include "cflsim/models.hpp"
#include "cflsim/representation.hpp"
#include "cflsim/selection.hpp"
#include "cflsim/simulation.hpp"
#include "cflsim/training.hpp"

namespace cflsim {

struct RunSection {
    std::string name = "run";
    std::vector<std::uint64_t> seeds = {1};
    std::string output_dir;  // under the output root; empty = "<name>-seed<seed>"
    long checkpoint_every = 0;
    std::vector<double> eval_targets = {0.5};
    int final_accuracy_window = 10;
};

struct TaskSection {
    int num_labels = 10;
    int input_dim = 32;
    int k_true = 4;
    double label_noise = 0.0;
    double blob_sigma = 0.35;
    double within_weight = 8.0;
    double outside_weight = 1.0;
    ModelKind model = ModelKind::Softmax;
    int hidden_dim = 32;
};

struct PopulationSection {
    int num_clients = 100;
    int samples_per_client = 300;
    double dirichlet_alpha = 0.5;
    SharedLevel shared_level = SharedLevel::None;
    std::string device_profile_file;
    int concept_rotation = 0;
};

struct TraceSection {
    std::string kind = "interval";  // interval | label_bucket | static
    int num_intervals = 10;
    long rounds_between = 30;
    long retention_rounds = 100;
    long warmup_rounds_of_data = 100;
    long shift_at_round = -1;
    double shift_fraction = 0.0;
    std::vector<long> shift_wave_rounds;
    double concept_drift_fraction = 0.0;
    std::vector<long> concept_drift_rounds;
    double malicious_fraction = 0.0;
};

struct PolicySection {
    DriftMode mode = DriftMode::Hybrid;
    double tau_fraction = 1.0 / 3.0;
    bool pairwise_variant = false;
    double pairwise_delta = 0.1;
    double pairwise_c = 0.1;
    int initial_clusters = 0;  // 0 = choose_k at registration
    double drift_eps = 1e-6;
};

struct RepresentationSection {
    std::string kind = "label_histogram";  // label_histogram | embedding | gradient_sketch
    Metric metric = Metric::L1;
    int embedding_dim = 16;
    int extractor_hidden = 32;
};

struct ClusteringSection {
    int k_min = 0;  // 0 = default_k_range
    int k_max = 0;
};

struct SelectionSection {
    SelectorKind kind = SelectorKind::Random;
    double explore_fraction = 0.1;
    double penalty_alpha = 2.0;
    double deadline_s = 0.0;
};

struct TimeSection {
    double model_bytes = 50000.0;
    double round_deadline_s = 30.0;
};

struct ExperimentConfig {
    RunSection run;
    TaskSection task;
    PopulationSection population;
    TraceSection trace;
    PolicySection policy;
    RepresentationSection representation;
    ClusteringSection clustering;
    TrainingConfig training;
    SelectionSection selection;
    TimeSection time;

    void validate() const;  // throws InputError listing every offending field
};

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);
ExperimentConfig parse_config_file(const std::string& path);

// Canonical serialization: fixed section/key order, %.17g floats. Stored in
// each run directory and hashed into every output file.
std::string canonical_toml(const ExperimentConfig& cfg);
std::uint64_t config_hash(const ExperimentConfig& cfg);

// Sets a single "section.key" field from a string value (ablation overrides).
void apply_override(ExperimentConfig& cfg, const std::string& dotted_key,
                    const std::string& value);

std::string format_double(double v);  // %.17g, shared by all writers

}  // namespace cflsim
