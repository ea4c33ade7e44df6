#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cflsim/selection.hpp"

namespace cflsim {

// One generating distribution: a label prior plus a label-to-blob permutation.
// Different concepts route the same blob to different labels, so P(y|x)
// genuinely differs across concepts and a global model cannot fit them all.
struct Concept {
    std::vector<double> label_prior;
    std::vector<int> blob_of_label;
};

struct SyntheticTask {
    int num_labels = 10;
    int input_dim = 32;
    int k_true = 4;
    double label_noise = 0.0;
    double blob_sigma = 0.35;
    double within_weight = 8.0;
    double outside_weight = 1.0;
    std::vector<Concept> concepts;
    std::vector<Concept> shifted_concepts;
    std::vector<std::vector<double>> blob_means;
};

SyntheticTask make_synthetic_task(int num_labels, int input_dim, int k_true,
                                  double within_weight, double outside_weight,
                                  double blob_sigma, double label_noise,
                                  std::uint64_t seed);

struct SimClient {
    int client_id = -1;
    int concept0 = 0;
    int concept1 = 0;
    std::vector<double> prior0;
    std::vector<double> prior1;
    std::vector<Sample> pool;
    std::vector<int> shared_ids;  // pinned shared-dataset samples, never retired
    ClientProfile profile;
};

struct Population {
    SyntheticTask task;
    std::vector<SimClient> clients;

    std::vector<int> ground_truth() const;
};

Population generate_population(const SyntheticTask& task, int num_clients,
                               int samples_per_client, double dirichlet_alpha,
                               std::uint64_t seed, int concept_rotation = 0);

enum class TraceEventKind { ArriveBucket, Retire, SwapLabels, PermuteReportedHistogram };

std::string to_string(TraceEventKind k);

struct TraceEvent {
    long round = 0;
    int client_id = -1;
    TraceEventKind kind = TraceEventKind::ArriveBucket;
    std::vector<int> sample_ids;
    int label_a = -1;
    int label_b = -1;
    std::vector<int> permutation;
};

struct DriftTrace {
    std::vector<TraceEvent> events;
    long retention_rounds = 100;
    long warmup_rounds_of_data = 100;
    long horizon_rounds = 0;
};

// Per-client round at which remaining buckets switch to the shifted concept.
// Empty map = no shift anywhere.
struct ShiftPlan {
    std::vector<long> switch_round;  // indexed by client id; <0 = never
};

ShiftPlan make_shift_plan(int num_clients, long at_round, double fraction,
                          std::span<const long> wave_rounds, std::uint64_t seed);

DriftTrace build_interval_trace(Population& pop, int num_intervals, long rounds_between,
                                long retention_rounds, long warmup_rounds_of_data,
                                const ShiftPlan& shift, std::uint64_t seed);

DriftTrace build_label_bucket_trace(Population& pop, int num_buckets, long rounds_between,
                                    long retention_rounds, long warmup_rounds_of_data,
                                    std::uint64_t seed);

// Static data: everything arrives at round 0 and never retires.
DriftTrace build_static_trace(const Population& pop, long horizon_rounds);

void build_concept_drift_events(DriftTrace& trace, const Population& pop, double fraction,
                                std::span<const long> at_rounds, std::uint64_t seed);

void apply_malicious(DriftTrace& trace, const Population& pop, double fraction,
                     std::uint64_t seed);

enum class SharedLevel { None, Half, One, Two };

SharedLevel shared_level_from_string(const std::string& s);
std::string to_string(SharedLevel l);

void inject_shared_dataset(Population& pop, SharedLevel level, std::uint64_t seed);

struct DeviceTimeModel {
    double model_bytes = 0.0;
    double round_deadline_s = 30.0;
};

double expected_client_time(const ClientProfile& p, const DeviceTimeModel& tm,
                            int local_steps, int batch_size);

struct RoundTime {
    double round_time_s = 0.0;
    std::vector<int> dropped;  // stragglers past the deadline
};

RoundTime simulate_round_time(std::span<const ClientProfile* const> selected,
                              const DeviceTimeModel& tm, int local_steps, int batch_size);

struct AccuracyPoint {
    double sim_time_s = 0.0;
    double accuracy = 0.0;
};

// Simulated time after which accuracy never drops below target again.
std::optional<double> time_to_accuracy(std::span<const AccuracyPoint> records,
                                       double target_accuracy);

// Gamma/Dirichlet sampling used for client priors (Marsaglia-Tsang).
double sample_gamma(rng::Stream& stream, double shape);
std::vector<double> sample_dirichlet(rng::Stream& stream, std::span<const double> alpha);

// Loads "client_id,speed,bw_up,bw_down" rows; header line optional.
std::vector<ClientProfile> load_device_profiles(const std::string& path);

}  // namespace cflsim
