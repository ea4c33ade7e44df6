#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cflsim/simulation.hpp"
#include "cflsim/state.hpp"

namespace cflsim {

enum class Aggregation { FedAvg, FedProx, FedYogi, QFedAvg };

Aggregation aggregation_from_string(const std::string& s);
std::string to_string(Aggregation a);

struct TrainingConfig {
    double eta = 0.05;
    int local_steps = 20;
    int participants_per_round = 20;
    int rounds_per_event = 10;
    long total_events = 10;
    int batch_size = 20;
    Aggregation aggregation = Aggregation::FedAvg;
    double mu_prox = 0.0;
    double yogi_beta1 = 0.9;
    double yogi_beta2 = 0.99;
    double yogi_eta_server = 0.1;
    double yogi_tau_adapt = 1e-3;
    double qfedavg_q = 1.0;
    bool sampling_with_replacement = false;
};

// Per-cluster server-optimizer state (FedYogi moments). Reset on re-clustering.
struct AggregatorState {
    std::vector<double> m;
    std::vector<double> v;
    bool initialized = false;
};

ModelParams local_update(const ModelParams& start, std::span<const Sample> data,
                         const TrainingConfig& cfg, const TaskModel& model,
                         rng::Stream& stream, int client_id, long round);

// client_losses holds each client's full-data training loss at the round-start
// model (q-FedAvg's F_k); FedAvg/FedProx/FedYogi ignore it.
ModelParams aggregate(const ModelParams& cluster_model,
                      std::span<const ModelParams> client_models,
                      std::span<const double> client_losses, const TrainingConfig& cfg,
                      AggregatorState& state);

struct ClientView {
    int client_id = -1;
    std::span<const Sample> train;
    const ClientProfile* profile = nullptr;
    const Representation* rep = nullptr;  // reported representation
};

struct RoundFragment {
    int cluster = -1;
    std::vector<int> selected;
    std::vector<int> dropped;
    std::vector<int> diverged;
    double round_time_s = 0.0;
    std::vector<std::pair<int, double>> client_losses;  // loss at round start
};

struct SelectorContext {
    SelectorSpec spec;
    Metric metric = Metric::L1;
};

RoundFragment run_cluster_round(int cluster_idx, ClusterState& state,
                                std::span<const ClientView> members, int budget,
                                const TrainingConfig& cfg, const TaskModel& model,
                                const SelectorContext& selector, const DeviceTimeModel& tm,
                                AggregatorState& agg_state, std::uint64_t root_seed,
                                long round);

using MembersFn = std::function<std::vector<ClientView>(int cluster)>;
using RoundHook = std::function<void(long round, std::span<const RoundFragment>)>;

// Per-cluster selection budgets for one round: each cluster gets
// max(1, floor(M/K)); the leftover goes one-per to the largest clusters.
std::vector<int> round_budgets(std::span<const long> cluster_sizes, int participants);

void run_event_block(ClusterState& state, const MembersFn& members_fn,
                     const TrainingConfig& cfg, const TaskModel& model,
                     const SelectorContext& selector, const DeviceTimeModel& tm,
                     std::vector<AggregatorState>& agg_states, std::uint64_t root_seed,
                     int rounds, const RoundHook& hook);

}  // namespace cflsim
