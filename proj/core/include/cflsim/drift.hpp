#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cflsim/state.hpp"

namespace cflsim {

enum class DriftMode { Hybrid, MoveIndividualsOnly, GlobalEveryEvent, RecusterSelectedOnly, Static };

DriftMode drift_mode_from_string(const std::string& s);
std::string to_string(DriftMode m);

struct DriftPolicy {
    DriftMode mode = DriftMode::Hybrid;
    double tau_fraction = 1.0 / 3.0;
    bool pairwise_variant = false;
    double pairwise_delta = 0.1;
    double pairwise_c = 0.1;
};

struct MovedClient {
    int client_id = -1;
    int from_cluster = -1;
    int to_cluster = -1;
};

struct DriftOutcome {
    std::vector<MovedClient> moved_clients;
    bool global_recluster_triggered = false;
    double max_center_shift = 0.0;
    double theta = 0.0;
    ClusterAssignment new_assignment;
    std::vector<ModelParams> new_models;
};

struct ReassignResult {
    ClusterAssignment assignment;
    std::vector<MovedClient> moved;
};

struct ShiftCheck {
    bool triggered = false;
    double theta = 0.0;
    double max_shift = 0.0;
};

bool detect_drift(const Representation& old_rep, const Representation& new_rep,
                  Metric metric, double epsilon = 1e-6);

// Moves each drifted client to its nearest pre-event center; ties go to the
// lowest cluster index. Centers are recomputed (as member-representation means
// over all_reps) once, after every move.
ReassignResult reassign_drifted(std::span<const Representation> drifted,
                                const ClusterState& state,
                                std::span<const Representation> all_reps,
                                Metric metric);

// theta is the mean pairwise distance between new centers. With K = 1 theta is
// undefined; the check reports theta 0 and always triggers.
ShiftCheck center_shift_check(const std::vector<std::vector<double>>& old_centers,
                              const std::vector<std::vector<double>>& new_centers,
                              Metric metric, double tau_fraction);

bool pairwise_trigger_check(const ClusterAssignment& assignment,
                            std::span<const Representation> reps, Metric metric,
                            double delta);

double update_adaptive_delta(double delta, double c, bool last_two_events_triggered);

// all_reps must hold the current representation of every registered client,
// already updated for the drifted ones. selected_last_round feeds the
// RecusterSelectedOnly policy; other modes ignore it.
DriftOutcome handle_drift_event(std::span<const Representation> drifted,
                                const ClusterState& state,
                                std::span<const Representation> all_reps,
                                const DriftPolicy& policy, Metric metric,
                                KRange krange,
                                std::span<const int> selected_last_round,
                                std::uint64_t seed);

}  // namespace cflsim
