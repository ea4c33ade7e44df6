#include "cflsim/drift.hpp"

#include <algorithm>
#include <map>

namespace cflsim {

DriftMode drift_mode_from_string(const std::string& s) {
    if (s == "hybrid") return DriftMode::Hybrid;
    if (s == "move_individuals_only") return DriftMode::MoveIndividualsOnly;
    if (s == "global_every_event") return DriftMode::GlobalEveryEvent;
    if (s == "recluster_selected_only") return DriftMode::RecusterSelectedOnly;
    if (s == "static") return DriftMode::Static;
    throw InputError("unknown drift mode: " + s);
}

std::string to_string(DriftMode m) {
    switch (m) {
        case DriftMode::Hybrid: return "hybrid";
        case DriftMode::MoveIndividualsOnly: return "move_individuals_only";
        case DriftMode::GlobalEveryEvent: return "global_every_event";
        case DriftMode::RecusterSelectedOnly: return "recluster_selected_only";
        default: return "static";
    }
}

bool detect_drift(const Representation& old_rep, const Representation& new_rep,
                  Metric metric, double epsilon) {
    return distance(old_rep, new_rep, metric) > epsilon;
}

namespace {

int nearest_center_index(const std::vector<double>& x,
                         const std::vector<std::vector<double>>& centers, Metric metric) {
    int best = 0;
    double best_d = vec_distance(x, centers[0], metric);
    for (int k = 1; k < static_cast<int>(centers.size()); ++k) {
        const double d = vec_distance(x, centers[k], metric);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

void recompute_centers(ClusterAssignment& a, std::span<const Representation> all_reps) {
    std::vector<long> counts(a.K, 0);
    std::vector<std::vector<double>> sums(a.K);
    for (const Representation& r : all_reps) {
        const auto it = a.client_to_cluster.find(r.client_id);
        if (it == a.client_to_cluster.end()) continue;
        const auto& v = rep_values(r);
        auto& s = sums[it->second];
        if (s.empty()) s.assign(v.size(), 0.0);
        for (std::size_t d = 0; d < v.size(); ++d) s[d] += v[d];
        ++counts[it->second];
    }
    for (int k = 0; k < a.K; ++k) {
        if (counts[k] == 0) continue;  // deleted later; keep the stale center
        const double inv = 1.0 / static_cast<double>(counts[k]);
        for (double& x : sums[k]) x *= inv;
        a.centers[k] = std::move(sums[k]);
    }
}

void delete_empty_clusters(ClusterAssignment& a, std::vector<ModelParams>& models) {
    std::vector<long> counts(a.K, 0);
    for (const auto& [cid, k] : a.client_to_cluster) ++counts[k];
    std::vector<int> remap(a.K, -1);
    int next = 0;
    for (int k = 0; k < a.K; ++k) {
        if (counts[k] > 0) remap[k] = next++;
    }
    if (next == a.K) return;
    std::vector<std::vector<double>> centers(next);
    std::vector<ModelParams> kept(next);
    for (int k = 0; k < a.K; ++k) {
        if (remap[k] < 0) continue;
        centers[remap[k]] = std::move(a.centers[k]);
        kept[remap[k]] = std::move(models[k]);
        kept[remap[k]].cluster = remap[k];
    }
    for (auto& [cid, k] : a.client_to_cluster) k = remap[k];
    a.K = next;
    a.centers = std::move(centers);
    models = std::move(kept);
}

// New cluster models are unweighted means of members' previous cluster models.
std::vector<ModelParams> rebuild_models(const ClusterAssignment& next,
                                        const ClusterAssignment& prev,
                                        const std::vector<ModelParams>& prev_models,
                                        long round) {
    std::vector<ModelParams> out(next.K);
    std::vector<long> counts(next.K, 0);
    for (const auto& [cid, k] : next.client_to_cluster) {
        const auto it = prev.client_to_cluster.find(cid);
        if (it == prev.client_to_cluster.end()) continue;
        const auto& m = prev_models[it->second];
        if (out[k].values.empty()) out[k].values.assign(m.values.size(), 0.0);
        for (std::size_t d = 0; d < m.values.size(); ++d) out[k].values[d] += m.values[d];
        ++counts[k];
    }
    for (int k = 0; k < next.K; ++k) {
        if (counts[k] > 0) {
            const double inv = 1.0 / static_cast<double>(counts[k]);
            for (double& v : out[k].values) v *= inv;
        } else if (!prev_models.empty()) {
            // Cluster of brand-new clients: seed from the mean of all old models.
            out[k].values.assign(prev_models[0].values.size(), 0.0);
            for (const auto& m : prev_models)
                for (std::size_t d = 0; d < m.values.size(); ++d) out[k].values[d] += m.values[d];
            const double inv = 1.0 / static_cast<double>(prev_models.size());
            for (double& v : out[k].values) v *= inv;
        }
        out[k].round = round;
        out[k].cluster = k;
    }
    return out;
}

}  // namespace

ReassignResult reassign_drifted(std::span<const Representation> drifted,
                                const ClusterState& state,
                                std::span<const Representation> all_reps,
                                Metric metric) {
    if (state.assignment.K < 1) throw InputError("reassign_drifted: no clusters");
    ReassignResult r;
    r.assignment = state.assignment;
    const auto& frozen = state.assignment.centers;
    std::vector<const Representation*> order;
    order.reserve(drifted.size());
    for (const Representation& d : drifted) order.push_back(&d);
    std::sort(order.begin(), order.end(), [](const Representation* a, const Representation* b) {
        return a->client_id < b->client_id;
    });
    for (const Representation* d : order) {
        const int to = nearest_center_index(rep_values(*d), frozen, metric);
        const auto it = r.assignment.client_to_cluster.find(d->client_id);
        const int from = it == r.assignment.client_to_cluster.end() ? -1 : it->second;
        if (from != to) r.moved.push_back({d->client_id, from, to});
        r.assignment.client_to_cluster[d->client_id] = to;
    }
    recompute_centers(r.assignment, all_reps);
    return r;
}

ShiftCheck center_shift_check(const std::vector<std::vector<double>>& old_centers,
                              const std::vector<std::vector<double>>& new_centers,
                              Metric metric, double tau_fraction) {
    if (old_centers.size() != new_centers.size())
        throw InputError("center_shift_check: center count mismatch");
    if (new_centers.empty()) throw InputError("center_shift_check: no centers");
    ShiftCheck sc;
    const int K = static_cast<int>(new_centers.size());
    for (int k = 0; k < K; ++k)
        sc.max_shift = std::max(sc.max_shift, vec_distance(old_centers[k], new_centers[k], metric));
    if (K == 1) {
        sc.theta = 0.0;
        sc.triggered = true;
        return sc;
    }
    double sum = 0.0;
    long pairs = 0;
    for (int i = 0; i < K; ++i) {
        for (int j = i + 1; j < K; ++j) {
            sum += vec_distance(new_centers[i], new_centers[j], metric);
            ++pairs;
        }
    }
    sc.theta = sum / static_cast<double>(pairs);
    sc.triggered = sc.max_shift >= tau_fraction * sc.theta;
    return sc;
}

bool pairwise_trigger_check(const ClusterAssignment& assignment,
                            std::span<const Representation> reps, Metric metric,
                            double delta) {
    std::vector<std::vector<const Representation*>> by_cluster(assignment.K);
    for (const Representation& r : reps) {
        const auto it = assignment.client_to_cluster.find(r.client_id);
        if (it == assignment.client_to_cluster.end()) continue;
        by_cluster[it->second].push_back(&r);
    }
    for (const auto& group : by_cluster) {
        for (std::size_t i = 0; i < group.size(); ++i) {
            for (std::size_t j = i + 1; j < group.size(); ++j) {
                if (distance(*group[i], *group[j], metric) > delta) return true;
            }
        }
    }
    return false;
}

double update_adaptive_delta(double delta, double c, bool last_two_events_triggered) {
    if (delta < 0.0 || c <= 0.0) throw InputError("update_adaptive_delta: bad arguments");
    if (last_two_events_triggered) return 2.0 * delta;
    return std::max(0.0, std::min(c, delta - c));
}

DriftOutcome handle_drift_event(std::span<const Representation> drifted,
                                const ClusterState& state,
                                std::span<const Representation> all_reps,
                                const DriftPolicy& policy, Metric metric,
                                KRange krange,
                                std::span<const int> selected_last_round,
                                std::uint64_t seed) {
    DriftOutcome out;
    out.new_assignment = state.assignment;
    out.new_models = state.models;
    if (policy.mode == DriftMode::Static || drifted.empty()) return out;

    const auto clamp_range = [&](std::size_t n) {
        KRange r = krange;
        r.k_max = std::min<int>(r.k_max, static_cast<int>(n));
        r.k_min = std::min(r.k_min, r.k_max);
        return r;
    };

    if (policy.mode == DriftMode::RecusterSelectedOnly) {
        std::vector<Representation> subset;
        for (const Representation& r : all_reps) {
            if (std::find(selected_last_round.begin(), selected_last_round.end(), r.client_id) !=
                selected_last_round.end())
                subset.push_back(r);
        }
        if (subset.size() < 2) return out;
        const KRange kr = clamp_range(subset.size());
        ClusterAssignment sub = choose_k(subset, metric, kr.k_min, kr.k_max,
                                         rng::derive_seed(seed, "recluster_selected"));
        ClusterAssignment merged;
        merged.K = sub.K;
        merged.centers = sub.centers;
        for (const Representation& r : all_reps) {
            const auto in_sub = sub.client_to_cluster.find(r.client_id);
            int to;
            if (in_sub != sub.client_to_cluster.end()) {
                to = in_sub->second;
            } else {
                const auto it = state.assignment.client_to_cluster.find(r.client_id);
                const int stale = it == state.assignment.client_to_cluster.end() ? -1 : it->second;
                to = (stale >= 0 && stale < merged.K)
                         ? stale
                         : nearest_center_index(rep_values(r), merged.centers, metric);
            }
            merged.client_to_cluster[r.client_id] = to;
            const auto prev = state.assignment.client_to_cluster.find(r.client_id);
            const int from = prev == state.assignment.client_to_cluster.end() ? -1 : prev->second;
            if (from != to) out.moved_clients.push_back({r.client_id, from, to});
        }
        out.new_models = rebuild_models(merged, state.assignment, state.models, state.round);
        delete_empty_clusters(merged, out.new_models);
        out.new_assignment = std::move(merged);
        out.global_recluster_triggered = true;
        return out;
    }

    ReassignResult rr = reassign_drifted(drifted, state, all_reps, metric);
    const ShiftCheck sc = center_shift_check(state.assignment.centers, rr.assignment.centers,
                                             metric, policy.tau_fraction);
    out.theta = sc.theta;
    out.max_center_shift = sc.max_shift;
    out.moved_clients = rr.moved;

    ClusterAssignment moved = std::move(rr.assignment);
    std::vector<ModelParams> models = state.models;
    delete_empty_clusters(moved, models);

    bool trig = false;
    switch (policy.mode) {
        case DriftMode::GlobalEveryEvent:
            trig = true;
            break;
        case DriftMode::Hybrid:
            trig = policy.pairwise_variant
                       ? pairwise_trigger_check(moved, all_reps, metric, policy.pairwise_delta)
                       : sc.triggered;
            break;
        default:
            trig = false;
            break;
    }
    if (moved.K < 2) trig = true;

    if (trig && all_reps.size() >= 2) {
        const KRange kr = clamp_range(all_reps.size());
        ClusterAssignment next = choose_k(all_reps, metric, kr.k_min, kr.k_max,
                                          rng::derive_seed(seed, "global_recluster"));
        out.new_models = rebuild_models(next, moved, models, state.round);
        out.new_assignment = std::move(next);
        out.global_recluster_triggered = true;
    } else {
        out.new_assignment = std::move(moved);
        out.new_models = std::move(models);
    }
    return out;
}

}  // namespace cflsim
