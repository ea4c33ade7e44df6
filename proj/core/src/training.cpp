#include "cflsim/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cflsim {

Aggregation aggregation_from_string(const std::string& s) {
    if (s == "fedavg") return Aggregation::FedAvg;
    if (s == "fedprox") return Aggregation::FedProx;
    if (s == "fedyogi") return Aggregation::FedYogi;
    if (s == "qfedavg") return Aggregation::QFedAvg;
    throw InputError("unknown aggregation: " + s);
}

std::string to_string(Aggregation a) {
    switch (a) {
        case Aggregation::FedAvg: return "fedavg";
        case Aggregation::FedProx: return "fedprox";
        case Aggregation::FedYogi: return "fedyogi";
        default: return "qfedavg";
    }
}

ModelParams local_update(const ModelParams& start, std::span<const Sample> data,
                         const TrainingConfig& cfg, const TaskModel& model,
                         rng::Stream& stream, int client_id, long round) {
    if (data.empty()) throw InputError("local_update: client has no data");
    ModelParams x = start;
    x.round = round;
    std::vector<double> grad;
    std::vector<Sample> batch;
    const std::size_t bs = std::max(1, cfg.batch_size);
    for (int step = 0; step < cfg.local_steps; ++step) {
        batch.clear();
        for (std::size_t b = 0; b < bs; ++b)
            batch.push_back(data[stream.next_below(data.size())]);
        double loss;
        try {
            loss = model.loss_and_grad(x.values, batch, grad);
        } catch (const NumericalError& e) {
            throw DivergedClientError(client_id, round, e.what());
        }
        if (!std::isfinite(loss)) throw DivergedClientError(client_id, round, "non-finite loss");
        if (cfg.aggregation == Aggregation::FedProx && cfg.mu_prox != 0.0) {
            for (std::size_t d = 0; d < grad.size(); ++d)
                grad[d] += cfg.mu_prox * (x.values[d] - start.values[d]);
        }
        for (std::size_t d = 0; d < grad.size(); ++d) x.values[d] -= cfg.eta * grad[d];
    }
    return x;
}

namespace {

ModelParams mean_of(std::span<const ModelParams> ms) {
    ModelParams out;
    out.values.assign(ms[0].values.size(), 0.0);
    for (const ModelParams& m : ms) {
        if (m.values.size() != out.values.size()) throw InputError("aggregate: dim mismatch");
        for (std::size_t d = 0; d < m.values.size(); ++d) out.values[d] += m.values[d];
    }
    const double inv = 1.0 / static_cast<double>(ms.size());
    for (double& v : out.values) v *= inv;
    return out;
}

}  // namespace

ModelParams aggregate(const ModelParams& cluster_model,
                      std::span<const ModelParams> client_models,
                      std::span<const double> client_losses, const TrainingConfig& cfg,
                      AggregatorState& state) {
    if (client_models.empty()) throw InputError("aggregate: no client models");
    for (const ModelParams& m : client_models) {
        if (m.values.size() != cluster_model.values.size())
            throw InputError("aggregate: dim mismatch");
    }
    const std::size_t dim = cluster_model.values.size();

    switch (cfg.aggregation) {
        case Aggregation::FedAvg:
        case Aggregation::FedProx: {
            ModelParams out = mean_of(client_models);
            out.round = cluster_model.round;
            out.cluster = cluster_model.cluster;
            return out;
        }
        case Aggregation::FedYogi: {
            if (!state.initialized) {
                state.m.assign(dim, 0.0);
                state.v.assign(dim, cfg.yogi_tau_adapt * cfg.yogi_tau_adapt);
                state.initialized = true;
            }
            const ModelParams mean = mean_of(client_models);
            ModelParams out = cluster_model;
            for (std::size_t d = 0; d < dim; ++d) {
                const double delta = mean.values[d] - cluster_model.values[d];
                state.m[d] = cfg.yogi_beta1 * state.m[d] + (1.0 - cfg.yogi_beta1) * delta;
                const double d2 = delta * delta;
                const double sign = state.v[d] > d2 ? 1.0 : (state.v[d] < d2 ? -1.0 : 0.0);
                state.v[d] -= (1.0 - cfg.yogi_beta2) * d2 * sign;
                out.values[d] += cfg.yogi_eta_server * state.m[d] /
                                 (std::sqrt(std::max(state.v[d], 0.0)) + cfg.yogi_tau_adapt);
            }
            return out;
        }
        case Aggregation::QFedAvg:
        default: {
            if (client_losses.size() != client_models.size())
                throw InputError("aggregate: q-FedAvg needs one loss per client model");
            const double q = cfg.qfedavg_q;
            const double inv_eta = 1.0 / cfg.eta;
            std::vector<double> num(dim, 0.0);
            double denom = 0.0;
            for (std::size_t i = 0; i < client_models.size(); ++i) {
                const double F = std::max(client_losses[i], 1e-12);
                const double fq = q == 0.0 ? 1.0 : std::pow(F, q);
                double sq = 0.0;
                for (std::size_t d = 0; d < dim; ++d) {
                    const double delta = inv_eta * (cluster_model.values[d] - client_models[i].values[d]);
                    num[d] += fq * delta;
                    sq += delta * delta;
                }
                denom += q == 0.0 ? inv_eta : q * std::pow(F, q - 1.0) * sq + inv_eta * fq;
            }
            ModelParams out = cluster_model;
            for (std::size_t d = 0; d < dim; ++d) out.values[d] -= num[d] / denom;
            return out;
        }
    }
}

RoundFragment run_cluster_round(int cluster_idx, ClusterState& state,
                                std::span<const ClientView> members, int budget,
                                const TrainingConfig& cfg, const TaskModel& model,
                                const SelectorContext& selector, const DeviceTimeModel& tm,
                                AggregatorState& agg_state, std::uint64_t root_seed,
                                long round) {
    RoundFragment frag;
    frag.cluster = cluster_idx;
    if (members.empty()) return frag;  // skipped; caller logs the warning

    auto sel_stream = rng::make_stream(root_seed, "select", static_cast<std::uint64_t>(round),
                                       static_cast<std::uint64_t>(cluster_idx));
    std::vector<int> ids(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) ids[i] = members[i].client_id;

    if (cfg.sampling_with_replacement && selector.spec.kind == SelectorKind::Random) {
        for (int i = 0; i < budget; ++i)
            frag.selected.push_back(ids[sel_stream.next_below(ids.size())]);
    } else {
        const int n = std::min<int>(budget, static_cast<int>(members.size()));
        switch (selector.spec.kind) {
            case SelectorKind::Random:
                frag.selected = select_random(ids, n, sel_stream);
                break;
            case SelectorKind::Utility: {
                std::vector<ClientProfile> profiles;
                std::vector<double> times;
                profiles.reserve(members.size());
                for (const ClientView& m : members) {
                    profiles.push_back(*m.profile);
                    times.push_back(
                        expected_client_time(*m.profile, tm, cfg.local_steps, cfg.batch_size));
                }
                frag.selected = select_utility(profiles, times, n, round,
                                               selector.spec.explore_fraction,
                                               selector.spec.deadline_s,
                                               selector.spec.penalty_alpha, sel_stream);
                break;
            }
            case SelectorKind::Distance:
            default: {
                std::vector<Representation> reps;
                reps.reserve(members.size());
                for (const ClientView& m : members) reps.push_back(*m.rep);
                frag.selected = select_distance(ids, reps, state.assignment.centers[cluster_idx],
                                                selector.metric, n);
                break;
            }
        }
    }
    if (frag.selected.empty()) return frag;

    auto member_of = [&](int cid) -> const ClientView& {
        const auto it = std::lower_bound(
            members.begin(), members.end(), cid,
            [](const ClientView& m, int id) { return m.client_id < id; });
        return *it;
    };

    const ModelParams& start = state.models[cluster_idx];
    std::vector<ModelParams> updates;
    std::vector<double> losses;
    std::vector<int> contributors;
    std::vector<const ClientProfile*> sel_profiles;
    for (int cid : frag.selected) sel_profiles.push_back(member_of(cid).profile);
    const RoundTime rt = simulate_round_time(sel_profiles, tm, cfg.local_steps, cfg.batch_size);
    frag.round_time_s = rt.round_time_s;
    frag.dropped = rt.dropped;

    for (int cid : frag.selected) {
        const ClientView& m = member_of(cid);
        const double f = model.loss(start.values, m.train);
        frag.client_losses.emplace_back(cid, f);
        if (std::find(rt.dropped.begin(), rt.dropped.end(), cid) != rt.dropped.end()) continue;
        auto stream = rng::make_stream(root_seed, "local", static_cast<std::uint64_t>(round),
                                       static_cast<std::uint64_t>(cid));
        try {
            updates.push_back(local_update(start, m.train, cfg, model, stream, cid, round));
            losses.push_back(f);
            contributors.push_back(cid);
        } catch (const DivergedClientError&) {
            frag.diverged.push_back(cid);
        }
    }
    if (updates.empty()) return frag;

    ModelParams next = aggregate(start, updates, losses, cfg, agg_state);
    next.round = round + 1;
    next.cluster = cluster_idx;
    state.models[cluster_idx] = std::move(next);
    (void)contributors;
    return frag;
}

std::vector<int> round_budgets(std::span<const long> cluster_sizes, int participants) {
    const int K = static_cast<int>(cluster_sizes.size());
    if (K == 0) return {};
    const int base = std::max(1, participants / K);
    std::vector<int> budgets(K, base);
    int leftover = participants - K * base;
    if (leftover > 0) {
        std::vector<int> order(K);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (cluster_sizes[a] != cluster_sizes[b]) return cluster_sizes[a] > cluster_sizes[b];
            return a < b;
        });
        for (int i = 0; i < K && leftover > 0; ++i, --leftover) ++budgets[order[i]];
    }
    return budgets;
}

void run_event_block(ClusterState& state, const MembersFn& members_fn,
                     const TrainingConfig& cfg, const TaskModel& model,
                     const SelectorContext& selector, const DeviceTimeModel& tm,
                     std::vector<AggregatorState>& agg_states, std::uint64_t root_seed,
                     int rounds, const RoundHook& hook) {
    agg_states.resize(state.assignment.K);
    for (int r = 0; r < rounds; ++r) {
        std::vector<std::vector<ClientView>> members(state.assignment.K);
        std::vector<long> sizes(state.assignment.K);
        for (int k = 0; k < state.assignment.K; ++k) {
            members[k] = members_fn(k);
            sizes[k] = static_cast<long>(members[k].size());
        }
        const std::vector<int> budgets = round_budgets(sizes, cfg.participants_per_round);
        std::vector<RoundFragment> frags;
        frags.reserve(state.assignment.K);
        double block_time = 0.0;
        for (int k = 0; k < state.assignment.K; ++k) {
            frags.push_back(run_cluster_round(k, state, members[k], budgets[k], cfg, model,
                                              selector, tm, agg_states[k], root_seed,
                                              state.round));
            block_time = std::max(block_time, frags.back().round_time_s);
        }
        state.sim_time += block_time;
        if (hook) hook(state.round, frags);
        ++state.round;
    }
}

}  // namespace cflsim
