#include "cflsim/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cflsim {

SelectorKind selector_from_string(const std::string& s) {
    if (s == "random") return SelectorKind::Random;
    if (s == "utility" || s == "oort") return SelectorKind::Utility;
    if (s == "distance") return SelectorKind::Distance;
    throw InputError("unknown selector: " + s);
}

std::string to_string(SelectorKind k) {
    switch (k) {
        case SelectorKind::Random: return "random";
        case SelectorKind::Utility: return "utility";
        default: return "distance";
    }
}

std::vector<int> select_random(std::span<const int> members, int n, rng::Stream& stream) {
    if (n < 0) throw InputError("select_random: negative n");
    if (n >= static_cast<int>(members.size()))
        return std::vector<int>(members.begin(), members.end());
    std::vector<int> out;
    out.reserve(n);
    for (std::size_t idx : stream.sample_without_replacement(members.size(), n))
        out.push_back(members[idx]);
    return out;
}

std::vector<int> select_utility(std::span<const ClientProfile> profiles,
                                std::span<const double> expected_times, int n,
                                long round, double explore_fraction, double deadline_s,
                                double penalty_alpha, rng::Stream& stream) {
    (void)round;
    if (profiles.size() != expected_times.size())
        throw InputError("select_utility: profile/time length mismatch");
    const int m = static_cast<int>(profiles.size());
    if (n >= m) {
        std::vector<int> all(m);
        for (int i = 0; i < m; ++i) all[i] = profiles[i].client_id;
        return all;
    }

    double deadline = deadline_s;
    if (deadline <= 0.0) {
        std::vector<double> ts(expected_times.begin(), expected_times.end());
        std::sort(ts.begin(), ts.end());
        deadline = ts[static_cast<std::size_t>(0.8 * (ts.size() - 1))];
    }

    struct Row {
        int idx;
        double score;
        double jitter;
    };
    std::vector<Row> rows(m);
    for (int i = 0; i < m; ++i) {
        double score = std::sqrt(static_cast<double>(std::max<long>(profiles[i].data_size, 0))) *
                       profiles[i].last_loss;
        if (deadline > 0.0 && expected_times[i] > deadline)
            score *= std::pow(deadline / expected_times[i], penalty_alpha);
        rows[i] = {i, score, stream.next_double()};
    }

    const int n_explore = std::clamp(static_cast<int>(std::floor(explore_fraction * n)), 0, n);
    const int n_exploit = n - n_explore;

    std::vector<Row> by_score = rows;
    std::sort(by_score.begin(), by_score.end(), [&](const Row& a, const Row& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.jitter != b.jitter) return a.jitter > b.jitter;
        return profiles[a.idx].client_id < profiles[b.idx].client_id;
    });

    std::vector<char> taken(m, 0);
    std::vector<int> out;
    out.reserve(n);
    for (int i = 0; i < n_exploit; ++i) {
        taken[by_score[i].idx] = 1;
        out.push_back(profiles[by_score[i].idx].client_id);
    }

    // Exploration: never-selected first (uniform among them via jitter), then
    // least-recently-selected.
    std::vector<Row> rest;
    for (const Row& r : rows)
        if (!taken[r.idx]) rest.push_back(r);
    std::sort(rest.begin(), rest.end(), [&](const Row& a, const Row& b) {
        const long la = profiles[a.idx].last_selected_round;
        const long lb = profiles[b.idx].last_selected_round;
        const bool na = la < 0, nb = lb < 0;
        if (na != nb) return na;
        if (na && nb) return a.jitter > b.jitter;
        if (la != lb) return la < lb;
        return a.jitter > b.jitter;
    });
    for (int i = 0; i < n_explore && i < static_cast<int>(rest.size()); ++i)
        out.push_back(profiles[rest[i].idx].client_id);
    return out;
}

std::vector<int> select_distance(std::span<const int> members,
                                 std::span<const Representation> reps,
                                 const std::vector<double>& center, Metric metric, int n) {
    if (members.size() != reps.size())
        throw InputError("select_distance: member/rep length mismatch");
    struct Row {
        int id;
        double d;
    };
    std::vector<Row> rows(members.size());
    for (std::size_t i = 0; i < members.size(); ++i)
        rows[i] = {members[i], vec_distance(rep_values(reps[i]), center, metric)};
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.d != b.d) return a.d < b.d;
        return a.id < b.id;
    });
    const int take = std::min<int>(n, static_cast<int>(rows.size()));
    std::vector<int> out(take);
    for (int i = 0; i < take; ++i) out[i] = rows[i].id;
    return out;
}

}  // namespace cflsim
