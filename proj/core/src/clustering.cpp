#include "cflsim/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace cflsim {

std::vector<std::vector<int>> ClusterAssignment::members() const {
    std::vector<std::vector<int>> out(K);
    for (const auto& [cid, k] : client_to_cluster) out[k].push_back(cid);
    return out;
}

KRange default_k_range(std::size_t num_clients) {
    const long n = static_cast<long>(num_clients);
    long k_max = std::min<long>({20, n / 10, n - 1});
    k_max = std::clamp<long>(k_max, 2, std::max<long>(2, n));
    return {2, static_cast<int>(k_max)};
}

namespace {

struct Points {
    std::vector<int> ids;                       // canonical ascending client ids
    std::vector<const std::vector<double>*> v;  // representation vectors, same order
};

Points canonicalize(std::span<const Representation> reps) {
    Points p;
    std::vector<std::size_t> order(reps.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return reps[a].client_id < reps[b].client_id;
    });
    p.ids.reserve(reps.size());
    p.v.reserve(reps.size());
    int last = std::numeric_limits<int>::min();
    for (std::size_t i : order) {
        if (reps[i].client_id == last) throw InputError("kmeans: duplicate client id");
        last = reps[i].client_id;
        p.ids.push_back(reps[i].client_id);
        p.v.push_back(&rep_values(reps[i]));
    }
    for (const auto* vec : p.v) {
        if (vec->size() != p.v.front()->size())
            throw InputError("kmeans: representation dimension mismatch");
    }
    return p;
}

int nearest_center(const std::vector<double>& x,
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

std::vector<std::vector<double>> mean_centers(const Points& p,
                                              const std::vector<int>& assign, int K) {
    const std::size_t dim = p.v.front()->size();
    std::vector<std::vector<double>> centers(K, std::vector<double>(dim, 0.0));
    std::vector<long> counts(K, 0);
    for (std::size_t i = 0; i < p.v.size(); ++i) {
        const int k = assign[i];
        ++counts[k];
        const auto& x = *p.v[i];
        for (std::size_t d = 0; d < dim; ++d) centers[k][d] += x[d];
    }
    for (int k = 0; k < K; ++k) {
        if (counts[k] == 0) continue;
        const double inv = 1.0 / static_cast<double>(counts[k]);
        for (double& c : centers[k]) c *= inv;
    }
    return centers;
}

// Re-seed every empty cluster with the point farthest from its current center.
// Only points from clusters with >= 2 members are eligible; ties go to the
// lowest point index so the fix is stable across iterations.
void fix_empty_clusters(const Points& p, const std::vector<std::vector<double>>& centers,
                        std::vector<int>& assign, int K, Metric metric) {
    std::vector<int> counts(K, 0);
    for (int a : assign) ++counts[a];
    std::vector<char> pinned(p.v.size(), 0);
    for (int k = 0; k < K; ++k) {
        if (counts[k] > 0) continue;
        int best = -1;
        double best_d = -1.0;
        for (std::size_t i = 0; i < p.v.size(); ++i) {
            if (pinned[i] || counts[assign[i]] < 2) continue;
            const double d = vec_distance(*p.v[i], centers[assign[i]], metric);
            if (d > best_d) {
                best_d = d;
                best = static_cast<int>(i);
            }
        }
        if (best < 0) continue;
        --counts[assign[best]];
        assign[best] = k;
        ++counts[k];
        pinned[best] = 1;
    }
}

double objective(const Points& p, const std::vector<std::vector<double>>& centers,
                 const std::vector<int>& assign, Metric metric) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.v.size(); ++i)
        s += vec_distance(*p.v[i], centers[assign[i]], metric);
    return s;
}

std::vector<std::vector<double>> kmeanspp_seed(const Points& p, int K, Metric metric,
                                               rng::Stream& stream) {
    std::vector<std::vector<double>> centers;
    centers.reserve(K);
    const std::size_t n = p.v.size();
    centers.push_back(*p.v[stream.next_below(n)]);
    std::vector<double> d2(n);
    while (static_cast<int>(centers.size()) < K) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centers) best = std::min(best, vec_distance(*p.v[i], c, metric));
            d2[i] = best * best;
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double r = stream.next_double() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = stream.next_below(n);
        }
        centers.push_back(*p.v[pick]);
    }
    return centers;
}

}  // namespace

ClusterAssignment kmeans(std::span<const Representation> reps, int K, Metric metric,
                         std::uint64_t seed, KmeansDiag* diag) {
    if (K < 1) throw InputError("kmeans: K must be >= 1");
    if (static_cast<std::size_t>(K) > reps.size()) throw InputError("kmeans: K > N");
    const Points p = canonicalize(reps);
    const std::size_t n = p.v.size();

    auto stream = rng::make_stream(seed, "kmeans", static_cast<std::uint64_t>(K));
    std::vector<std::vector<double>> centers = kmeanspp_seed(p, K, metric, stream);

    std::vector<int> assign(n, 0);
    auto assign_all = [&](const std::vector<std::vector<double>>& cs) {
        for (std::size_t i = 0; i < n; ++i) assign[i] = nearest_center(*p.v[i], cs, metric);
        fix_empty_clusters(p, cs, assign, K, metric);
    };

    assign_all(centers);
    centers = mean_centers(p, assign, K);
    double obj = objective(p, centers, assign, metric);
    if (diag) {
        diag->objective_trace.push_back(obj);
        diag->iterations = 0;
    }

    for (int iter = 1; iter < 100; ++iter) {
        std::vector<int> prev = assign;
        std::vector<std::vector<double>> prev_centers = centers;
        assign_all(centers);
        if (assign == prev) break;
        centers = mean_centers(p, assign, K);
        const double next_obj = objective(p, centers, assign, metric);
        if (next_obj > obj + 1e-12) {
            // Mean recentering under L1/JS can raise the objective; keep the
            // better earlier state so the objective trace stays non-increasing.
            assign = std::move(prev);
            centers = std::move(prev_centers);
            break;
        }
        obj = next_obj;
        if (diag) {
            diag->objective_trace.push_back(obj);
            diag->iterations = iter;
        }
    }

    ClusterAssignment out;
    out.K = K;
    out.centers = std::move(centers);
    for (std::size_t i = 0; i < n; ++i) out.client_to_cluster[p.ids[i]] = assign[i];
    return out;
}

double silhouette_score(const ClusterAssignment& assignment,
                        std::span<const Representation> reps, Metric metric) {
    if (assignment.K < 2) throw InputError("silhouette_score: K must be >= 2");
    const Points p = canonicalize(reps);
    const std::size_t n = p.v.size();
    std::vector<int> assign(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto it = assignment.client_to_cluster.find(p.ids[i]);
        if (it == assignment.client_to_cluster.end())
            throw InputError("silhouette_score: client missing from assignment");
        assign[i] = it->second;
    }
    std::vector<long> counts(assignment.K, 0);
    for (int a : assign) ++counts[a];

    double total = 0.0;
    std::vector<double> mean_to(assignment.K);
    for (std::size_t i = 0; i < n; ++i) {
        if (counts[assign[i]] <= 1) continue;  // singleton contributes 0
        std::fill(mean_to.begin(), mean_to.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            mean_to[assign[j]] += vec_distance(*p.v[i], *p.v[j], metric);
        }
        const double a = mean_to[assign[i]] / static_cast<double>(counts[assign[i]] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (int k = 0; k < assignment.K; ++k) {
            if (k == assign[i] || counts[k] == 0) continue;
            b = std::min(b, mean_to[k] / static_cast<double>(counts[k]));
        }
        const double mx = std::max(a, b);
        total += mx > 0.0 ? (b - a) / mx : 0.0;
    }
    return total / static_cast<double>(n);
}

ClusterAssignment choose_k(std::span<const Representation> reps, Metric metric,
                           int k_min, int k_max, std::uint64_t seed) {
    if (k_min < 2) throw InputError("choose_k: k_min must be >= 2");
    if (k_max < k_min) throw InputError("choose_k: k_max < k_min");
    if (static_cast<std::size_t>(k_max) > reps.size()) throw InputError("choose_k: k_max > N");
    ClusterAssignment best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int K = k_min; K <= k_max; ++K) {
        ClusterAssignment a = kmeans(reps, K, metric, rng::derive_seed(seed, "choose_k", K));
        const double s = silhouette_score(a, reps, metric);
        if (s > best_score) {
            best_score = s;
            best = std::move(a);
        }
    }
    return best;
}

HeterogeneityReport mean_client_distance(const ClusterAssignment& assignment,
                                         std::span<const Representation> reps,
                                         Metric metric) {
    const Points p = canonicalize(reps);
    const std::size_t n = p.v.size();
    std::vector<int> assign(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto it = assignment.client_to_cluster.find(p.ids[i]);
        if (it == assignment.client_to_cluster.end())
            throw InputError("mean_client_distance: client missing from assignment");
        assign[i] = it->second;
    }
    std::vector<long> counts(assignment.K, 0);
    for (int a : assign) ++counts[a];

    HeterogeneityReport rep;
    rep.per_cluster_mean.assign(assignment.K, 0.0);
    double total = 0.0;
    double global_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double same = 0.0;
        double all = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d = vec_distance(*p.v[i], *p.v[j], metric);
            all += d;
            if (assign[j] == assign[i]) same += d;
        }
        const double per_client =
            counts[assign[i]] > 1 ? same / static_cast<double>(counts[assign[i]] - 1) : 0.0;
        total += per_client;
        rep.per_cluster_mean[assign[i]] += per_client;
        global_total += n > 1 ? all / static_cast<double>(n - 1) : 0.0;
    }
    for (int k = 0; k < assignment.K; ++k) {
        if (counts[k] > 0) rep.per_cluster_mean[k] /= static_cast<double>(counts[k]);
    }
    rep.mean_client_distance = n > 0 ? total / static_cast<double>(n) : 0.0;
    rep.global_mean = n > 0 ? global_total / static_cast<double>(n) : 0.0;
    return rep;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) throw InputError("adjusted_rand_index: length mismatch");
    const std::size_t n = a.size();
    if (n < 2) return 1.0;
    std::map<int, int> ra, rb;
    for (int v : a) ra.emplace(v, static_cast<int>(ra.size()));
    for (int v : b) rb.emplace(v, static_cast<int>(rb.size()));
    std::vector<std::vector<long>> table(ra.size(), std::vector<long>(rb.size(), 0));
    for (std::size_t i = 0; i < n; ++i) ++table[ra[a[i]]][rb[b[i]]];

    auto choose2 = [](long m) { return 0.5 * static_cast<double>(m) * (m - 1); };
    double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
    std::vector<long> rows(ra.size(), 0), cols(rb.size(), 0);
    for (std::size_t i = 0; i < ra.size(); ++i) {
        for (std::size_t j = 0; j < rb.size(); ++j) {
            sum_ij += choose2(table[i][j]);
            rows[i] += table[i][j];
            cols[j] += table[i][j];
        }
    }
    for (long r : rows) sum_a += choose2(r);
    for (long c : cols) sum_b += choose2(c);
    const double total = choose2(static_cast<long>(n));
    const double expected = sum_a * sum_b / total;
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;
    return (sum_ij - expected) / (max_index - expected);
}

}  // namespace cflsim
