#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "cflsim/representation.hpp"

namespace cflsim {

struct ClusterAssignment {
    std::map<int, int> client_to_cluster;
    int K = 0;
    std::vector<std::vector<double>> centers;

    // Member ids per cluster, ascending within each cluster.
    std::vector<std::vector<int>> members() const;
};

struct HeterogeneityReport {
    double mean_client_distance = 0.0;
    std::vector<double> per_cluster_mean;
    double global_mean = 0.0;
};

struct KmeansDiag {
    std::vector<double> objective_trace;
    int iterations = 0;
};

struct KRange {
    int k_min = 2;
    int k_max = 2;
};

// k_min fixed at 2, k_max = min(20, N/10, N-1) clamped into [2, N].
KRange default_k_range(std::size_t num_clients);

ClusterAssignment kmeans(std::span<const Representation> reps, int K, Metric metric,
                         std::uint64_t seed, KmeansDiag* diag = nullptr);

double silhouette_score(const ClusterAssignment& assignment,
                        std::span<const Representation> reps, Metric metric);

ClusterAssignment choose_k(std::span<const Representation> reps, Metric metric,
                           int k_min, int k_max, std::uint64_t seed);

HeterogeneityReport mean_client_distance(const ClusterAssignment& assignment,
                                         std::span<const Representation> reps,
                                         Metric metric);

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

}  // namespace cflsim
