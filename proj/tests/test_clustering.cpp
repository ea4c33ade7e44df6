#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "cflsim/clustering.hpp"
#include "cflsim/errors.hpp"
#include "cflsim/rng.hpp"
#include "doctest.h"

using namespace cflsim;

namespace {

Representation embed(std::vector<double> values, int client_id) {
    Representation r;
    r.payload = EmbeddingVector{std::move(values), "test"};
    r.client_id = client_id;
    return r;
}

Representation hist(std::vector<double> probs, int client_id) {
    Representation r;
    r.payload = LabelHistogram{std::move(probs), 10};
    r.client_id = client_id;
    return r;
}

// points drawn around well-separated centers; returns reps + ground truth
struct Blobs {
    std::vector<Representation> reps;
    std::vector<int> truth;
};

Blobs make_blobs(int per_blob, const std::vector<std::vector<double>>& centers, double sigma,
                 std::uint64_t seed) {
    Blobs out;
    rng::Stream s(seed);
    int id = 0;
    for (std::size_t b = 0; b < centers.size(); ++b) {
        for (int i = 0; i < per_blob; ++i) {
            std::vector<double> v = centers[b];
            for (double& x : v) x += sigma * s.next_normal();
            out.reps.push_back(embed(std::move(v), id++));
            out.truth.push_back(static_cast<int>(b));
        }
    }
    return out;
}

std::vector<int> labels_of(const ClusterAssignment& a, int n) {
    std::vector<int> out(n, -1);
    for (const auto& [cid, k] : a.client_to_cluster) out[cid] = k;
    return out;
}

}  // namespace

TEST_CASE("default_k_range follows the population size") {
    CHECK(default_k_range(100).k_min == 2);
    CHECK(default_k_range(100).k_max == 10);
    CHECK(default_k_range(300).k_max == 20);
    CHECK(default_k_range(15).k_max == 2);
    CHECK(default_k_range(3).k_max == 2);
    CHECK(default_k_range(1000).k_max == 20);
}

TEST_CASE("kmeans groups well-separated one-hot pairs") {
    std::vector<Representation> reps = {
        hist({1, 0, 0, 0}, 0), hist({0.9, 0.1, 0, 0}, 1),
        hist({0, 0, 0, 1}, 2), hist({0, 0, 0.1, 0.9}, 3)};
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 17ull, 99ull}) {
        const ClusterAssignment a = kmeans(reps, 2, Metric::L1, seed);
        CHECK(a.K == 2);
        CHECK(a.client_to_cluster.at(0) == a.client_to_cluster.at(1));
        CHECK(a.client_to_cluster.at(2) == a.client_to_cluster.at(3));
        CHECK(a.client_to_cluster.at(0) != a.client_to_cluster.at(2));
    }
}

TEST_CASE("K=1 produces the global mean center") {
    std::vector<Representation> reps = {embed({1, 3}, 0), embed({3, 5}, 1), embed({2, 1}, 2)};
    const ClusterAssignment a = kmeans(reps, 1, Metric::SquaredEuclidean, 4);
    CHECK(a.K == 1);
    REQUIRE(a.centers.size() == 1);
    CHECK(a.centers[0][0] == doctest::Approx(2.0));
    CHECK(a.centers[0][1] == doctest::Approx(3.0));
    for (int i = 0; i < 3; ++i) CHECK(a.client_to_cluster.at(i) == 0);
}

TEST_CASE("kmeans rejects K larger than the population") {
    std::vector<Representation> reps = {embed({0}, 0), embed({1}, 1)};
    CHECK_THROWS_AS(kmeans(reps, 3, Metric::L1, 1), InputError);
    CHECK_THROWS_AS(kmeans(reps, 0, Metric::L1, 1), InputError);
}

TEST_CASE("three tight blobs recover ground truth exactly") {
    const Blobs b = make_blobs(20, {{0, 0}, {2, 0}, {0, 2}}, 0.01, 5);
    const ClusterAssignment a = kmeans(b.reps, 3, Metric::L1, 12);
    CHECK(adjusted_rand_index(labels_of(a, 60), b.truth) == doctest::Approx(1.0));
}

TEST_CASE("kmeans objective never increases across Lloyd iterations") {
    const Blobs b = make_blobs(15, {{0, 0}, {1.5, 1}, {3, 0}}, 0.4, 8);
    KmeansDiag diag;
    kmeans(b.reps, 3, Metric::L1, 3, &diag);
    REQUIRE(diag.objective_trace.size() >= 1);
    for (std::size_t i = 1; i < diag.objective_trace.size(); ++i)
        CHECK(diag.objective_trace[i] <= diag.objective_trace[i - 1] + 1e-9);
}

TEST_CASE("kmeans is deterministic for a fixed seed") {
    const Blobs b = make_blobs(10, {{0, 0}, {1, 1}}, 0.3, 6);
    const ClusterAssignment a1 = kmeans(b.reps, 2, Metric::SquaredEuclidean, 42);
    const ClusterAssignment a2 = kmeans(b.reps, 2, Metric::SquaredEuclidean, 42);
    CHECK(a1.client_to_cluster == a2.client_to_cluster);
    CHECK(a1.centers == a2.centers);
}

TEST_CASE("centers equal the member means after finalize") {
    const Blobs b = make_blobs(12, {{0, 0}, {4, 4}}, 0.2, 9);
    const ClusterAssignment a = kmeans(b.reps, 2, Metric::SquaredEuclidean, 2);
    const auto members = a.members();
    for (int k = 0; k < a.K; ++k) {
        std::vector<double> mean(2, 0.0);
        for (int cid : members[k]) {
            const auto& v = rep_values(b.reps[cid]);
            for (int d = 0; d < 2; ++d) mean[d] += v[d];
        }
        for (int d = 0; d < 2; ++d) {
            mean[d] /= static_cast<double>(members[k].size());
            CHECK(a.centers[k][d] == doctest::Approx(mean[d]).epsilon(1e-9));
        }
    }
}

TEST_CASE("silhouette hand evaluation: {0,0,10} split {{0,0},{10}}") {
    std::vector<Representation> reps = {embed({0}, 0), embed({0}, 1), embed({10}, 2)};
    ClusterAssignment a;
    a.K = 2;
    a.client_to_cluster = {{0, 0}, {1, 0}, {2, 1}};
    a.centers = {{0}, {10}};
    CHECK(silhouette_score(a, reps, Metric::L1) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("silhouette is high for tight separated blobs and low for random splits") {
    const Blobs b = make_blobs(20, {{0, 0}, {5, 5}}, 0.05, 13);
    const ClusterAssignment good = kmeans(b.reps, 2, Metric::L1, 1);
    CHECK(silhouette_score(good, b.reps, Metric::L1) > 0.9);

    const Blobs one = make_blobs(40, {{0, 0}}, 0.3, 14);
    ClusterAssignment random_split;
    random_split.K = 2;
    std::vector<double> c0(2, 0.0), c1(2, 0.0);
    for (int i = 0; i < 40; ++i) random_split.client_to_cluster[i] = i % 2;
    random_split.centers = {c0, c1};
    CHECK(silhouette_score(random_split, one.reps, Metric::L1) <= 0.1);
}

TEST_CASE("silhouette requires at least two clusters") {
    std::vector<Representation> reps = {embed({0}, 0), embed({1}, 1)};
    ClusterAssignment a;
    a.K = 1;
    a.client_to_cluster = {{0, 0}, {1, 0}};
    a.centers = {{0.5}};
    CHECK_THROWS_AS(silhouette_score(a, reps, Metric::L1), InputError);
}

TEST_CASE("choose_k finds three separated blobs") {
    const Blobs b = make_blobs(20, {{0, 0}, {3, 0}, {0, 3}}, 0.05, 20);
    const ClusterAssignment a = choose_k(b.reps, Metric::L1, 2, 6, 77);
    CHECK(a.K == 3);
    CHECK(adjusted_rand_index(labels_of(a, 60), b.truth) == doctest::Approx(1.0));
}

TEST_CASE("choose_k breaks ties toward smaller K") {
    std::vector<Representation> reps;
    for (int i = 0; i < 12; ++i) reps.push_back(embed({1.0, 2.0}, i));
    const ClusterAssignment a = choose_k(reps, Metric::L1, 2, 4, 5);
    CHECK(a.K == 2);
}

TEST_CASE("choose_k with a single candidate returns it") {
    const Blobs b = make_blobs(10, {{0, 0}, {4, 4}}, 0.1, 3);
    const ClusterAssignment a = choose_k(b.reps, Metric::L1, 2, 2, 9);
    CHECK(a.K == 2);
}

TEST_CASE("mean_client_distance on identical clients is zero") {
    std::vector<Representation> reps;
    for (int i = 0; i < 6; ++i) reps.push_back(hist({0.5, 0.5}, i));
    const ClusterAssignment a = kmeans(reps, 2, Metric::L1, 1);
    const HeterogeneityReport r = mean_client_distance(a, reps, Metric::L1);
    CHECK(r.mean_client_distance == 0.0);
    CHECK(r.global_mean == 0.0);
}

TEST_CASE("a symmetric pair reports its own distance") {
    std::vector<Representation> reps = {hist({0.9, 0.1}, 0), hist({0.5, 0.5}, 1)};
    ClusterAssignment a;
    a.K = 1;
    a.client_to_cluster = {{0, 0}, {1, 0}};
    a.centers = {{0.7, 0.3}};
    const HeterogeneityReport r = mean_client_distance(a, reps, Metric::L1);
    CHECK(r.mean_client_distance == doctest::Approx(0.8));
    CHECK(r.global_mean == doctest::Approx(0.8));
}

TEST_CASE("heterogeneity report matches the quadratic oracle") {
    rng::Stream s(11);
    std::vector<Representation> reps;
    for (int i = 0; i < 6; ++i) {
        std::vector<double> p(4);
        double sum = 0.0;
        for (double& x : p) {
            x = s.next_double() + 0.01;
            sum += x;
        }
        for (double& x : p) x /= sum;
        reps.push_back(hist(std::move(p), i));
    }
    ClusterAssignment a;
    a.K = 2;
    a.client_to_cluster = {{0, 0}, {1, 0}, {2, 0}, {3, 1}, {4, 1}, {5, 1}};
    a.centers = {{0, 0, 0, 0}, {0, 0, 0, 0}};
    const HeterogeneityReport got = mean_client_distance(a, reps, Metric::L1);

    double total = 0.0, global_total = 0.0;
    std::vector<double> per_cluster(2, 0.0);
    for (int i = 0; i < 6; ++i) {
        double same = 0.0, all = 0.0;
        int peers = 0;
        for (int j = 0; j < 6; ++j) {
            if (i == j) continue;
            const double d =
                vec_distance(rep_values(reps[i]), rep_values(reps[j]), Metric::L1);
            all += d;
            if (a.client_to_cluster[i] == a.client_to_cluster[j]) {
                same += d;
                ++peers;
            }
        }
        const double pc = peers > 0 ? same / peers : 0.0;
        total += pc;
        per_cluster[a.client_to_cluster[i]] += pc;
        global_total += all / 5.0;
    }
    CHECK(got.mean_client_distance == doctest::Approx(total / 6.0).epsilon(1e-12));
    CHECK(got.global_mean == doctest::Approx(global_total / 6.0).epsilon(1e-12));
    for (int k = 0; k < 2; ++k)
        CHECK(got.per_cluster_mean[k] == doctest::Approx(per_cluster[k] / 3.0).epsilon(1e-12));
}

TEST_CASE("clustered heterogeneity beats a random assignment on blobs") {
    int failures = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Blobs b = make_blobs(15, {{0, 0}, {2, 2}, {4, 0}}, 0.2, 100 + seed);
        const ClusterAssignment a = kmeans(b.reps, 3, Metric::L1, seed);
        ClusterAssignment rnd;
        rnd.K = 3;
        rng::Stream s(seed);
        for (int i = 0; i < 45; ++i) rnd.client_to_cluster[i] = static_cast<int>(s.next_below(3));
        rnd.centers = a.centers;
        const double good = mean_client_distance(a, b.reps, Metric::L1).mean_client_distance;
        const double bad = mean_client_distance(rnd, b.reps, Metric::L1).mean_client_distance;
        if (!(good <= bad)) ++failures;
    }
    CHECK(failures <= 1);
}

TEST_CASE("adjusted rand index basics") {
    const std::vector<int> a{0, 0, 1, 1, 2, 2};
    CHECK(adjusted_rand_index(a, a) == doctest::Approx(1.0));
    const std::vector<int> relabeled{2, 2, 0, 0, 1, 1};
    CHECK(adjusted_rand_index(a, relabeled) == doctest::Approx(1.0));
    const std::vector<int> anti{0, 1, 0, 1, 0, 1};
    CHECK(adjusted_rand_index(a, anti) < 0.2);
}
