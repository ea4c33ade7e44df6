#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "cflsim/rng.hpp"
#include "doctest.h"

using namespace cflsim;

TEST_CASE("derive_seed is deterministic and label-sensitive") {
    const std::uint64_t a = rng::derive_seed(42, "select", 1, 2, 3);
    const std::uint64_t b = rng::derive_seed(42, "select", 1, 2, 3);
    CHECK(a == b);
    CHECK(rng::derive_seed(42, "select", 1, 2, 3) != rng::derive_seed(42, "local", 1, 2, 3));
    CHECK(rng::derive_seed(42, "select", 1, 2, 3) != rng::derive_seed(43, "select", 1, 2, 3));
    CHECK(rng::derive_seed(42, "select", 1, 2, 3) != rng::derive_seed(42, "select", 1, 2, 4));
}

TEST_CASE("streams with equal seeds replay identically") {
    rng::Stream s1(1234), s2(1234);
    for (int i = 0; i < 1000; ++i) CHECK(s1.next_u64() == s2.next_u64());
}

TEST_CASE("next_double lies in [0,1)") {
    rng::Stream s(7);
    for (int i = 0; i < 10000; ++i) {
        const double v = s.next_double();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("next_below stays under the bound and covers the range") {
    rng::Stream s(99);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 5000; ++i) {
        const std::uint64_t v = s.next_below(7);
        CHECK(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7);
    CHECK(s.next_below(1) == 0);
    CHECK(s.next_below(0) == 0);
}

TEST_CASE("shuffle permutes without losing elements") {
    rng::Stream s(5);
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[i] = i;
    std::vector<int> orig = v;
    s.shuffle(v);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == orig);
}

TEST_CASE("sample_without_replacement yields k distinct indices below n") {
    rng::Stream s(11);
    const auto picks = s.sample_without_replacement(20, 8);
    CHECK(picks.size() == 8);
    std::set<std::size_t> uniq(picks.begin(), picks.end());
    CHECK(uniq.size() == 8);
    for (std::size_t p : picks) CHECK(p < 20);
    CHECK(s.sample_without_replacement(3, 10).size() == 3);
}

TEST_CASE("next_normal has near-standard moments") {
    rng::Stream s(2024);
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = s.next_normal();
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("fnv1a separates nearby strings") {
    CHECK(rng::fnv1a("a") != rng::fnv1a("b"));
    CHECK(rng::fnv1a("drift_event") != rng::fnv1a("drift_even"));
    CHECK(rng::fnv1a("") == rng::kFnvOffset);
}
