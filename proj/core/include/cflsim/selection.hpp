#pragma once

#include <span>
#include <string>
#include <vector>

#include "cflsim/representation.hpp"

namespace cflsim {

enum class SelectorKind { Random, Utility, Distance };

SelectorKind selector_from_string(const std::string& s);
std::string to_string(SelectorKind k);

struct ClientProfile {
    int client_id = -1;
    long data_size = 0;
    double last_loss = 0.0;
    double device_speed = 100.0;  // samples/sec
    double bw_up = 1.0e6;         // bytes/sec
    double bw_down = 1.0e6;
    long last_selected_round = -1;
};

struct SelectorSpec {
    SelectorKind kind = SelectorKind::Random;
    double explore_fraction = 0.1;
    double penalty_alpha = 2.0;
    double deadline_s = 0.0;  // <= 0: 80th percentile of member expected times
};

std::vector<int> select_random(std::span<const int> members, int n, rng::Stream& stream);

// Oort-style skeleton: statistical utility sqrt(data_size) * last_loss with a
// multiplicative (deadline/t)^alpha penalty past the deadline, plus an
// exploration slice drawn from never- and least-recently-selected members.
std::vector<int> select_utility(std::span<const ClientProfile> profiles,
                                std::span<const double> expected_times, int n,
                                long round, double explore_fraction, double deadline_s,
                                double penalty_alpha, rng::Stream& stream);

// reps aligned with members by index; distances measured to `center`.
std::vector<int> select_distance(std::span<const int> members,
                                 std::span<const Representation> reps,
                                 const std::vector<double>& center, Metric metric, int n);

}  // namespace cflsim
