#pragma once

#include <vector>

#include "cflsim/clustering.hpp"
#include "cflsim/models.hpp"

namespace cflsim {

// Coordinator-side view of the fleet: the clustering plus one model per cluster.
struct ClusterState {
    ClusterAssignment assignment;
    std::vector<ModelParams> models;
    long round = 0;
    double sim_time = 0.0;
};

}  // namespace cflsim
