#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cflsim/errors.hpp"
#include "cflsim/rng.hpp"

namespace cflsim::theory {

struct TheoryParams {
    double l_smooth = 1.0;
    double mu_pl = 1.0;
    double sigma_sq = 0.0;
    double theta_lip = 0.0;
    double delta_diam = 0.0;
    double delta_drift = 0.0;

    void validate() const;
};

// Quadratic population with a shared diagonal PD Hessian:
//   f_i(x) = 1/2 (x - a_i)^T H (x - a_i) + b_i.
// Sharing H keeps every cluster-average minimizer in closed form (mean of
// the member a_i), so the oracle side of each bound check is exact.
struct QuadraticWorld {
    std::vector<double> h_diag;
    std::vector<std::vector<double>> centers;  // a_i
    std::vector<double> offsets;               // b_i

    int dim() const { return static_cast<int>(h_diag.size()); }
    int size() const { return static_cast<int>(centers.size()); }
    double l_smooth() const;
    double mu_pl() const;
    void validate() const;

    double value(int client, std::span<const double> x) const;
    void grad(int client, std::span<const double> x, std::vector<double>& out) const;
    double min_value(int client) const { return offsets[client]; }
    double avg_value(std::span<const int> members, std::span<const double> x) const;
    std::vector<double> cluster_minimizer(std::span<const int> members) const;
};

struct CheckResult {
    std::string name;
    double bound = 0.0;
    double empirical = 0.0;
    long trials = 0;
    bool pass = false;
    std::vector<double> curve;        // measured per event (trajectory check)
    std::vector<double> bound_curve;  // bound per event (trajectory check)
};

// SGD with additive Gaussian noise of total variance sigma_sq against the
// PL convergence bound (1-eta*mu)^T gap_0 + L*eta/(2*mu) * sigma_sq.
CheckResult check_sgd_bound(const QuadraticWorld& world, int client,
                            std::span<const double> x0, double eta, int t_steps,
                            double sigma_sq, long trials, std::uint64_t seed);

// Constructs a same-cluster pair whose objective gap stays within
// theta*Delta on a box, then grid-maximizes the gradient difference against
// sqrt(8*L*theta*Delta).
CheckResult check_grad_diff_bound(std::span<const double> h_diag, double theta_lip,
                                  int grid_points, std::uint64_t seed);

struct ReclusterInstance {
    QuadraticWorld before;  // objectives at drift event t
    QuadraticWorld after;   // objectives at drift event t+1
    std::vector<std::vector<int>> old_clusters;
    std::vector<std::vector<int>> new_clusters;
    std::vector<std::vector<double>> old_models;  // c_k at the end of event t
};

ReclusterInstance make_recluster_instance(int clients_per_cluster, int num_clusters,
                                          int dim, std::uint64_t seed);

CheckResult check_recluster_bound(const ReclusterInstance& inst);

struct TrajectoryConfig {
    int num_groups = 3;
    int clients_per_group = 5;
    int dim = 3;
    double eta = 0.25;
    double sigma_sq = 0.05;
    double drift_l1 = 0.1;
    int t_events = 6;
    int r_rounds = 25;
    int m_total = 9;  // must be a multiple of num_groups
    long trials = 500;
    double tolerance = 0.05;
};

// Runs the analyzed algorithm verbatim (k-center clustering, pairwise
// trigger, with-replacement cluster sampling, one local iteration) on a
// drifting quadratic population and compares the per-event average cluster
// suboptimality against the accumulated convergence bound.
CheckResult check_theorem_trajectory(const TrajectoryConfig& cfg, std::uint64_t seed);

// Gradient descent vs the closed-form mean-of-centers minimizer.
CheckResult check_closed_form_minimizer(const QuadraticWorld& world,
                                        std::span<const int> members);

struct SuiteOptions {
    std::uint64_t seed = 7;
    long sgd_trials = 2000;
    long trajectory_trials = 500;
    double sgd_sigma_sq = 0.1;
    TrajectoryConfig trajectory;
};

std::vector<CheckResult> run_suite(const SuiteOptions& opts);

std::string report_json(std::span<const CheckResult> results);

}  // namespace cflsim::theory
