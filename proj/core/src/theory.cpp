#include "cflsim/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

namespace cflsim::theory {

namespace {

double l1(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
    return s;
}

double l2(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

void add_noise(std::vector<double>& g, double sigma_sq, rng::Stream& stream) {
    if (sigma_sq <= 0.0) return;
    const double scale = std::sqrt(sigma_sq / static_cast<double>(g.size()));
    for (double& v : g) v += scale * stream.next_normal();
}

}  // namespace

void TheoryParams::validate() const {
    if (!(mu_pl > 0.0) || l_smooth < mu_pl)
        throw InputError("theory params: need l_smooth >= mu_pl > 0");
    if (sigma_sq < 0.0 || theta_lip < 0.0 || delta_diam < 0.0 || delta_drift < 0.0)
        throw InputError("theory params: negative constant");
}

double QuadraticWorld::l_smooth() const {
    return *std::max_element(h_diag.begin(), h_diag.end());
}

double QuadraticWorld::mu_pl() const {
    return *std::min_element(h_diag.begin(), h_diag.end());
}

void QuadraticWorld::validate() const {
    if (h_diag.empty()) throw InputError("quadratic world: empty Hessian");
    for (double h : h_diag)
        if (!(h > 0.0)) throw InputError("quadratic world: Hessian must be positive definite");
    if (centers.size() != offsets.size())
        throw InputError("quadratic world: centers/offsets size mismatch");
    for (const auto& a : centers)
        if (a.size() != h_diag.size()) throw InputError("quadratic world: center dim mismatch");
}

double QuadraticWorld::value(int client, std::span<const double> x) const {
    const std::vector<double>& a = centers[client];
    double s = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) s += h_diag[d] * (x[d] - a[d]) * (x[d] - a[d]);
    return 0.5 * s + offsets[client];
}

void QuadraticWorld::grad(int client, std::span<const double> x,
                          std::vector<double>& out) const {
    const std::vector<double>& a = centers[client];
    out.resize(a.size());
    for (std::size_t d = 0; d < a.size(); ++d) out[d] = h_diag[d] * (x[d] - a[d]);
}

double QuadraticWorld::avg_value(std::span<const int> members,
                                 std::span<const double> x) const {
    double s = 0.0;
    for (int i : members) s += value(i, x);
    return s / static_cast<double>(members.size());
}

std::vector<double> QuadraticWorld::cluster_minimizer(std::span<const int> members) const {
    if (members.empty()) throw InputError("cluster_minimizer: empty member set");
    std::vector<double> out(h_diag.size(), 0.0);
    for (int i : members)
        for (std::size_t d = 0; d < out.size(); ++d) out[d] += centers[i][d];
    for (double& v : out) v /= static_cast<double>(members.size());
    return out;
}

CheckResult check_sgd_bound(const QuadraticWorld& world, int client,
                            std::span<const double> x0, double eta, int t_steps,
                            double sigma_sq, long trials, std::uint64_t seed) {
    world.validate();
    const double L = world.l_smooth();
    const double mu = world.mu_pl();
    if (eta > 1.0 / L + 1e-15)
        throw InputError("check_sgd_bound: requires eta <= 1/L");

    const double gap0 = world.value(client, x0) - world.min_value(client);
    const double bound =
        std::pow(1.0 - eta * mu, t_steps) * gap0 + L * eta / (2.0 * mu) * sigma_sq;

    double total = 0.0;
    std::vector<double> x;
    std::vector<double> g;
    for (long trial = 0; trial < trials; ++trial) {
        auto stream = rng::make_stream(seed, "sgd_check", static_cast<std::uint64_t>(trial));
        x.assign(x0.begin(), x0.end());
        for (int t = 0; t < t_steps; ++t) {
            world.grad(client, x, g);
            add_noise(g, sigma_sq, stream);
            for (std::size_t d = 0; d < x.size(); ++d) x[d] -= eta * g[d];
        }
        total += world.value(client, x) - world.min_value(client);
    }

    CheckResult res;
    res.name = "sgd_bound";
    res.bound = bound;
    res.empirical = total / static_cast<double>(trials);
    res.trials = trials;
    res.pass = res.empirical <= bound * 1.05 + 1e-12;
    return res;
}

CheckResult check_grad_diff_bound(std::span<const double> h_diag, double theta_lip,
                                  int grid_points, std::uint64_t seed) {
    if (theta_lip <= 0.0) throw InputError("check_grad_diff_bound: theta must be positive");
    const int dim = static_cast<int>(h_diag.size());
    QuadraticWorld world;
    world.h_diag.assign(h_diag.begin(), h_diag.end());
    world.validate();
    const double L = world.l_smooth();

    // Pick a_i - a_j = s * (1, ..., 1) so that ||H d||_2 lands at half the
    // bound sqrt(8 L theta Delta) with Delta = ||d||_1 = s * dim.
    double h_sq = 0.0;
    double h_sum = 0.0;
    for (double h : h_diag) {
        h_sq += h * h;
        h_sum += h;
    }
    const double s = 2.0 * L * theta_lip * dim / h_sq;
    const double delta_diam = s * dim;
    const double box = theta_lip * dim / h_sum;  // premise radius in sup norm

    std::vector<double> d(dim, s);
    world.centers.push_back(std::vector<double>(dim));
    world.centers.push_back(std::vector<double>(dim));
    for (int l = 0; l < dim; ++l) {
        world.centers[0][l] = 0.5 * d[l];
        world.centers[1][l] = -0.5 * d[l];
    }
    world.offsets = {0.0, 0.0};

    const double premise = theta_lip * l1(world.centers[0], world.centers[1]);
    const double bound = std::sqrt(8.0 * L * theta_lip * delta_diam);

    auto stream = rng::make_stream(seed, "grad_diff_grid");
    std::vector<double> x(dim);
    std::vector<double> gi;
    std::vector<double> gj;
    double max_grad_diff = 0.0;
    for (int p = 0; p < grid_points; ++p) {
        for (int l = 0; l < dim; ++l) x[l] = box * (2.0 * stream.next_double() - 1.0);
        const double gap = std::fabs(world.value(0, x) - world.value(1, x));
        if (gap > premise * (1.0 + 1e-9) + 1e-12)
            throw InputError("check_grad_diff_bound: construction violates the premise");
        world.grad(0, x, gi);
        world.grad(1, x, gj);
        max_grad_diff = std::max(max_grad_diff, l2(gi, gj));
    }

    CheckResult res;
    res.name = "grad_diff_bound";
    res.bound = bound;
    res.empirical = max_grad_diff;
    res.trials = grid_points;
    res.pass = res.empirical <= bound + 1e-12;
    return res;
}

namespace {

double max_abs_gap_over_box(const QuadraticWorld& world, int i, int j,
                            std::span<const double> lo, std::span<const double> hi) {
    // f_i - f_j is affine for a shared Hessian, so the maximum over a box is
    // attained at a corner; scan all corners.
    const int dim = world.dim();
    double best = 0.0;
    std::vector<double> x(dim);
    for (int mask = 0; mask < (1 << dim); ++mask) {
        for (int l = 0; l < dim; ++l) x[l] = (mask >> l) & 1 ? hi[l] : lo[l];
        best = std::max(best, std::fabs(world.value(i, x) - world.value(j, x)));
    }
    return best;
}

// Smallest theta such that |f_i - f_j| <= theta * ||a_i - a_j||_1 on the box,
// for all pairs in both worlds.
double required_theta(const std::vector<const QuadraticWorld*>& worlds,
                      std::span<const double> lo, std::span<const double> hi) {
    double theta = 0.0;
    for (const QuadraticWorld* w : worlds) {
        for (int i = 0; i < w->size(); ++i) {
            for (int j = i + 1; j < w->size(); ++j) {
                const double rho = l1(w->centers[i], w->centers[j]);
                const double gap = max_abs_gap_over_box(*w, i, j, lo, hi);
                if (rho < 1e-15) {
                    if (gap > 1e-12)
                        throw InputError("theory: identical representations, distinct objectives");
                    continue;
                }
                theta = std::max(theta, gap / rho);
            }
        }
    }
    return theta;
}

void expand_box(std::vector<double>& lo, std::vector<double>& hi,
                std::span<const double> x) {
    for (std::size_t l = 0; l < lo.size(); ++l) {
        lo[l] = std::min(lo[l], x[l]);
        hi[l] = std::max(hi[l], x[l]);
    }
}

double max_intra_diameter(const QuadraticWorld& world,
                          const std::vector<std::vector<int>>& clusters) {
    double diam = 0.0;
    for (const auto& members : clusters)
        for (std::size_t a = 0; a < members.size(); ++a)
            for (std::size_t b = a + 1; b < members.size(); ++b)
                diam = std::max(diam, l1(world.centers[members[a]], world.centers[members[b]]));
    return diam;
}

}  // namespace

ReclusterInstance make_recluster_instance(int clients_per_cluster, int num_clusters,
                                          int dim, std::uint64_t seed) {
    if (clients_per_cluster < 2 || num_clusters < 2 || dim < 1)
        throw InputError("make_recluster_instance: degenerate shape");

    ReclusterInstance inst;
    inst.before.h_diag.assign(dim, 1.0);
    for (int l = 0; l < dim; ++l) inst.before.h_diag[l] = 0.5 + 0.5 * l;

    auto stream = rng::make_stream(seed, "recluster_instance");
    std::vector<std::vector<double>> group_center(num_clusters, std::vector<double>(dim, 0.0));
    for (int k = 0; k < num_clusters; ++k) group_center[k][k % dim] = 4.0 * (1 + k / dim);

    inst.old_clusters.resize(num_clusters);
    for (int k = 0; k < num_clusters; ++k) {
        for (int c = 0; c < clients_per_cluster; ++c) {
            std::vector<double> a(dim);
            for (int l = 0; l < dim; ++l)
                a[l] = group_center[k][l] + 0.1 * (2.0 * stream.next_double() - 1.0);
            inst.old_clusters[k].push_back(inst.before.size());
            inst.before.centers.push_back(std::move(a));
            inst.before.offsets.push_back(0.0);
        }
    }
    // One straddler between groups 0 and 1, initially nearer group 0; the
    // scripted drift nudges it across the midpoint so membership changes.
    std::vector<double> straddler(dim);
    for (int l = 0; l < dim; ++l)
        straddler[l] = 0.5 * (group_center[0][l] + group_center[1][l]);
    straddler[1 % dim] -= 0.10;
    const int straddler_id = inst.before.size();
    inst.old_clusters[0].push_back(straddler_id);
    inst.before.centers.push_back(straddler);
    inst.before.offsets.push_back(0.0);

    inst.after = inst.before;
    for (int k = 0; k < num_clusters; ++k) {
        std::vector<double> shift(dim, 0.0);
        shift[k % dim] = (k % 2 == 0 ? 1.0 : -1.0) * 0.04;
        for (int i : inst.old_clusters[k])
            if (i != straddler_id)
                for (int l = 0; l < dim; ++l) inst.after.centers[i][l] += shift[l];
    }
    inst.after.centers[straddler_id][1 % dim] += 0.25;

    // New clustering: nearest post-drift group mean (of the non-straddler
    // members), which flips only the straddler.
    std::vector<std::vector<double>> new_center(num_clusters);
    for (int k = 0; k < num_clusters; ++k) {
        std::vector<int> regulars;
        for (int i : inst.old_clusters[k])
            if (i != straddler_id) regulars.push_back(i);
        new_center[k] = inst.after.cluster_minimizer(regulars);
    }
    inst.new_clusters.resize(num_clusters);
    for (int i = 0; i < inst.after.size(); ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int k = 0; k < num_clusters; ++k) {
            const double d = l1(inst.after.centers[i], new_center[k]);
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        inst.new_clusters[best].push_back(i);
    }

    // Old cluster models: optimal models plus a fixed offset, so the previous
    // suboptimality is strictly positive.
    for (int k = 0; k < num_clusters; ++k) {
        std::vector<double> model = inst.before.cluster_minimizer(inst.old_clusters[k]);
        for (int l = 0; l < dim; ++l) model[l] += 0.3;
        inst.old_models.push_back(std::move(model));
    }
    return inst;
}

CheckResult check_recluster_bound(const ReclusterInstance& inst) {
    inst.before.validate();
    inst.after.validate();
    const int n = inst.before.size();
    const int dim = inst.before.dim();

    std::vector<int> old_cluster_of(n, -1);
    for (std::size_t k = 0; k < inst.old_clusters.size(); ++k)
        for (int i : inst.old_clusters[k]) old_cluster_of[i] = static_cast<int>(k);
    for (int i = 0; i < n; ++i)
        if (old_cluster_of[i] < 0)
            throw InputError("check_recluster_bound: client missing from old clustering");

    // New cluster models average the members' previous models; new optimal
    // models are closed-form means of the post-drift a_i.
    std::vector<std::vector<double>> new_models;
    std::vector<std::vector<double>> new_opt;
    for (const auto& members : inst.new_clusters) {
        std::vector<double> m(dim, 0.0);
        for (int i : members)
            for (int l = 0; l < dim; ++l) m[l] += inst.old_models[old_cluster_of[i]][l];
        for (double& v : m) v /= static_cast<double>(members.size());
        new_models.push_back(std::move(m));
        new_opt.push_back(inst.after.cluster_minimizer(members));
    }
    std::vector<std::vector<double>> old_opt;
    for (const auto& members : inst.old_clusters)
        old_opt.push_back(inst.before.cluster_minimizer(members));

    // Assumption-3 constant over the box spanned by every point the lemma
    // evaluates, with a small enlargement for the grid verification.
    std::vector<double> lo(dim, std::numeric_limits<double>::infinity());
    std::vector<double> hi(dim, -std::numeric_limits<double>::infinity());
    for (const auto& x : inst.before.centers) expand_box(lo, hi, x);
    for (const auto& x : inst.after.centers) expand_box(lo, hi, x);
    for (const auto& x : inst.old_models) expand_box(lo, hi, x);
    for (const auto& x : new_models) expand_box(lo, hi, x);
    for (const auto& x : old_opt) expand_box(lo, hi, x);
    for (const auto& x : new_opt) expand_box(lo, hi, x);
    for (int l = 0; l < dim; ++l) {
        lo[l] -= 0.5;
        hi[l] += 0.5;
    }
    const double theta = required_theta({&inst.before, &inst.after}, lo, hi);

    const double delta_diam = std::max(max_intra_diameter(inst.before, inst.old_clusters),
                                       max_intra_diameter(inst.after, inst.new_clusters));
    double delta_drift = 0.0;
    for (int i = 0; i < n; ++i)
        delta_drift = std::max(delta_drift, l1(inst.before.centers[i], inst.after.centers[i]));

    double left = 0.0;
    for (std::size_t k = 0; k < inst.new_clusters.size(); ++k)
        for (int i : inst.new_clusters[k])
            left += inst.after.value(i, new_models[k]) - inst.after.value(i, new_opt[k]);
    left /= static_cast<double>(n);

    double prev = 0.0;
    for (std::size_t k = 0; k < inst.old_clusters.size(); ++k)
        for (int i : inst.old_clusters[k])
            prev += inst.before.value(i, inst.old_models[k]) - inst.before.value(i, old_opt[k]);
    prev /= static_cast<double>(n);

    CheckResult res;
    res.name = "recluster_bound";
    res.bound = prev + 3.0 * theta * (delta_diam + delta_drift);
    res.empirical = left;
    res.trials = 1;
    res.pass = left <= res.bound + 1e-9;
    return res;
}

namespace {

std::vector<int> kcenter_assign(const std::vector<std::vector<double>>& reps, int k) {
    const int n = static_cast<int>(reps.size());
    std::vector<int> pivots;
    pivots.push_back(0);
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    while (static_cast<int>(pivots.size()) < k) {
        int far = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
            dist[i] = std::min(dist[i], l1(reps[i], reps[pivots.back()]));
            if (dist[i] > far_d) {
                far_d = dist[i];
                far = i;
            }
        }
        pivots.push_back(far);
    }
    std::vector<int> assign(n, 0);
    for (int i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < pivots.size(); ++p) {
            const double d = l1(reps[i], reps[pivots[p]]);
            if (d < best) {
                best = d;
                assign[i] = static_cast<int>(p);
            }
        }
    }
    return assign;
}

}  // namespace

CheckResult check_theorem_trajectory(const TrajectoryConfig& cfg, std::uint64_t seed) {
    if (cfg.m_total % cfg.num_groups != 0)
        throw InputError("check_theorem_trajectory: m_total must be a multiple of num_groups");
    const int n = cfg.num_groups * cfg.clients_per_group;
    const int per_cluster = cfg.m_total / cfg.num_groups;

    QuadraticWorld world;
    world.h_diag.resize(cfg.dim);
    for (int l = 0; l < cfg.dim; ++l) world.h_diag[l] = 0.6 + 1.9 * l / std::max(1, cfg.dim - 1);
    const double L = world.l_smooth();
    const double mu = world.mu_pl();
    if (cfg.eta > 1.0 / L + 1e-15)
        throw InputError("check_theorem_trajectory: requires eta <= 1/L");

    // Deterministic client layout and drift schedule, shared across trials.
    auto layout = rng::make_stream(seed, "trajectory_layout");
    std::vector<int> group_of(n);
    std::vector<std::vector<double>> base(n, std::vector<double>(cfg.dim));
    for (int i = 0; i < n; ++i) {
        group_of[i] = i / cfg.clients_per_group;
        for (int l = 0; l < cfg.dim; ++l) {
            const double center = group_of[i] == l % cfg.num_groups ? 4.0 : 0.0;
            base[i][l] = center + 0.05 * (2.0 * layout.next_double() - 1.0);
        }
    }
    // pos[t][i]: representation (= minimizer) of client i at event t. Event 0
    // introduces no drift; later events move each group coherently plus a
    // small per-client jitter, all within an L1 budget of drift_l1.
    std::vector<std::vector<std::vector<double>>> pos(cfg.t_events, base);
    for (int t = 1; t < cfg.t_events; ++t) {
        pos[t] = pos[t - 1];
        for (int g = 0; g < cfg.num_groups; ++g) {
            std::vector<double> dir(cfg.dim);
            double norm = 0.0;
            for (int l = 0; l < cfg.dim; ++l) {
                dir[l] = 2.0 * layout.next_double() - 1.0;
                norm += std::fabs(dir[l]);
            }
            for (int l = 0; l < cfg.dim; ++l) dir[l] *= 0.9 * cfg.drift_l1 / norm;
            for (int i = 0; i < n; ++i) {
                if (group_of[i] != g) continue;
                const int jl = static_cast<int>(layout.next_below(cfg.dim));
                for (int l = 0; l < cfg.dim; ++l) pos[t][i][l] += dir[l];
                pos[t][i][jl] += 0.1 * cfg.drift_l1 * (2.0 * layout.next_double() - 1.0);
            }
        }
    }

    // Assumption constants measured from the schedule.
    double delta_diam = 0.0;
    double delta_drift = 0.0;
    std::vector<double> lo(cfg.dim, std::numeric_limits<double>::infinity());
    std::vector<double> hi(cfg.dim, -std::numeric_limits<double>::infinity());
    for (int t = 0; t < cfg.t_events; ++t) {
        for (int i = 0; i < n; ++i) {
            expand_box(lo, hi, pos[t][i]);
            if (t > 0) delta_drift = std::max(delta_drift, l1(pos[t][i], pos[t - 1][i]));
            for (int j = i + 1; j < n; ++j)
                if (group_of[i] == group_of[j])
                    delta_diam = std::max(delta_diam, l1(pos[t][i], pos[t][j]));
        }
    }
    std::vector<double> x0(cfg.dim, 0.0);
    expand_box(lo, hi, x0);
    for (int l = 0; l < cfg.dim; ++l) {
        lo[l] -= 2.0;
        hi[l] += 2.0;
    }

    double theta = 0.0;
    {
        QuadraticWorld snapshot = world;
        snapshot.offsets.assign(n, 0.0);
        for (int t = 0; t < cfg.t_events; ++t) {
            snapshot.centers = pos[t];
            theta = std::max(theta, required_theta({&snapshot}, lo, hi));
        }
    }
    const double grad_bound = std::sqrt(8.0 * L * theta * delta_diam);
    for (int t = 0; t < cfg.t_events; ++t)
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                if (group_of[i] != group_of[j]) continue;
                double g2 = 0.0;
                for (int l = 0; l < cfg.dim; ++l) {
                    const double gd = world.h_diag[l] * (pos[t][i][l] - pos[t][j][l]);
                    g2 += gd * gd;
                }
                if (std::sqrt(g2) > grad_bound + 1e-12)
                    throw InputError("check_theorem_trajectory: construction violates "
                                     "the gradient-difference premise");
            }

    // Accumulated bound, per the proof: each event contracts the carried gap
    // by (1-eta*mu)^R after adding the reclustering penalty, then adds the
    // accumulated sampling-variance term.
    world.centers = pos[0];
    world.offsets.assign(n, 0.0);
    std::vector<int> everyone(n);
    std::iota(everyone.begin(), everyone.end(), 0);
    const std::vector<double> global_opt = world.cluster_minimizer(everyone);
    const double gap0 = world.avg_value(everyone, x0) - world.avg_value(everyone, global_opt);

    const double contract = std::pow(1.0 - cfg.eta * mu, cfg.r_rounds);
    const double var_total = (cfg.sigma_sq + 8.0 * L * theta * delta_diam) / per_cluster;
    double noise_acc = 0.0;
    for (int i = 0; i < cfg.r_rounds; ++i)
        noise_acc += std::pow(1.0 - cfg.eta * mu, i) * (L * cfg.eta * cfg.eta / 2.0) * var_total;

    std::vector<double> bound_curve(cfg.t_events);
    double b = gap0;
    for (int t = 0; t < cfg.t_events; ++t) {
        b = contract * (b + 3.0 * theta * (delta_diam + delta_drift)) + noise_acc;
        bound_curve[t] = b;
    }

    // Pairwise trigger slightly below the schedule's worst intra-group
    // diameter, so the reclustering branch actually fires on some events.
    const double trigger = 0.9 * delta_diam;

    std::vector<double> measured(cfg.t_events, 0.0);
    std::vector<double> g;
    for (long trial = 0; trial < cfg.trials; ++trial) {
        auto stream = rng::make_stream(seed, "trajectory", static_cast<std::uint64_t>(trial));
        std::vector<int> assign = kcenter_assign(pos[0], cfg.num_groups);
        std::vector<std::vector<double>> models(cfg.num_groups, x0);

        for (int t = 0; t < cfg.t_events; ++t) {
            const auto& reps = pos[t];
            // Per-client models from the cluster each client sat in, then
            // reassignment against centers frozen at their pre-event values.
            std::vector<std::vector<double>> client_model(n);
            for (int i = 0; i < n; ++i) client_model[i] = models[assign[i]];
            std::vector<std::vector<double>> centers(cfg.num_groups,
                                                     std::vector<double>(cfg.dim, 0.0));
            std::vector<int> counts(cfg.num_groups, 0);
            for (int i = 0; i < n; ++i) {
                ++counts[assign[i]];
                for (int l = 0; l < cfg.dim; ++l) centers[assign[i]][l] += reps[i][l];
            }
            for (int k = 0; k < cfg.num_groups; ++k)
                if (counts[k] > 0)
                    for (int l = 0; l < cfg.dim; ++l)
                        centers[k][l] /= static_cast<double>(counts[k]);
            for (int i = 0; i < n; ++i) {
                double best = std::numeric_limits<double>::infinity();
                int best_k = assign[i];
                for (int k = 0; k < cfg.num_groups; ++k) {
                    if (counts[k] == 0) continue;
                    const double d = l1(reps[i], centers[k]);
                    if (d < best) {
                        best = d;
                        best_k = k;
                    }
                }
                assign[i] = best_k;
            }

            bool over_threshold = false;
            for (int i = 0; i < n && !over_threshold; ++i)
                for (int j = i + 1; j < n; ++j)
                    if (assign[i] == assign[j] && l1(reps[i], reps[j]) > trigger) {
                        over_threshold = true;
                        break;
                    }
            if (over_threshold) assign = kcenter_assign(reps, cfg.num_groups);

            std::vector<std::vector<int>> members(cfg.num_groups);
            for (int i = 0; i < n; ++i) members[assign[i]].push_back(i);
            for (int k = 0; k < cfg.num_groups; ++k) {
                if (members[k].empty()) continue;
                std::fill(models[k].begin(), models[k].end(), 0.0);
                for (int i : members[k])
                    for (int l = 0; l < cfg.dim; ++l) models[k][l] += client_model[i][l];
                for (int l = 0; l < cfg.dim; ++l)
                    models[k][l] /= static_cast<double>(members[k].size());
            }

            QuadraticWorld now = world;
            now.centers = reps;
            for (int r = 0; r < cfg.r_rounds; ++r) {
                for (int k = 0; k < cfg.num_groups; ++k) {
                    if (members[k].empty()) continue;
                    std::vector<double> avg_g(cfg.dim, 0.0);
                    for (int s = 0; s < per_cluster; ++s) {
                        const int i = members[k][stream.next_below(members[k].size())];
                        now.grad(i, models[k], g);
                        add_noise(g, cfg.sigma_sq, stream);
                        for (int l = 0; l < cfg.dim; ++l) avg_g[l] += g[l];
                    }
                    for (int l = 0; l < cfg.dim; ++l)
                        models[k][l] -= cfg.eta * avg_g[l] / per_cluster;
                }
            }

            double left = 0.0;
            for (int k = 0; k < cfg.num_groups; ++k) {
                if (members[k].empty()) continue;
                const std::vector<double> opt = now.cluster_minimizer(members[k]);
                for (int i : members[k])
                    left += now.value(i, models[k]) - now.value(i, opt);
            }
            measured[t] += left / static_cast<double>(n);
        }
    }
    for (double& m : measured) m /= static_cast<double>(cfg.trials);

    CheckResult res;
    res.name = "theorem_trajectory";
    res.trials = cfg.trials;
    res.curve = measured;
    res.bound_curve = bound_curve;
    res.bound = bound_curve.back();
    res.empirical = measured.back();
    res.pass = true;
    for (int t = 0; t < cfg.t_events; ++t)
        if (measured[t] > bound_curve[t] * (1.0 + cfg.tolerance) + 1e-12) res.pass = false;
    return res;
}

CheckResult check_closed_form_minimizer(const QuadraticWorld& world,
                                        std::span<const int> members) {
    world.validate();
    const std::vector<double> closed = world.cluster_minimizer(members);
    std::vector<double> x(world.dim(), 0.0);
    std::vector<double> g;
    std::vector<double> avg(world.dim());
    const double step = 1.0 / world.l_smooth();
    for (int iter = 0; iter < 10000; ++iter) {
        std::fill(avg.begin(), avg.end(), 0.0);
        for (int i : members) {
            world.grad(i, x, g);
            for (int l = 0; l < world.dim(); ++l) avg[l] += g[l];
        }
        double norm = 0.0;
        for (int l = 0; l < world.dim(); ++l) {
            avg[l] /= static_cast<double>(members.size());
            norm += avg[l] * avg[l];
        }
        if (std::sqrt(norm) < 1e-13) break;
        for (int l = 0; l < world.dim(); ++l) x[l] -= step * avg[l];
    }
    double dev = 0.0;
    for (int l = 0; l < world.dim(); ++l) dev = std::max(dev, std::fabs(x[l] - closed[l]));

    CheckResult res;
    res.name = "closed_form_minimizer";
    res.bound = 1e-8;
    res.empirical = dev;
    res.trials = 1;
    res.pass = dev <= 1e-8;
    return res;
}

std::vector<CheckResult> run_suite(const SuiteOptions& opts) {
    std::vector<CheckResult> results;

    QuadraticWorld sgd_world;
    sgd_world.h_diag = {1.0, 4.0};
    sgd_world.centers = {{0.3, -0.2}};
    sgd_world.offsets = {0.7};
    const std::vector<double> x0 = {1.3, 0.8};
    results.push_back(check_sgd_bound(sgd_world, 0, x0, 0.25, 200, opts.sgd_sigma_sq,
                                      opts.sgd_trials, opts.seed));

    const std::vector<double> h = {0.5, 1.0, 2.0};
    results.push_back(check_grad_diff_bound(h, 0.8, 1000, opts.seed));

    results.push_back(check_recluster_bound(make_recluster_instance(10, 3, 3, 4)));

    TrajectoryConfig traj = opts.trajectory;
    traj.trials = opts.trajectory_trials;
    results.push_back(check_theorem_trajectory(traj, opts.seed));

    QuadraticWorld mini_world;
    mini_world.h_diag = {0.7, 1.3, 2.2, 3.1};
    auto stream = rng::make_stream(opts.seed, "minimizer_world");
    for (int i = 0; i < 6; ++i) {
        std::vector<double> a(4);
        for (double& v : a) v = 2.0 * stream.next_double() - 1.0;
        mini_world.centers.push_back(std::move(a));
        mini_world.offsets.push_back(0.1 * i);
    }
    const std::vector<int> members = {0, 1, 2, 3, 4, 5};
    results.push_back(check_closed_form_minimizer(mini_world, members));

    return results;
}

std::string report_json(std::span<const CheckResult> results) {
    nlohmann::json out;
    out["checks"] = nlohmann::json::array();
    bool all_pass = true;
    for (const CheckResult& r : results) {
        nlohmann::json c;
        c["name"] = r.name;
        c["bound"] = r.bound;
        c["empirical"] = r.empirical;
        c["trials"] = r.trials;
        c["pass"] = r.pass;
        if (!r.curve.empty()) {
            c["curve"] = r.curve;
            c["bound_curve"] = r.bound_curve;
        }
        out["checks"].push_back(c);
        all_pass = all_pass && r.pass;
    }
    out["all_pass"] = all_pass;
    return out.dump(2) + "\n";
}

}  // namespace cflsim::theory
