// Acceptance gate: one self-contained scenario per criterion, each printing a
// single PASS/FAIL line. Run with --criterion N for one criterion or --all.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cflsim/clustering.hpp"
#include "cflsim/engine.hpp"
#include "cflsim/errors.hpp"
#include "cflsim/models.hpp"
#include "cflsim/representation.hpp"
#include "cflsim/rng.hpp"
#include "cflsim/theory.hpp"

using namespace cflsim;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeeds[5] = {1, 2, 3, 4, 5};

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Row {
    long round = 0;
    long event = 0;
    double sim_time = 0.0;
    double acc = 0.0;
    double mcd = 0.0;
    double gmd = 0.0;
    int k = 0;
    int triggered = 0;
    long moved = 0;
    long dropped = 0;
};

std::vector<Row> load_rounds(const std::string& run_dir) {
    std::ifstream in(fs::path(run_dir) / "rounds.csv");
    if (!in) throw std::runtime_error("missing rounds.csv in " + run_dir);
    std::vector<Row> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("round,", 0) == 0) continue;
        std::vector<std::string> f;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                f.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        f.push_back(cur);
        if (f.size() != 11) continue;
        Row r;
        r.round = std::stol(f[0]);
        r.event = std::stol(f[1]);
        r.sim_time = std::stod(f[2]);
        r.acc = std::stod(f[3]);
        r.mcd = std::stod(f[4]);
        r.gmd = std::stod(f[5]);
        r.k = std::stoi(f[6]);
        r.triggered = std::stoi(f[7]);
        r.moved = std::stol(f[8]);
        r.dropped = std::stol(f[9]);
        rows.push_back(r);
    }
    return rows;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("missing file: " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Shared clusterable population: four residue-class concepts over twelve
// labels whose blob-to-label mappings conflict, so one global model cannot
// serve every cluster.
ExperimentConfig cluster_base(const std::string& name) {
    ExperimentConfig cfg;
    cfg.run.name = name;
    cfg.run.seeds = {1};
    cfg.run.final_accuracy_window = 10;
    cfg.run.eval_targets = {0.5};
    cfg.task.num_labels = 12;
    cfg.task.input_dim = 16;
    cfg.task.k_true = 4;
    cfg.task.blob_sigma = 0.35;
    cfg.population.num_clients = 200;
    cfg.population.samples_per_client = 300;
    cfg.population.dirichlet_alpha = 0.5;
    cfg.trace.kind = "interval";
    cfg.trace.num_intervals = 10;
    cfg.trace.rounds_between = 10;
    cfg.trace.retention_rounds = 40;
    cfg.trace.warmup_rounds_of_data = 20;
    cfg.policy.mode = DriftMode::Hybrid;
    cfg.policy.initial_clusters = 0;
    cfg.training.eta = 0.3;
    cfg.training.local_steps = 10;
    cfg.training.batch_size = 20;
    cfg.training.participants_per_round = 20;
    cfg.training.rounds_per_event = 10;
    cfg.training.total_events = 10;
    return cfg;
}

ExperimentConfig static_global_arm(ExperimentConfig cfg) {
    cfg.run.name += "-static";
    cfg.policy.mode = DriftMode::Static;
    cfg.policy.initial_clusters = 1;
    return cfg;
}

// Mass drift: the whole dataset swaps to the shifted concepts at round 60 in
// one clean exchange (old bucket retires exactly when the new one arrives).
ExperimentConfig mass_drift_base(const std::string& name) {
    ExperimentConfig cfg = cluster_base(name);
    // 16 labels with four concepts: each shifted block of four consecutive
    // labels touches every pre-drift residue class, so moving individuals
    // between stale clusters mixes the post-drift population uniformly.
    cfg.task.num_labels = 16;
    cfg.population.dirichlet_alpha = 2.0;
    cfg.trace.num_intervals = 2;
    cfg.trace.rounds_between = 60;
    cfg.trace.retention_rounds = 60;
    cfg.trace.warmup_rounds_of_data = 0;
    cfg.trace.shift_at_round = 1;
    cfg.trace.shift_fraction = 1.0;
    // Both buckets are gone after round 120, so stop there.
    cfg.training.total_events = 12;
    return cfg;
}

constexpr long kMassDriftRound = 60;

double window_mean_acc(const std::vector<Row>& rows, long from) {
    double total = 0.0;
    long n = 0;
    for (const Row& r : rows) {
        if (r.round < from) continue;
        total += r.acc;
        ++n;
    }
    return n ? total / static_cast<double>(n) : 0.0;
}

// --------------------------------------------------------------------------
// 1. Clustered adaptation beats a single static global model by at least five
//    accuracy points on the clusterable drifting task.

bool criterion1(std::string& detail) {
    int wins = 0;
    double worst_seed_s = 0.0;
    std::ostringstream gaps;
    for (std::uint64_t seed : kSeeds) {
        const auto t0 = std::chrono::steady_clock::now();
        const RunResult h = run_single(cluster_base("c1"), seed);
        const RunResult s = run_single(static_global_arm(cluster_base("c1")), seed);
        worst_seed_s = std::max(worst_seed_s, seconds_since(t0));
        const double gap = h.final_accuracy - s.final_accuracy;
        if (gap >= 0.05) ++wins;
        gaps << (gaps.tellp() > 0 ? " " : "") << std::round(gap * 1000.0) / 10.0;
    }
    std::ostringstream d;
    d << "hybrid-vs-static gaps (pp): " << gaps.str() << "; wins " << wins
      << "/5 (need >=4); slowest seed " << std::round(worst_seed_s * 10.0) / 10.0
      << "s (limit 300s)";
    detail = d.str();
    return wins >= 4 && worst_seed_s < 300.0;
}

// --------------------------------------------------------------------------
// 2. After the mass drift, MoveIndividualsOnly heterogeneity climbs to the
//    unclustered level while Hybrid stays well below it.

bool criterion2(std::string& detail) {
    int pass_seeds = 0;
    std::ostringstream per_seed;
    for (std::uint64_t seed : kSeeds) {
        ExperimentConfig mio = mass_drift_base("c2-mio");
        mio.policy.mode = DriftMode::MoveIndividualsOnly;
        const std::vector<Row> m = load_rounds(run_single(mio, seed).run_dir);
        const std::vector<Row> h =
            load_rounds(run_single(mass_drift_base("c2-hybrid"), seed).run_dir);
        const std::vector<Row> b =
            load_rounds(run_single(static_global_arm(mass_drift_base("c2")), seed).run_dir);

        double mio_peak = 0.0;
        double hyb_peak = 0.0;
        for (std::size_t i = 0; i < b.size(); ++i) {
            const long r = b[i].round;
            if (r < kMassDriftRound || r >= kMassDriftRound + 200) continue;
            if (b[i].mcd <= 0.0) continue;
            mio_peak = std::max(mio_peak, m[i].mcd / b[i].mcd);
            hyb_peak = std::max(hyb_peak, h[i].mcd / b[i].mcd);
        }
        const bool ok = mio_peak >= 0.95 && hyb_peak <= 0.80;
        if (ok) ++pass_seeds;
        per_seed << (per_seed.tellp() > 0 ? " " : "") << "[mio "
                 << std::round(mio_peak * 100.0) / 100.0 << " hyb "
                 << std::round(hyb_peak * 100.0) / 100.0 << "]";
    }
    detail = "post-drift distance ratios vs unclustered " + per_seed.str() + "; seeds " +
             std::to_string(pass_seeds) + "/5 (need >=4, mio >=0.95, hybrid <=0.80)";
    return pass_seeds >= 4;
}

// --------------------------------------------------------------------------
// 3. Re-clustering every drifted client beats re-clustering only the selected
//    ones on mean post-drift accuracy, averaged over seeds.

bool criterion3(std::string& detail) {
    double total_gap = 0.0;
    std::ostringstream gaps;
    for (std::uint64_t seed : kSeeds) {
        const std::vector<Row> h =
            load_rounds(run_single(mass_drift_base("c3-hybrid"), seed).run_dir);
        ExperimentConfig rso = mass_drift_base("c3-rso");
        rso.policy.mode = DriftMode::RecusterSelectedOnly;
        const std::vector<Row> r = load_rounds(run_single(rso, seed).run_dir);
        const double gap =
            window_mean_acc(h, kMassDriftRound) - window_mean_acc(r, kMassDriftRound);
        total_gap += gap;
        gaps << (gaps.tellp() > 0 ? " " : "") << std::round(gap * 1000.0) / 10.0;
    }
    const double mean_gap = total_gap / 5.0;
    detail = "post-drift accuracy gaps hybrid-vs-selected-only (pp): " + gaps.str() +
             "; mean " + std::to_string(std::round(mean_gap * 1000.0) / 10.0) +
             " (need > 0)";
    return mean_gap > 0.0;
}

// --------------------------------------------------------------------------
// 4. tau_fraction grid: 2/3 is never the strict best, and tau=0 shows at
//    least one >=3-point dip right after a global re-cluster.

bool criterion4(std::string& detail) {
    ExperimentConfig cfg = cluster_base("c4");
    cfg.trace.num_intervals = 12;
    cfg.trace.retention_rounds = 30;
    cfg.trace.warmup_rounds_of_data = 10;
    cfg.trace.shift_fraction = 1.0;
    cfg.trace.shift_wave_rounds = {40, 80};
    cfg.training.total_events = 12;
    cfg.run.seeds = {1, 2, 3, 4, 5};
    const std::vector<AblationCell> cells = run_ablation(cfg, "tau_grid");

    std::map<std::string, std::map<std::uint64_t, const AblationCell*>> grid;
    for (const AblationCell& c : cells) {
        if (!c.ok) {
            detail = "cell " + c.value + " seed " + std::to_string(c.seed) +
                     " failed: " + c.error;
            return false;
        }
        grid[c.value][c.seed] = &c;
    }

    int pass_seeds = 0;
    std::ostringstream notes;
    for (std::uint64_t seed : kSeeds) {
        const double acc23 = grid["2/3"][seed]->result.final_accuracy;
        double best_other = 0.0;
        for (const auto& [label, by_seed] : grid)
            if (label != "2/3")
                best_other = std::max(best_other, by_seed.at(seed)->result.final_accuracy);
        const bool not_best = best_other >= acc23;

        const std::vector<Row> zero = load_rounds(grid["0"][seed]->result.run_dir);
        bool dip = false;
        double worst_dip = 0.0;
        for (std::size_t i = 1; i < zero.size() && !dip; ++i) {
            if (!zero[i].triggered) continue;
            double low = zero[i].acc;
            for (std::size_t j = i; j < std::min(zero.size(), i + 6); ++j)
                low = std::min(low, zero[j].acc);
            worst_dip = std::max(worst_dip, zero[i - 1].acc - low);
            if (zero[i - 1].acc - low >= 0.03) dip = true;
        }
        if (not_best && dip) ++pass_seeds;
        notes << (notes.tellp() > 0 ? " " : "") << "[2/3" << (not_best ? "!best" : "=best")
              << " dip " << std::round(worst_dip * 1000.0) / 10.0 << "pp]";
    }
    detail = notes.str() + "; seeds " + std::to_string(pass_seeds) + "/5 (need >=3)";
    return pass_seeds >= 3;
}

// --------------------------------------------------------------------------
// 5. Full theory suite at its stated trial counts and tolerances.

bool criterion5(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<theory::CheckResult> results = theory::run_suite(theory::SuiteOptions{});
    const double dt = seconds_since(t0);
    int passed = 0;
    std::ostringstream names;
    for (const theory::CheckResult& r : results) {
        if (r.pass) ++passed;
        else names << " " << r.name;
    }
    detail = std::to_string(passed) + "/" + std::to_string(results.size()) +
             " checks passed in " + std::to_string(std::round(dt * 10.0) / 10.0) +
             "s (limit 120s)" + (names.str().empty() ? "" : "; failing:" + names.str());
    return passed == static_cast<int>(results.size()) && dt < 120.0;
}

// --------------------------------------------------------------------------
// 6. choose_k recovers three separated blobs exactly, and the heterogeneity
//    report matches an O(N^2) brute force within 1e-12.

bool criterion6(std::string& detail) {
    int blob_pass = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto stream = rng::make_stream(seed, "c6_blobs");
        std::vector<Representation> reps;
        std::vector<int> truth;
        for (int b = 0; b < 3; ++b) {
            for (int i = 0; i < 20; ++i) {
                EmbeddingVector e;
                e.values.assign(8, 0.0);
                e.values[b] = 6.0;
                for (double& v : e.values) v += 0.05 * stream.next_normal();
                Representation r;
                r.client_id = static_cast<int>(reps.size());
                r.payload = std::move(e);
                reps.push_back(std::move(r));
                truth.push_back(b);
            }
        }
        const ClusterAssignment a =
            choose_k(reps, Metric::L1, 2, 8, rng::derive_seed(seed, "c6_choose"));
        std::vector<int> got;
        for (std::size_t i = 0; i < reps.size(); ++i)
            got.push_back(a.client_to_cluster.at(static_cast<int>(i)));
        if (a.K == 3 && adjusted_rand_index(truth, got) == 1.0) ++blob_pass;
    }

    double worst = 0.0;
    for (std::uint64_t inst = 0; inst < 10; ++inst) {
        auto stream = rng::make_stream(inst, "c6_het");
        const int n = 50;
        const int K = 5;
        std::vector<Representation> reps(n);
        ClusterAssignment a;
        a.K = K;
        std::vector<int> cl(n);
        for (int i = 0; i < n; ++i) {
            LabelHistogram h;
            std::vector<double> w(12);
            double total = 0.0;
            for (double& v : w) {
                v = stream.next_double() + 1e-3;
                total += v;
            }
            for (double& v : w) v /= total;
            h.probs = std::move(w);
            h.count = 10;
            reps[i].client_id = i;
            reps[i].payload = std::move(h);
            cl[i] = i < K ? i : static_cast<int>(stream.next_below(K));
            a.client_to_cluster[i] = cl[i];
        }
        const HeterogeneityReport got = mean_client_distance(a, reps, Metric::L1);

        auto dist = [&](int i, int j) { return distance(reps[i], reps[j], Metric::L1); };
        std::vector<double> peer_mean(n, 0.0);
        std::vector<double> all_mean(n, 0.0);
        for (int i = 0; i < n; ++i) {
            double peer = 0.0;
            long peers = 0;
            double all = 0.0;
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                const double d = dist(i, j);
                all += d;
                if (cl[j] == cl[i]) {
                    peer += d;
                    ++peers;
                }
            }
            peer_mean[i] = peers ? peer / static_cast<double>(peers) : 0.0;
            all_mean[i] = all / static_cast<double>(n - 1);
        }
        double mean = 0.0;
        double global = 0.0;
        std::vector<double> per_cluster(K, 0.0);
        std::vector<long> sizes(K, 0);
        for (int i = 0; i < n; ++i) {
            mean += peer_mean[i];
            global += all_mean[i];
            per_cluster[cl[i]] += peer_mean[i];
            ++sizes[cl[i]];
        }
        mean /= n;
        global /= n;
        for (int k = 0; k < K; ++k) per_cluster[k] /= static_cast<double>(sizes[k]);

        worst = std::max(worst, std::fabs(got.mean_client_distance - mean));
        worst = std::max(worst, std::fabs(got.global_mean - global));
        for (int k = 0; k < K; ++k)
            worst = std::max(worst, std::fabs(got.per_cluster_mean[k] - per_cluster[k]));
    }

    detail = "blob recovery " + std::to_string(blob_pass) +
             "/20 (need 20); heterogeneity max |dev| " + std::to_string(worst) +
             " (limit 1e-12)";
    return blob_pass == 20 && worst <= 1e-12;
}

// --------------------------------------------------------------------------
// 7. Malicious permuted-histogram clients never push Hybrid below the static
//    global baseline.

bool criterion7(std::string& detail) {
    std::ostringstream notes;
    bool all_ok = true;
    for (double frac : {0.1, 0.2, 0.3}) {
        int wins = 0;
        for (std::uint64_t seed : kSeeds) {
            ExperimentConfig h = cluster_base("c7-hybrid");
            h.trace.malicious_fraction = frac;
            ExperimentConfig s = static_global_arm(cluster_base("c7"));
            s.trace.malicious_fraction = frac;
            const RunResult rh = run_single(h, seed);
            const RunResult rs = run_single(s, seed);
            if (rh.final_accuracy >= rs.final_accuracy) ++wins;
        }
        notes << (notes.tellp() > 0 ? " " : "") << frac << "->" << wins << "/5";
        all_ok = all_ok && wins >= 4;
    }
    detail = "hybrid >= static wins per malicious fraction: " + notes.str() + " (need >=4)";
    return all_ok;
}

// --------------------------------------------------------------------------
// 8. Byte-identical reruns, and resume-after-crash equals the uninterrupted
//    run exactly.

bool criterion8(std::string& detail) {
    ExperimentConfig cfg = cluster_base("c8");
    cfg.training.total_events = 6;
    cfg.run.checkpoint_every = 20;

    const RunResult a = run_single(cfg, 3);
    const std::string rounds_a = slurp(fs::path(a.run_dir) / "rounds.csv");
    const std::string summary_a = slurp(fs::path(a.run_dir) / "summary.json");
    const RunResult b = run_single(cfg, 3);
    const bool rerun_equal = slurp(fs::path(b.run_dir) / "rounds.csv") == rounds_a &&
                             slurp(fs::path(b.run_dir) / "summary.json") == summary_a;

    // Crash simulation: keep the round-40 checkpoint, tear both logs a few
    // rows later, then resume and demand bit-identical artifacts.
    const fs::path dir(a.run_dir);
    const std::string events_a = slurp(dir / "events.jsonl");
    {
        std::istringstream in(rounds_a);
        std::ofstream out(dir / "rounds.csv", std::ios::trunc);
        std::string line;
        int data_rows = 0;
        while (std::getline(in, line)) {
            if (!line.empty() && line[0] != '#' && line.rfind("round,", 0) != 0) {
                if (data_rows == 45) break;
                ++data_rows;
            }
            out << line << "\n";
        }
        out << "45,4,12.";  // torn row
    }
    {
        std::istringstream in(events_a);
        std::ofstream out(dir / "events.jsonl", std::ios::trunc);
        std::string line;
        while (std::getline(in, line)) {
            const auto pos = line.find("\"round\":");
            long r = -1;
            if (pos != std::string::npos) r = std::strtol(line.c_str() + pos + 8, nullptr, 10);
            if (r >= 40) break;
            out << line << "\n";
        }
    }
    fs::remove(dir / "summary.json");

    const RunResult resumed = resume_run(a.run_dir);
    const bool resume_equal = slurp(dir / "rounds.csv") == rounds_a &&
                              slurp(dir / "events.jsonl") == events_a &&
                              slurp(dir / "summary.json") == summary_a &&
                              resumed.final_accuracy == a.final_accuracy;

    detail = std::string("rerun bytes ") + (rerun_equal ? "equal" : "DIFFER") +
             "; resume bytes " + (resume_equal ? "equal" : "DIFFER");
    return rerun_equal && resume_equal;
}

// --------------------------------------------------------------------------
// 9. Analytic gradients agree with central finite differences.

bool criterion9(std::string& detail) {
    auto stream = rng::make_stream(9, "c9");
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const ModelKind kind = trial % 2 == 0 ? ModelKind::Softmax : ModelKind::Mlp;
        const int labels = 2 + static_cast<int>(stream.next_below(4));
        const int dim = 2 + static_cast<int>(stream.next_below(5));
        const int hidden = 2 + static_cast<int>(stream.next_below(4));
        const TaskModel model(kind, labels, dim, hidden);

        std::vector<Sample> batch(1 + stream.next_below(6));
        for (Sample& s : batch) {
            s.x.resize(dim);
            for (double& v : s.x) v = stream.next_normal();
            s.label = static_cast<int>(stream.next_below(labels));
        }
        std::vector<double> params(model.param_dim());
        for (double& v : params) v = 0.5 * stream.next_normal();

        std::vector<double> grad;
        model.loss_and_grad(params, batch, grad);
        double norm = 0.0;
        for (double g : grad) norm = std::max(norm, std::fabs(g));
        double err = 0.0;
        const double h = 1e-5;
        for (std::size_t d = 0; d < params.size(); ++d) {
            const double keep = params[d];
            params[d] = keep + h;
            const double up = model.loss(params, batch);
            params[d] = keep - h;
            const double down = model.loss(params, batch);
            params[d] = keep;
            err = std::max(err, std::fabs((up - down) / (2.0 * h) - grad[d]));
        }
        worst = std::max(worst, err / std::max(norm, 1e-8));
    }
    detail = "worst relative gradient error " + std::to_string(worst) + " (limit 1e-4)";
    return worst < 1e-4;
}

// --------------------------------------------------------------------------
// 10. The pairwise adaptive trigger lands within two accuracy points of the
//     center-shift trigger on the rotating label-bucket trace.

bool criterion10(std::string& detail) {
    int within = 0;
    std::ostringstream gaps;
    for (std::uint64_t seed : kSeeds) {
        ExperimentConfig shift_cfg = cluster_base("c10-shift");
        shift_cfg.trace.kind = "label_bucket";
        shift_cfg.trace.num_intervals = 12;
        shift_cfg.trace.retention_rounds = 30;
        shift_cfg.trace.warmup_rounds_of_data = 10;
        shift_cfg.training.total_events = 12;
        // The bucket rotation never pauses, so average the tail over three
        // full turnovers instead of one to score steady-state behaviour.
        shift_cfg.run.final_accuracy_window = 30;
        ExperimentConfig pair_cfg = shift_cfg;
        pair_cfg.run.name = "c10-pairwise";
        pair_cfg.policy.pairwise_variant = true;

        const RunResult rs = run_single(shift_cfg, seed);
        const RunResult rp = run_single(pair_cfg, seed);
        const double gap = rp.final_accuracy - rs.final_accuracy;
        if (std::fabs(gap) <= 0.02) ++within;
        gaps << (gaps.tellp() > 0 ? " " : "")
             << std::round(gap * 1000.0) / 10.0;
    }
    detail = "pairwise-minus-center-shift gaps (pp): " + gaps.str() + "; " +
             std::to_string(within) + "/5 within the +-2.0 band (need 5)";
    return within == 5;
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (!std::strcmp(argv[i], "--criterion") && i + 1 < argc) {
            only = std::atoi(argv[++i]);
            if (only < 1 || only > 10) {
                std::fprintf(stderr, "criterion must be 1..10\n");
                return 2;
            }
        } else if (!std::strcmp(argv[i], "--all")) {
            only = 0;
        } else {
            std::fprintf(stderr, "usage: %s [--criterion N | --all]\n", argv[0]);
            return 2;
        }
    }

    using Fn = bool (*)(std::string&);
    const Fn checks[10] = {criterion1, criterion2, criterion3, criterion4, criterion5,
                           criterion6, criterion7, criterion8, criterion9, criterion10};
    bool ok = true;
    for (int n = 1; n <= 10; ++n) {
        if (only != 0 && n != only) continue;
        std::string detail;
        bool pass = false;
        try {
            pass = checks[n - 1](detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("criterion %d: %s %s\n", n, pass ? "PASS" : "FAIL", detail.c_str());
        std::fflush(stdout);
        ok = ok && pass;
    }
    return ok ? 0 : 1;
}
