#include "cflsim/engine.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "cflsim/clustering.hpp"
#include "cflsim/drift.hpp"
#include "cflsim/errors.hpp"
#include "cflsim/representation.hpp"
#include "cflsim/rng.hpp"
#include "cflsim/simulation.hpp"
#include "cflsim/state.hpp"
#include "cflsim/training.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint files are little-endian; big-endian hosts are unsupported");

namespace cflsim {

namespace fs = std::filesystem;
using nlohmann::json;

std::string output_root() {
    if (const char* env = std::getenv("CFLSIM_OUTPUT_ROOT"); env && *env) return env;
    return "runs";
}

namespace {

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string run_dir_name(const ExperimentConfig& cfg, std::uint64_t seed) {
    if (cfg.run.output_dir.empty())
        return cfg.run.name + "-seed" + std::to_string(seed);
    if (cfg.run.seeds.size() == 1) return cfg.run.output_dir;
    return cfg.run.output_dir + "-seed" + std::to_string(seed);
}

bool is_test_sample(std::uint64_t seed, int client_id, int sample_id) {
    return rng::derive_seed(seed, "split", static_cast<std::uint64_t>(client_id),
                            static_cast<std::uint64_t>(sample_id)) %
               5 ==
           4;
}

struct ClientRuntime {
    std::vector<char> active;     // by pool index
    std::vector<int> label_remap; // data label l is reported/served as label_remap[l]
    std::vector<int> report_perm; // non-empty once a permuted-histogram event fired
    std::vector<Sample> train;
    std::vector<Sample> test;
    bool dirty = true;
};

struct Timings {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double clustering_s = 0.0;
    std::vector<double> per_event_clustering_s;
};

class StopWatch {
  public:
    double stop() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }

  private:
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

// Everything a run needs that is reproducible from (config, seed).
struct World {
    ExperimentConfig cfg;
    std::uint64_t seed;
    std::string hash_str;
    Population pop;
    DriftTrace trace;
    TaskModel model;
    std::optional<FeatureExtractor> extractor;
    std::optional<SketchProjector> projector;
    DeviceTimeModel tm;
    KRange krange;

    std::vector<ClientRuntime> rt;
    std::vector<Representation> true_reps;
    std::vector<Representation> reported_reps;
    std::vector<Representation> last_true_reps;
    std::size_t next_event = 0;

    ClusterState state;
    std::vector<AggregatorState> agg_states;
    std::vector<int> selected_last_round;
    double adaptive_delta = 0.0;
    bool last_event_triggered = false;

    World(const ExperimentConfig& c, std::uint64_t s)
        : cfg(c),
          seed(s),
          hash_str(hash_hex(config_hash(c))),
          model(c.task.model, c.task.num_labels, c.task.input_dim, c.task.hidden_dim) {
        const SyntheticTask task = make_synthetic_task(
            cfg.task.num_labels, cfg.task.input_dim, cfg.task.k_true, cfg.task.within_weight,
            cfg.task.outside_weight, cfg.task.blob_sigma, cfg.task.label_noise, seed);
        pop = generate_population(task, cfg.population.num_clients,
                                  cfg.population.samples_per_client,
                                  cfg.population.dirichlet_alpha, seed,
                                  cfg.population.concept_rotation);
        inject_shared_dataset(pop, cfg.population.shared_level, seed);
        if (!cfg.population.device_profile_file.empty()) {
            for (const ClientProfile& p :
                 load_device_profiles(cfg.population.device_profile_file)) {
                if (p.client_id < 0 || p.client_id >= static_cast<int>(pop.clients.size()))
                    throw InputError("device profile for unknown client " +
                                     std::to_string(p.client_id));
                ClientProfile& dst = pop.clients[p.client_id].profile;
                dst.device_speed = p.device_speed;
                dst.bw_up = p.bw_up;
                dst.bw_down = p.bw_down;
            }
        }

        const long horizon =
            static_cast<long>(cfg.training.total_events) * cfg.training.rounds_per_event;
        if (cfg.trace.kind == "static") {
            trace = build_static_trace(pop, horizon);
        } else if (cfg.trace.kind == "label_bucket") {
            trace = build_label_bucket_trace(pop, cfg.trace.num_intervals,
                                             cfg.trace.rounds_between,
                                             cfg.trace.retention_rounds,
                                             cfg.trace.warmup_rounds_of_data, seed);
        } else {
            const ShiftPlan plan = make_shift_plan(
                static_cast<int>(pop.clients.size()), cfg.trace.shift_at_round,
                cfg.trace.shift_fraction, cfg.trace.shift_wave_rounds, seed);
            trace = build_interval_trace(pop, cfg.trace.num_intervals,
                                         cfg.trace.rounds_between, cfg.trace.retention_rounds,
                                         cfg.trace.warmup_rounds_of_data, plan, seed);
        }
        if (cfg.trace.concept_drift_fraction > 0.0 && !cfg.trace.concept_drift_rounds.empty())
            build_concept_drift_events(trace, pop, cfg.trace.concept_drift_fraction,
                                       cfg.trace.concept_drift_rounds, seed);
        if (cfg.trace.malicious_fraction > 0.0)
            apply_malicious(trace, pop, cfg.trace.malicious_fraction, seed);
        std::stable_sort(trace.events.begin(), trace.events.end(),
                         [](const TraceEvent& a, const TraceEvent& b) { return a.round < b.round; });

        if (cfg.representation.kind == "embedding")
            extractor.emplace(cfg.task.input_dim, cfg.representation.extractor_hidden,
                              cfg.representation.embedding_dim,
                              rng::derive_seed(seed, "extractor"));
        if (cfg.representation.kind == "gradient_sketch" &&
            model.param_dim() > kSketchFullDimLimit)
            projector.emplace(model.param_dim(), kSketchProjectedDim,
                              rng::derive_seed(seed, "sketch_proj"));

        tm.model_bytes = cfg.time.model_bytes;
        tm.round_deadline_s = cfg.time.round_deadline_s;

        const std::size_t n = pop.clients.size();
        krange = default_k_range(n);
        if (cfg.clustering.k_min > 0) krange.k_min = cfg.clustering.k_min;
        if (cfg.clustering.k_max > 0) krange.k_max = cfg.clustering.k_max;
        const int cap = std::max<int>(2, static_cast<int>(n) - 1);
        krange.k_min = std::clamp(krange.k_min, 2, cap);
        krange.k_max = std::clamp(krange.k_max, krange.k_min, cap);

        rt.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            rt[i].active.assign(pop.clients[i].pool.size(), 0);
            rt[i].label_remap.resize(cfg.task.num_labels);
            std::iota(rt[i].label_remap.begin(), rt[i].label_remap.end(), 0);
        }
        true_reps.resize(n);
        reported_reps.resize(n);
        adaptive_delta = cfg.policy.pairwise_delta;
    }

    void apply_event(const TraceEvent& ev) {
        ClientRuntime& r = rt[ev.client_id];
        switch (ev.kind) {
            case TraceEventKind::ArriveBucket:
                for (int sid : ev.sample_ids) r.active[sid] = 1;
                break;
            case TraceEventKind::Retire:
                for (int sid : ev.sample_ids) r.active[sid] = 0;
                break;
            case TraceEventKind::SwapLabels:
                for (int& l : r.label_remap) {
                    if (l == ev.label_a) l = ev.label_b;
                    else if (l == ev.label_b) l = ev.label_a;
                }
                break;
            case TraceEventKind::PermuteReportedHistogram:
                r.report_perm = ev.permutation;
                break;
        }
        r.dirty = true;
    }

    // Applies every pending trace event with round <= boundary.
    void apply_events_until(long boundary) {
        while (next_event < trace.events.size() && trace.events[next_event].round <= boundary)
            apply_event(trace.events[next_event++]);
        for (std::size_t i = 0; i < rt.size(); ++i) {
            if (!rt[i].dirty) continue;
            rebuild_views(static_cast<int>(i));
            rt[i].dirty = false;
        }
    }

    void rebuild_views(int cid) {
        ClientRuntime& r = rt[cid];
        const std::vector<Sample>& pool = pop.clients[cid].pool;
        r.train.clear();
        r.test.clear();
        for (std::size_t sid = 0; sid < pool.size(); ++sid) {
            if (!r.active[sid]) continue;
            Sample s = pool[sid];
            s.label = r.label_remap[s.label];
            if (is_test_sample(seed, cid, static_cast<int>(sid)))
                r.test.push_back(std::move(s));
            else
                r.train.push_back(std::move(s));
        }
        pop.clients[cid].profile.data_size = static_cast<long>(r.train.size());
    }

    // Collects every client's representation at an event boundary. Gradient
    // sketches are taken at the shared snapshot (mean of cluster models, or
    // the zero model before registration).
    void collect_representations(long boundary) {
        ModelParams snapshot;
        if (cfg.representation.kind == "gradient_sketch") {
            snapshot = model.zero_params();
            if (!state.models.empty()) {
                for (const ModelParams& m : state.models)
                    for (std::size_t d = 0; d < m.values.size(); ++d)
                        snapshot.values[d] += m.values[d];
                for (double& v : snapshot.values)
                    v /= static_cast<double>(state.models.size());
            }
        }
        for (std::size_t i = 0; i < rt.size(); ++i) {
            const int cid = static_cast<int>(i);
            Representation rep;
            rep.client_id = cid;
            rep.round_collected = boundary;
            if (rt[i].train.empty()) {
                if (!rep_values(true_reps[i]).empty()) {
                    rep.payload = true_reps[i].payload;  // no data change, keep the last view
                } else if (cfg.representation.kind == "label_histogram") {
                    LabelHistogram h;
                    h.probs.assign(cfg.task.num_labels, 1.0 / cfg.task.num_labels);
                    rep.payload = std::move(h);
                } else if (cfg.representation.kind == "embedding") {
                    EmbeddingVector e;
                    e.values.assign(cfg.representation.embedding_dim, 0.0);
                    rep.payload = std::move(e);
                } else {
                    GradientSketch g;
                    g.values.assign(projector ? projector->out_dim() : model.param_dim(), 0.0);
                    rep.payload = std::move(g);
                }
            } else if (cfg.representation.kind == "label_histogram") {
                rep.payload = compute_label_histogram(rt[i].train, cfg.task.num_labels);
            } else if (cfg.representation.kind == "embedding") {
                rep.payload = compute_embedding(rt[i].train, *extractor);
            } else {
                rep.payload = compute_gradient_sketch(rt[i].train, snapshot, model,
                                                      projector ? &*projector : nullptr);
            }
            Representation reported = rep;
            if (!rt[i].report_perm.empty() &&
                std::holds_alternative<LabelHistogram>(reported.payload)) {
                LabelHistogram& h = std::get<LabelHistogram>(reported.payload);
                const std::vector<double> orig = h.probs;
                for (std::size_t l = 0; l < orig.size(); ++l)
                    h.probs[l] = orig[rt[i].report_perm[l]];
            }
            true_reps[i] = std::move(rep);
            reported_reps[i] = std::move(reported);
        }
    }
};

// ---------------------------------------------------------------------------
// Checkpoints: u64 little-endian header length, JSON header, then raw f64
// arrays in the order the header lists them.

void write_f64(std::ofstream& out, const double* data, std::size_t n) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 8));
}

void write_checkpoint(const World& w, const std::string& run_dir, long e) {
    const long B = w.state.round;
    const int K = w.state.assignment.K;
    const std::size_t D = w.model.param_dim();
    const std::size_t N = w.rt.size();
    const std::size_t C = w.state.assignment.centers.empty()
                              ? 0
                              : w.state.assignment.centers[0].size();

    json h;
    h["version"] = 1;
    h["kind"] = to_string(w.cfg.task.model);
    h["config_hash"] = w.hash_str;
    h["seed"] = w.seed;
    h["round"] = B;
    h["event_index"] = e;
    h["k"] = K;
    h["model_dim"] = D;
    h["center_dim"] = C;
    h["num_clients"] = N;
    std::vector<int> ids;
    std::vector<int> cls;
    for (const auto& [cid, k] : w.state.assignment.client_to_cluster) {
        ids.push_back(cid);
        cls.push_back(k);
    }
    h["clients"] = ids;
    h["client_cluster"] = cls;
    h["selected_last_round"] = w.selected_last_round;
    h["arrays"] = json::array({json::array({"scalars", 3}),
                               json::array({"models", K * D}),
                               json::array({"centers", K * C}),
                               json::array({"yogi_m", K * D}),
                               json::array({"yogi_v", K * D}),
                               json::array({"yogi_init", K}),
                               json::array({"last_loss", N}),
                               json::array({"last_selected", N}),
                               json::array({"reps", N * C})});
    const std::string header = h.dump();

    fs::create_directories(fs::path(run_dir) / "checkpoints");
    const fs::path path = fs::path(run_dir) / "checkpoints" / ("ckpt-" + std::to_string(B) + ".bin");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    const std::uint64_t len = header.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    const double scalars[3] = {w.state.sim_time, w.adaptive_delta,
                               w.last_event_triggered ? 1.0 : 0.0};
    write_f64(out, scalars, 3);
    std::vector<double> buf;
    buf.reserve(std::max(K * D, N * std::max<std::size_t>(C, 1)));
    for (const ModelParams& m : w.state.models)
        buf.insert(buf.end(), m.values.begin(), m.values.end());
    write_f64(out, buf.data(), buf.size());
    buf.clear();
    for (const auto& c : w.state.assignment.centers) buf.insert(buf.end(), c.begin(), c.end());
    write_f64(out, buf.data(), buf.size());
    buf.clear();
    for (int k = 0; k < K; ++k) {
        const AggregatorState& s =
            k < static_cast<int>(w.agg_states.size()) ? w.agg_states[k] : AggregatorState{};
        if (s.initialized) buf.insert(buf.end(), s.m.begin(), s.m.end());
        else buf.insert(buf.end(), D, 0.0);
    }
    write_f64(out, buf.data(), buf.size());
    buf.clear();
    for (int k = 0; k < K; ++k) {
        const AggregatorState& s =
            k < static_cast<int>(w.agg_states.size()) ? w.agg_states[k] : AggregatorState{};
        if (s.initialized) buf.insert(buf.end(), s.v.begin(), s.v.end());
        else buf.insert(buf.end(), D, 0.0);
    }
    write_f64(out, buf.data(), buf.size());
    buf.clear();
    for (int k = 0; k < K; ++k)
        buf.push_back(k < static_cast<int>(w.agg_states.size()) && w.agg_states[k].initialized
                          ? 1.0
                          : 0.0);
    write_f64(out, buf.data(), buf.size());
    buf.clear();
    for (const SimClient& c : w.pop.clients) buf.push_back(c.profile.last_loss);
    write_f64(out, buf.data(), buf.size());
    buf.clear();
    for (const SimClient& c : w.pop.clients)
        buf.push_back(static_cast<double>(c.profile.last_selected_round));
    write_f64(out, buf.data(), buf.size());
    buf.clear();
    for (const Representation& r : w.last_true_reps) {
        const auto& v = rep_values(r);
        if (v.size() != C) throw std::runtime_error("checkpoint: representation dim drifted");
        buf.insert(buf.end(), v.begin(), v.end());
    }
    write_f64(out, buf.data(), buf.size());
    if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

struct CheckpointData {
    json header;
    std::map<std::string, std::vector<double>> arrays;
};

CheckpointData read_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open checkpoint: " + path.string());
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 8);
    std::string header(len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(len));
    if (!in) throw InputError("truncated checkpoint header: " + path.string());
    CheckpointData ck;
    try {
        ck.header = json::parse(header);
    } catch (const json::exception& e) {
        throw InputError("bad checkpoint header: " + std::string(e.what()));
    }
    for (const auto& entry : ck.header.at("arrays")) {
        const std::string name = entry.at(0).get<std::string>();
        const std::size_t n = entry.at(1).get<std::size_t>();
        std::vector<double> data(n);
        in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * 8));
        if (!in) throw InputError("truncated checkpoint array " + name + ": " + path.string());
        ck.arrays[name] = std::move(data);
    }
    return ck;
}

// ---------------------------------------------------------------------------
// Run outputs.

const char* kRoundsHeader =
    "round,event_index,sim_time_s,mean_accuracy,mean_client_distance,"
    "global_mean_distance,k,recluster_triggered,moved_count,dropped_stragglers,"
    "per_cluster_accuracy";

struct Retained {
    std::vector<AccuracyPoint> acc_points;
    std::vector<double> acc_history;
    long dropped_stragglers = 0;
    long recluster_events = 0;
    long moved_clients = 0;
    long diverged_clients = 0;
    long drift_events = 0;
    int registration_k = 0;
};

// Keeps only complete rows for rounds < boundary, rewrites both log files in
// place, and accumulates the counters those rows contribute to the summary.
Retained truncate_logs(const std::string& run_dir, long boundary) {
    Retained kept;
    const fs::path rounds_path = fs::path(run_dir) / "rounds.csv";
    const fs::path events_path = fs::path(run_dir) / "events.jsonl";

    {
        std::ifstream in(rounds_path);
        if (!in) throw InputError("resume: missing rounds.csv in " + run_dir);
        std::vector<std::string> lines;
        std::string line;
        long expect = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            if (line[0] == '#' || line.rfind("round,", 0) == 0) {
                lines.push_back(line);
                continue;
            }
            std::vector<std::string> f;
            std::string cur;
            for (char c : line) {
                if (c == ',') {
                    f.push_back(cur);
                    cur.clear();
                } else cur += c;
            }
            f.push_back(cur);
            if (f.size() != 11) break;
            char* end = nullptr;
            const long r = std::strtol(f[0].c_str(), &end, 10);
            if (end == f[0].c_str() || *end != '\0' || r != expect || r >= boundary) break;
            kept.acc_points.push_back({std::strtod(f[2].c_str(), nullptr),
                                       std::strtod(f[3].c_str(), nullptr)});
            kept.acc_history.push_back(kept.acc_points.back().accuracy);
            kept.dropped_stragglers += std::strtol(f[9].c_str(), nullptr, 10);
            lines.push_back(line);
            ++expect;
        }
        if (expect != boundary)
            throw InputError("resume: rounds.csv ends at round " + std::to_string(expect) +
                             " but the checkpoint is at round " + std::to_string(boundary));
        std::ofstream out(rounds_path, std::ios::trunc);
        for (const std::string& l : lines) out << l << "\n";
    }

    {
        std::ifstream in(events_path);
        if (!in) throw InputError("resume: missing events.jsonl in " + run_dir);
        std::vector<std::string> lines;
        std::string line;
        long last_round = -1;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json j;
            try {
                j = json::parse(line);
            } catch (const json::exception&) {
                break;
            }
            const long r = j.value("round", -1L);
            if (r < last_round || r >= boundary) break;
            last_round = r;
            const std::string kind = j.value("event", "");
            if (kind == "registration") {
                kept.registration_k = j.value("k", 0);
            } else if (kind == "drift") {
                ++kept.drift_events;
                if (j.value("triggered", false)) ++kept.recluster_events;
                kept.moved_clients += j.value("moved_count", 0L);
            } else if (kind == "diverged") {
                ++kept.diverged_clients;
            }
            lines.push_back(line);
        }
        std::ofstream out(events_path, std::ios::trunc);
        for (const std::string& l : lines) out << l << "\n";
    }
    return kept;
}

struct BlockOutcome {
    bool triggered = false;
    long moved = 0;
};

RunResult run_from(World& w, const std::string& run_dir, long start_event,
                   const Retained& retained) {
    const ExperimentConfig& cfg = w.cfg;
    const long R = cfg.training.rounds_per_event;
    const long T = cfg.training.total_events;
    Timings timings;

    std::ofstream rounds_out(fs::path(run_dir) / "rounds.csv", std::ios::app);
    std::ofstream events_out(fs::path(run_dir) / "events.jsonl", std::ios::app);
    if (!rounds_out || !events_out)
        throw std::runtime_error("cannot open run outputs in " + run_dir);
    if (start_event == 0) {
        rounds_out << "# config_hash=" << w.hash_str << "\n" << kRoundsHeader << "\n";
    }

    std::vector<AccuracyPoint> acc_points = retained.acc_points;
    std::vector<double> acc_history = retained.acc_history;
    RunResult res;
    res.run_dir = run_dir;
    res.seed = w.seed;
    res.rounds = T * R;
    res.recluster_events = retained.recluster_events;
    res.moved_clients = retained.moved_clients;
    res.dropped_stragglers = retained.dropped_stragglers;
    res.diverged_clients = retained.diverged_clients;
    long drift_events = retained.drift_events;
    int registration_k = retained.registration_k;

    SelectorContext selctx;
    selctx.spec.kind = cfg.selection.kind;
    selctx.spec.explore_fraction = cfg.selection.explore_fraction;
    selctx.spec.penalty_alpha = cfg.selection.penalty_alpha;
    selctx.spec.deadline_s = cfg.selection.deadline_s;
    selctx.metric = cfg.representation.metric;

    auto members_fn = [&](int k) {
        std::vector<ClientView> out;
        for (const auto& [cid, cl] : w.state.assignment.client_to_cluster) {
            if (cl != k) continue;
            ClientRuntime& r = w.rt[cid];
            if (r.train.empty()) continue;
            ClientView v;
            v.client_id = cid;
            v.train = r.train;
            v.profile = &w.pop.clients[cid].profile;
            v.rep = &w.reported_reps[cid];
            out.push_back(v);
        }
        return out;
    };

    for (long e = start_event; e < T; ++e) {
        const long B = e * R;

        if (cfg.run.checkpoint_every > 0 && B > 0 && e != start_event &&
            B / cfg.run.checkpoint_every > (B - R) / cfg.run.checkpoint_every) {
            rounds_out.flush();
            events_out.flush();
            write_checkpoint(w, run_dir, e);
        }

        w.apply_events_until(B);
        w.collect_representations(B);

        BlockOutcome block;
        if (e == 0) {
            const StopWatch sw;
            const std::size_t n = w.rt.size();
            ClusterAssignment a;
            if (cfg.policy.initial_clusters == 1 || n < 2) {
                a.K = 1;
                std::vector<double> center(rep_values(w.reported_reps[0]).size(), 0.0);
                for (std::size_t i = 0; i < n; ++i) {
                    a.client_to_cluster[static_cast<int>(i)] = 0;
                    const auto& v = rep_values(w.reported_reps[i]);
                    for (std::size_t d = 0; d < v.size(); ++d) center[d] += v[d];
                }
                for (double& x : center) x /= static_cast<double>(n);
                a.centers.push_back(std::move(center));
            } else if (cfg.policy.initial_clusters == 0) {
                a = choose_k(w.reported_reps, selctx.metric, w.krange.k_min, w.krange.k_max,
                             rng::derive_seed(w.seed, "registration"));
            } else {
                a = kmeans(w.reported_reps,
                           std::min<int>(cfg.policy.initial_clusters, static_cast<int>(n)),
                           selctx.metric, rng::derive_seed(w.seed, "registration"));
            }
            const double spent = sw.stop();
            timings.clustering_s += spent;
            timings.per_event_clustering_s.push_back(spent);
            w.state.assignment = std::move(a);
            w.state.models.clear();
            for (int k = 0; k < w.state.assignment.K; ++k) {
                ModelParams m = w.model.zero_params();
                m.cluster = k;
                w.state.models.push_back(std::move(m));
            }
            w.agg_states.assign(w.state.assignment.K, {});
            registration_k = w.state.assignment.K;
            json j;
            j["event"] = "registration";
            j["round"] = 0;
            j["event_index"] = 0;
            j["k"] = w.state.assignment.K;
            j["num_clients"] = n;
            j["seed"] = w.seed;
            j["config_hash"] = w.hash_str;
            events_out << j.dump() << "\n";
            w.last_true_reps = w.true_reps;
        } else {
            std::vector<Representation> drifted;
            for (std::size_t i = 0; i < w.rt.size(); ++i) {
                if (detect_drift(w.last_true_reps[i], w.true_reps[i], selctx.metric,
                                 cfg.policy.drift_eps))
                    drifted.push_back(w.reported_reps[i]);
            }
            DriftPolicy policy;
            policy.mode = cfg.policy.mode;
            policy.tau_fraction = cfg.policy.tau_fraction;
            policy.pairwise_variant = cfg.policy.pairwise_variant;
            policy.pairwise_delta = w.adaptive_delta;
            policy.pairwise_c = cfg.policy.pairwise_c;
            const int k_before = w.state.assignment.K;
            const StopWatch sw;
            DriftOutcome out = handle_drift_event(
                drifted, w.state, w.reported_reps, policy, selctx.metric, w.krange,
                w.selected_last_round, rng::derive_seed(w.seed, "drift_event",
                                                        static_cast<std::uint64_t>(e)));
            const double spent = sw.stop();
            timings.clustering_s += spent;
            timings.per_event_clustering_s.push_back(spent);
            w.state.assignment = std::move(out.new_assignment);
            w.state.models = std::move(out.new_models);
            if (out.global_recluster_triggered || w.state.assignment.K != k_before)
                w.agg_states.assign(w.state.assignment.K, {});
            if (cfg.policy.pairwise_variant && cfg.policy.mode == DriftMode::Hybrid) {
                w.adaptive_delta = update_adaptive_delta(
                    w.adaptive_delta, cfg.policy.pairwise_c,
                    w.last_event_triggered && out.global_recluster_triggered);
                w.last_event_triggered = out.global_recluster_triggered;
            }
            block.triggered = out.global_recluster_triggered;
            block.moved = static_cast<long>(out.moved_clients.size());
            ++drift_events;
            if (block.triggered) ++res.recluster_events;
            res.moved_clients += block.moved;
            json j;
            j["event"] = "drift";
            j["round"] = B;
            j["event_index"] = e;
            j["drifted_count"] = drifted.size();
            j["moved_count"] = block.moved;
            j["triggered"] = block.triggered;
            j["theta"] = out.theta;
            j["max_shift"] = out.max_center_shift;
            j["k_before"] = k_before;
            j["k_after"] = w.state.assignment.K;
            events_out << j.dump() << "\n";
            w.last_true_reps = w.true_reps;
        }

        const HeterogeneityReport het =
            mean_client_distance(w.state.assignment, w.true_reps, selctx.metric);

        auto hook = [&](long round, std::span<const RoundFragment> frags) {
            long dropped_now = 0;
            std::vector<int> selected_now;
            for (const RoundFragment& f : frags) {
                for (const auto& [cid, loss] : f.client_losses)
                    w.pop.clients[cid].profile.last_loss = loss;
                for (int cid : f.selected) {
                    w.pop.clients[cid].profile.last_selected_round = round;
                    selected_now.push_back(cid);
                }
                dropped_now += static_cast<long>(f.dropped.size());
                for (int cid : f.diverged) {
                    json j;
                    j["event"] = "diverged";
                    j["round"] = round;
                    j["client_id"] = cid;
                    events_out << j.dump() << "\n";
                    ++res.diverged_clients;
                }
            }
            std::sort(selected_now.begin(), selected_now.end());
            selected_now.erase(std::unique(selected_now.begin(), selected_now.end()),
                               selected_now.end());
            w.selected_last_round = std::move(selected_now);
            res.dropped_stragglers += dropped_now;

            const int K = w.state.assignment.K;
            std::vector<double> acc_sum(K, 0.0);
            std::vector<long> acc_n(K, 0);
            double total = 0.0;
            long count = 0;
            for (const auto& [cid, cl] : w.state.assignment.client_to_cluster) {
                const ClientRuntime& r = w.rt[cid];
                if (r.test.empty()) continue;
                const double a = w.model.evaluate(w.state.models[cl].values, r.test);
                acc_sum[cl] += a;
                ++acc_n[cl];
                total += a;
                ++count;
            }
            const double mean_acc = count ? total / static_cast<double>(count) : 0.0;
            acc_points.push_back({w.state.sim_time, mean_acc});
            acc_history.push_back(mean_acc);

            const bool first = round == B;
            rounds_out << round << ',' << e << ',' << format_double(w.state.sim_time) << ','
                       << format_double(mean_acc) << ','
                       << format_double(het.mean_client_distance) << ','
                       << format_double(het.global_mean) << ',' << K << ','
                       << (first && block.triggered ? 1 : 0) << ','
                       << (first ? block.moved : 0) << ',' << dropped_now << ',';
            for (int k = 0; k < K; ++k) {
                if (k) rounds_out << ';';
                rounds_out << format_double(acc_n[k] ? acc_sum[k] / acc_n[k] : 0.0);
            }
            rounds_out << "\n";
        };

        run_event_block(w.state, members_fn, cfg.training, w.model, selctx, w.tm,
                        w.agg_states, w.seed, static_cast<int>(R), hook);
    }

    rounds_out.flush();
    events_out.flush();

    const long W = std::min<long>(cfg.run.final_accuracy_window,
                                  static_cast<long>(acc_history.size()));
    double final_acc = 0.0;
    for (long i = 0; i < W; ++i) final_acc += acc_history[acc_history.size() - 1 - i];
    if (W > 0) final_acc /= static_cast<double>(W);
    res.final_accuracy = final_acc;
    res.final_k = w.state.assignment.K;
    for (double target : cfg.run.eval_targets)
        res.tta_s.emplace_back(target, time_to_accuracy(acc_points, target));

    json summary;
    summary["name"] = cfg.run.name;
    summary["config_hash"] = w.hash_str;
    summary["seed"] = w.seed;
    summary["rounds"] = res.rounds;
    summary["num_clients"] = w.rt.size();
    summary["final_accuracy"] = res.final_accuracy;
    summary["final_accuracy_window"] = W;
    json tta = json::object();
    for (const auto& [target, t] : res.tta_s)
        tta[format_double(target)] = t ? json(*t) : json(nullptr);
    summary["tta_s"] = tta;
    summary["counters"] = {{"drift_events", drift_events},
                           {"recluster_events", res.recluster_events},
                           {"moved_clients", res.moved_clients},
                           {"dropped_stragglers", res.dropped_stragglers},
                           {"diverged_clients", res.diverged_clients}};
    summary["overhead"] = {{"clustering_calls", 1 + res.recluster_events},
                           {"registration_k", registration_k},
                           {"final_k", res.final_k}};
    {
        std::ofstream out(fs::path(run_dir) / "summary.json", std::ios::trunc);
        out << summary.dump(2) << "\n";
    }
    {
        json t;
        t["config_hash"] = w.hash_str;
        t["total_s"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - timings.start)
                .count();
        t["clustering_s"] = timings.clustering_s;
        t["per_event_clustering_s"] = timings.per_event_clustering_s;
        std::ofstream out(fs::path(run_dir) / "timings.json", std::ios::trunc);
        out << t.dump(2) << "\n";
    }
    return res;
}

}  // namespace

std::string run_dir_for(const ExperimentConfig& cfg, std::uint64_t seed) {
    return (fs::path(output_root()) / run_dir_name(cfg, seed)).string();
}

RunResult run_single(const ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const std::string run_dir = run_dir_for(cfg, seed);
    fs::create_directories(run_dir);
    for (const char* f : {"rounds.csv", "events.jsonl", "summary.json", "timings.json"})
        fs::remove(fs::path(run_dir) / f);
    fs::remove_all(fs::path(run_dir) / "checkpoints");
    {
        std::ofstream out(fs::path(run_dir) / "config.toml", std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write config.toml in " + run_dir);
        out << canonical_toml(cfg) << "# config_hash=" << hash_hex(config_hash(cfg)) << "\n";
    }
    World w(cfg, seed);
    return run_from(w, run_dir, 0, Retained{});
}

std::vector<RunResult> run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<RunResult> out;
    for (std::uint64_t seed : cfg.run.seeds) out.push_back(run_single(cfg, seed));
    return out;
}

RunResult resume_run(const std::string& run_dir) {
    const fs::path dir(run_dir);
    if (!fs::exists(dir / "config.toml"))
        throw InputError("resume: no config.toml in " + run_dir);
    ExperimentConfig cfg = parse_config_file((dir / "config.toml").string());
    cfg.validate();

    long best = -1;
    if (!fs::is_directory(dir / "checkpoints"))
        throw InputError("resume: no checkpoints in " + run_dir);
    for (const auto& entry : fs::directory_iterator(dir / "checkpoints")) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("ckpt-", 0) != 0) continue;
        best = std::max(best, std::strtol(name.c_str() + 5, nullptr, 10));
    }
    if (best < 0) throw InputError("resume: no checkpoints in " + run_dir);
    const CheckpointData ck =
        read_checkpoint(dir / "checkpoints" / ("ckpt-" + std::to_string(best) + ".bin"));

    if (ck.header.at("config_hash").get<std::string>() != hash_hex(config_hash(cfg)))
        throw InputError("resume: checkpoint config hash does not match config.toml; refusing");

    const std::uint64_t seed = ck.header.at("seed").get<std::uint64_t>();
    const long B = ck.header.at("round").get<long>();
    const long R = cfg.training.rounds_per_event;
    if (B % R != 0 || B <= 0 || B >= cfg.training.total_events * R)
        throw InputError("resume: checkpoint round " + std::to_string(B) +
                         " is not a valid block boundary");

    World w(cfg, seed);
    w.apply_events_until(B - R);

    const int K = ck.header.at("k").get<int>();
    const std::size_t D = ck.header.at("model_dim").get<std::size_t>();
    const std::size_t C = ck.header.at("center_dim").get<std::size_t>();
    if (D != w.model.param_dim())
        throw InputError("resume: checkpoint model dimension mismatch");
    const auto ids = ck.header.at("clients").get<std::vector<int>>();
    const auto cls = ck.header.at("client_cluster").get<std::vector<int>>();
    ClusterAssignment a;
    a.K = K;
    for (std::size_t i = 0; i < ids.size(); ++i) a.client_to_cluster[ids[i]] = cls[i];
    const auto& centers = ck.arrays.at("centers");
    for (int k = 0; k < K; ++k)
        a.centers.emplace_back(centers.begin() + k * C, centers.begin() + (k + 1) * C);
    w.state.assignment = std::move(a);

    const auto& models = ck.arrays.at("models");
    w.state.models.clear();
    for (int k = 0; k < K; ++k) {
        ModelParams m;
        m.values.assign(models.begin() + k * D, models.begin() + (k + 1) * D);
        m.round = B;
        m.cluster = k;
        w.state.models.push_back(std::move(m));
    }
    const auto& scalars = ck.arrays.at("scalars");
    w.state.round = B;
    w.state.sim_time = scalars[0];
    w.adaptive_delta = scalars[1];
    w.last_event_triggered = scalars[2] != 0.0;

    const auto& ym = ck.arrays.at("yogi_m");
    const auto& yv = ck.arrays.at("yogi_v");
    const auto& yi = ck.arrays.at("yogi_init");
    w.agg_states.assign(K, {});
    for (int k = 0; k < K; ++k) {
        if (yi[k] == 0.0) continue;
        w.agg_states[k].initialized = true;
        w.agg_states[k].m.assign(ym.begin() + k * D, ym.begin() + (k + 1) * D);
        w.agg_states[k].v.assign(yv.begin() + k * D, yv.begin() + (k + 1) * D);
    }

    const auto& last_loss = ck.arrays.at("last_loss");
    const auto& last_sel = ck.arrays.at("last_selected");
    for (std::size_t i = 0; i < w.pop.clients.size(); ++i) {
        w.pop.clients[i].profile.last_loss = last_loss[i];
        w.pop.clients[i].profile.last_selected_round = static_cast<long>(last_sel[i]);
    }
    w.selected_last_round = ck.header.at("selected_last_round").get<std::vector<int>>();

    const auto& reps = ck.arrays.at("reps");
    w.last_true_reps.resize(w.rt.size());
    for (std::size_t i = 0; i < w.rt.size(); ++i) {
        std::vector<double> v(reps.begin() + i * C, reps.begin() + (i + 1) * C);
        Representation r;
        r.client_id = static_cast<int>(i);
        r.round_collected = B - R;
        if (cfg.representation.kind == "label_histogram") {
            LabelHistogram h;
            h.probs = std::move(v);
            r.payload = std::move(h);
        } else if (cfg.representation.kind == "embedding") {
            EmbeddingVector ev;
            ev.values = std::move(v);
            r.payload = std::move(ev);
        } else {
            GradientSketch g;
            g.values = std::move(v);
            r.payload = std::move(g);
        }
        w.last_true_reps[i] = std::move(r);
    }
    // Clients with momentarily empty training views keep their previous
    // representation; seed it so that fallback matches the original run.
    w.true_reps = w.last_true_reps;

    const Retained retained = truncate_logs(run_dir, B);
    return run_from(w, run_dir, B / R, retained);
}

namespace {

std::string sanitize_dir(std::string v) {
    for (char& c : v)
        if (c == '/' || c == ' ') c = '_';
    return v;
}

std::string sanitize_csv(std::string v) {
    for (char& c : v)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return v;
}

}  // namespace

std::vector<AblationCell> run_ablation(const ExperimentConfig& base, const std::string& axis) {
    base.validate();
    std::vector<std::pair<std::string, std::string>> values;  // value label -> override value
    std::string key;
    if (axis == "tau_grid") {
        key = "policy.tau_fraction";
        values = {{"0", "0.0"},
                  {"1/6", format_double(1.0 / 6.0)},
                  {"1/3", format_double(1.0 / 3.0)},
                  {"1/2", "0.5"},
                  {"2/3", format_double(2.0 / 3.0)}};
    } else if (axis == "policy_modes") {
        key = "policy.mode";
        for (const char* m : {"hybrid", "move_individuals_only", "global_every_event",
                              "recluster_selected_only", "static"})
            values.push_back({m, std::string("\"") + m + "\""});
    } else if (axis == "representation") {
        key = "representation.kind";
        for (const char* m : {"label_histogram", "embedding", "gradient_sketch"})
            values.push_back({m, std::string("\"") + m + "\""});
    } else if (axis == "metric") {
        key = "representation.metric";
        for (const char* m : {"l1", "jensen_shannon", "squared_euclidean"})
            values.push_back({m, std::string("\"") + m + "\""});
    } else if (axis == "malicious_fraction") {
        key = "trace.malicious_fraction";
        for (const char* m : {"0.0", "0.1", "0.2", "0.3"}) values.push_back({m, m});
    } else if (axis == "shared_level") {
        key = "population.shared_level";
        for (const char* m : {"none", "half", "one", "two"})
            values.push_back({m, std::string("\"") + m + "\""});
    } else {
        throw InputError("unknown ablation axis: " + axis +
                         " (expected tau_grid, policy_modes, representation, metric, "
                         "malicious_fraction, or shared_level)");
    }

    const std::string group = base.run.name + "-ablate-" + axis;
    fs::create_directories(fs::path(output_root()) / group);
    std::vector<AblationCell> cells;
    for (const auto& [label, value] : values) {
        for (std::uint64_t seed : base.run.seeds) {
            AblationCell cell;
            cell.axis = axis;
            cell.value = label;
            cell.seed = seed;
            try {
                ExperimentConfig cfg = base;
                apply_override(cfg, key, value);
                if (axis == "policy_modes" && label == "static")
                    cfg.policy.initial_clusters = 1;
                cfg.run.seeds = {seed};
                cfg.run.output_dir = group + "/" + sanitize_dir(label) + "-seed" +
                                     std::to_string(seed);
                cell.result = run_single(cfg, seed);
                cell.ok = true;
            } catch (const std::exception& e) {
                cell.ok = false;
                cell.error = e.what();
            }
            cells.push_back(std::move(cell));
        }
    }

    std::ofstream out(fs::path(output_root()) / group / "ablation.csv", std::ios::trunc);
    out << "# config_hash=" << hash_hex(config_hash(base)) << "\n";
    out << "axis,value,seed,status,final_accuracy";
    for (double target : base.run.eval_targets) out << ",tta_s_" << format_double(target);
    out << ",recluster_events,final_k,run_dir,error\n";
    for (const AblationCell& c : cells) {
        out << c.axis << ',' << c.value << ',' << c.seed << ',' << (c.ok ? "ok" : "failed")
            << ',';
        if (c.ok) out << format_double(c.result.final_accuracy);
        for (std::size_t i = 0; i < base.run.eval_targets.size(); ++i) {
            out << ',';
            if (c.ok && i < c.result.tta_s.size() && c.result.tta_s[i].second)
                out << format_double(*c.result.tta_s[i].second);
        }
        out << ',';
        if (c.ok) out << c.result.recluster_events;
        out << ',';
        if (c.ok) out << c.result.final_k;
        out << ',' << sanitize_csv(c.result.run_dir) << ',' << sanitize_csv(c.error) << "\n";
    }
    return cells;
}

void write_report(const std::string& run_dir, std::ostream& out) {
    std::ifstream in(fs::path(run_dir) / "rounds.csv");
    if (!in) throw InputError("report: missing rounds.csv in " + run_dir);
    std::string line;
    std::vector<int> pick;
    bool header_done = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            out << line << "\n";
            continue;
        }
        std::vector<std::string> f;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                f.push_back(cur);
                cur.clear();
            } else cur += c;
        }
        f.push_back(cur);
        if (!header_done) {
            const char* want[] = {"round", "sim_time_s", "mean_accuracy",
                                  "mean_client_distance", "global_mean_distance"};
            for (const char* col : want) {
                const auto it = std::find(f.begin(), f.end(), col);
                if (it == f.end())
                    throw InputError(std::string("report: rounds.csv lacks column ") + col);
                pick.push_back(static_cast<int>(it - f.begin()));
            }
            out << "round,sim_time_s,mean_accuracy,mean_client_distance,global_mean_distance\n";
            header_done = true;
            continue;
        }
        for (std::size_t i = 0; i < pick.size(); ++i) {
            if (i) out << ',';
            out << f[pick[i]];
        }
        out << "\n";
    }
    if (!header_done) throw InputError("report: rounds.csv is empty in " + run_dir);
}

}  // namespace cflsim
