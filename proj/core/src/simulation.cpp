#include "cflsim/simulation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "cflsim/errors.hpp"

namespace cflsim {

namespace {

int categorical(rng::Stream& stream, std::span<const double> probs) {
    const double u = stream.next_double();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
}

Sample draw_sample(rng::Stream& stream, const SyntheticTask& task, const Concept& con,
                   std::span<const double> prior) {
    int label = categorical(stream, prior);
    const std::vector<double>& mean = task.blob_means[con.blob_of_label[label]];
    Sample s;
    s.x.resize(task.input_dim);
    for (int d = 0; d < task.input_dim; ++d)
        s.x[d] = mean[d] + task.blob_sigma * stream.next_normal();
    if (task.label_noise > 0.0 && stream.next_double() < task.label_noise)
        label = static_cast<int>(stream.next_below(task.num_labels));
    s.label = label;
    return s;
}

std::vector<double> normalized(std::vector<double> w) {
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& v : w) v /= total;
    return w;
}

}  // namespace

double sample_gamma(rng::Stream& stream, double shape) {
    if (shape <= 0.0) throw InputError("sample_gamma: shape must be positive");
    if (shape < 1.0) {
        const double g = sample_gamma(stream, shape + 1.0);
        double u = stream.next_double();
        while (u <= 0.0) u = stream.next_double();
        return g * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x;
        double v;
        do {
            x = stream.next_normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = stream.next_double();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

std::vector<double> sample_dirichlet(rng::Stream& stream, std::span<const double> alpha) {
    std::vector<double> out(alpha.size());
    double total = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        out[i] = sample_gamma(stream, alpha[i]);
        total += out[i];
    }
    if (total <= 0.0) {
        std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(out.size()));
        return out;
    }
    for (double& v : out) v /= total;
    return out;
}

SyntheticTask make_synthetic_task(int num_labels, int input_dim, int k_true,
                                  double within_weight, double outside_weight,
                                  double blob_sigma, double label_noise,
                                  std::uint64_t seed) {
    if (num_labels < 1) throw InputError("make_synthetic_task: num_labels must be >= 1");
    if (input_dim < 1) throw InputError("make_synthetic_task: input_dim must be >= 1");
    if (k_true < 1) throw InputError("make_synthetic_task: k_true must be >= 1");
    if (within_weight <= 0.0 || outside_weight <= 0.0)
        throw InputError("make_synthetic_task: label-prior weights must be positive");

    SyntheticTask task;
    task.num_labels = num_labels;
    task.input_dim = input_dim;
    task.k_true = k_true;
    task.label_noise = label_noise;
    task.blob_sigma = blob_sigma;
    task.within_weight = within_weight;
    task.outside_weight = outside_weight;

    for (int c = 0; c < k_true; ++c) {
        Concept con;
        std::vector<double> w(num_labels, outside_weight);
        for (int l = 0; l < num_labels; ++l)
            if (l % k_true == c) w[l] = within_weight;
        con.label_prior = normalized(std::move(w));
        con.blob_of_label.resize(num_labels);
        for (int l = 0; l < num_labels; ++l)
            con.blob_of_label[l] = (l + 3 * c) % num_labels;
        task.concepts.push_back(std::move(con));
    }
    // Shifted concepts use contiguous label blocks, so each one overlaps
    // several of the original residue-class concepts at once.
    for (int c = 0; c < k_true; ++c) {
        Concept con;
        std::vector<double> w(num_labels, outside_weight);
        for (int l = 0; l < num_labels; ++l)
            if (static_cast<long>(l) * k_true / num_labels == c) w[l] = within_weight;
        con.label_prior = normalized(std::move(w));
        con.blob_of_label.resize(num_labels);
        for (int l = 0; l < num_labels; ++l)
            con.blob_of_label[l] = (l + 3 * c + 1) % num_labels;
        task.shifted_concepts.push_back(std::move(con));
    }

    auto stream = rng::make_stream(seed, "blobs");
    task.blob_means.resize(num_labels);
    for (int l = 0; l < num_labels; ++l) {
        task.blob_means[l].resize(input_dim);
        for (int d = 0; d < input_dim; ++d) task.blob_means[l][d] = stream.next_normal();
    }
    return task;
}

std::vector<int> Population::ground_truth() const {
    std::vector<int> out;
    out.reserve(clients.size());
    for (const SimClient& c : clients) out.push_back(c.concept0);
    return out;
}

Population generate_population(const SyntheticTask& task, int num_clients,
                               int samples_per_client, double dirichlet_alpha,
                               std::uint64_t seed, int concept_rotation) {
    if (num_clients < task.k_true)
        throw InputError("generate_population: need num_clients >= k_true");
    if (samples_per_client < 1)
        throw InputError("generate_population: samples_per_client must be >= 1");
    if (dirichlet_alpha <= 0.0)
        throw InputError("generate_population: dirichlet_alpha must be positive");

    Population pop;
    pop.task = task;
    pop.clients.resize(num_clients);

    const double conc_scale = dirichlet_alpha * task.k_true * task.num_labels;
    auto profile_stream = rng::make_stream(seed, "profiles");
    static constexpr double kBwUp[] = {0.25e6, 0.5e6, 1e6, 2e6};
    static constexpr double kBwDown[] = {0.5e6, 1e6, 2e6, 4e6};

    for (int i = 0; i < num_clients; ++i) {
        SimClient& cl = pop.clients[i];
        cl.client_id = i;
        cl.concept0 = i % task.k_true;
        cl.concept1 = (cl.concept0 + concept_rotation) % task.k_true;

        auto prior_stream = rng::make_stream(seed, "priors", static_cast<std::uint64_t>(i));
        std::vector<double> conc(task.num_labels);
        for (int l = 0; l < task.num_labels; ++l)
            conc[l] = conc_scale * task.concepts[cl.concept0].label_prior[l];
        cl.prior0 = sample_dirichlet(prior_stream, conc);
        for (int l = 0; l < task.num_labels; ++l)
            conc[l] = conc_scale * task.shifted_concepts[cl.concept1].label_prior[l];
        cl.prior1 = sample_dirichlet(prior_stream, conc);

        auto data_stream = rng::make_stream(seed, "client_data", static_cast<std::uint64_t>(i));
        cl.pool.reserve(samples_per_client);
        for (int s = 0; s < samples_per_client; ++s)
            cl.pool.push_back(draw_sample(data_stream, task, task.concepts[cl.concept0],
                                          cl.prior0));

        cl.profile.client_id = i;
        cl.profile.data_size = samples_per_client;
        cl.profile.last_loss = std::log(static_cast<double>(task.num_labels));
        cl.profile.device_speed = 100.0 * std::exp(0.5 * profile_stream.next_normal());
        cl.profile.bw_up = kBwUp[profile_stream.next_below(4)];
        cl.profile.bw_down = kBwDown[profile_stream.next_below(4)];
    }
    return pop;
}

std::string to_string(TraceEventKind k) {
    switch (k) {
        case TraceEventKind::ArriveBucket: return "arrive_bucket";
        case TraceEventKind::Retire: return "retire";
        case TraceEventKind::SwapLabels: return "swap_labels";
        default: return "permute_reported_histogram";
    }
}

ShiftPlan make_shift_plan(int num_clients, long at_round, double fraction,
                          std::span<const long> wave_rounds, std::uint64_t seed) {
    ShiftPlan plan;
    plan.switch_round.assign(num_clients, -1);
    if (fraction <= 0.0) return plan;
    if (wave_rounds.empty() && at_round < 0) return plan;

    std::vector<int> order(num_clients);
    std::iota(order.begin(), order.end(), 0);
    auto stream = rng::make_stream(seed, "shift_plan");
    stream.shuffle(order);
    const long n = std::min<long>(num_clients, std::llround(fraction * num_clients));
    for (long i = 0; i < n; ++i) {
        plan.switch_round[order[i]] =
            wave_rounds.empty() ? at_round : wave_rounds[i % wave_rounds.size()];
    }
    return plan;
}

namespace {

struct Bucket {
    long nominal = 0;  // can be negative for warmup data
    std::vector<int> ids;
};

void emit_bucket_events(DriftTrace& trace, int client_id, const Bucket& bucket,
                        long retention) {
    if (bucket.ids.empty()) return;
    const long retire_round = bucket.nominal + retention;
    if (retention > 0 && retire_round <= 0) return;
    TraceEvent arrive;
    arrive.round = std::max<long>(0, bucket.nominal);
    arrive.client_id = client_id;
    arrive.kind = TraceEventKind::ArriveBucket;
    arrive.sample_ids = bucket.ids;
    trace.events.push_back(std::move(arrive));
    if (retention > 0) {
        TraceEvent retire;
        retire.round = retire_round;
        retire.client_id = client_id;
        retire.kind = TraceEventKind::Retire;
        retire.sample_ids = bucket.ids;
        trace.events.push_back(std::move(retire));
    }
}

std::vector<int> nonshared_ids(const SimClient& cl) {
    std::unordered_set<int> shared(cl.shared_ids.begin(), cl.shared_ids.end());
    std::vector<int> ids;
    ids.reserve(cl.pool.size());
    for (int i = 0; i < static_cast<int>(cl.pool.size()); ++i)
        if (!shared.count(i)) ids.push_back(i);
    return ids;
}

void emit_shared_arrival(DriftTrace& trace, const SimClient& cl) {
    if (cl.shared_ids.empty()) return;
    TraceEvent ev;
    ev.round = 0;
    ev.client_id = cl.client_id;
    ev.kind = TraceEventKind::ArriveBucket;
    ev.sample_ids = cl.shared_ids;
    trace.events.push_back(std::move(ev));
}

void sort_events(DriftTrace& trace) {
    std::stable_sort(trace.events.begin(), trace.events.end(),
                     [](const TraceEvent& a, const TraceEvent& b) { return a.round < b.round; });
}

}  // namespace

DriftTrace build_interval_trace(Population& pop, int num_intervals, long rounds_between,
                                long retention_rounds, long warmup_rounds_of_data,
                                const ShiftPlan& shift, std::uint64_t seed) {
    if (num_intervals < 1) throw InputError("build_interval_trace: num_intervals must be >= 1");
    if (rounds_between < 1) throw InputError("build_interval_trace: rounds_between must be >= 1");

    DriftTrace trace;
    trace.retention_rounds = retention_rounds;
    trace.warmup_rounds_of_data = warmup_rounds_of_data;
    trace.horizon_rounds = (num_intervals - 1) * rounds_between + std::max<long>(retention_rounds, 0);

    if (num_intervals == 1) {
        for (const SimClient& cl : pop.clients) {
            emit_shared_arrival(trace, cl);
            Bucket all;
            all.ids = nonshared_ids(cl);
            emit_bucket_events(trace, cl.client_id, all, 0);
        }
        sort_events(trace);
        return trace;
    }

    const int warm = static_cast<int>(warmup_rounds_of_data / rounds_between);
    const int total_buckets = warm + num_intervals;

    for (SimClient& cl : pop.clients) {
        emit_shared_arrival(trace, cl);
        const std::vector<int> ids = nonshared_ids(cl);
        const std::size_t n = ids.size();
        const long switch_round = cl.client_id < static_cast<int>(shift.switch_round.size())
                                      ? shift.switch_round[cl.client_id]
                                      : -1;
        auto regen_stream =
            rng::make_stream(seed, "shift_regen", static_cast<std::uint64_t>(cl.client_id));
        for (int b = 0; b < total_buckets; ++b) {
            Bucket bucket;
            bucket.nominal = static_cast<long>(b - warm) * rounds_between;
            const std::size_t lo = n * b / total_buckets;
            const std::size_t hi = n * (b + 1) / total_buckets;
            bucket.ids.assign(ids.begin() + lo, ids.begin() + hi);
            if (switch_round >= 0 && bucket.nominal >= switch_round) {
                for (int id : bucket.ids)
                    cl.pool[id] = draw_sample(regen_stream, pop.task,
                                              pop.task.shifted_concepts[cl.concept1], cl.prior1);
            }
            emit_bucket_events(trace, cl.client_id, bucket, retention_rounds);
        }
    }
    sort_events(trace);
    return trace;
}

DriftTrace build_label_bucket_trace(Population& pop, int num_buckets, long rounds_between,
                                    long retention_rounds, long warmup_rounds_of_data,
                                    std::uint64_t seed) {
    if (num_buckets < 1) throw InputError("build_label_bucket_trace: num_buckets must be >= 1");
    if (rounds_between < 1)
        throw InputError("build_label_bucket_trace: rounds_between must be >= 1");

    DriftTrace trace;
    trace.retention_rounds = retention_rounds;
    trace.warmup_rounds_of_data = warmup_rounds_of_data;
    trace.horizon_rounds =
        (num_buckets - 1) * rounds_between + std::max<long>(retention_rounds, 0);
    const int warm = static_cast<int>(warmup_rounds_of_data / rounds_between);

    for (const SimClient& cl : pop.clients) {
        emit_shared_arrival(trace, cl);
        auto stream =
            rng::make_stream(seed, "label_buckets", static_cast<std::uint64_t>(cl.client_id));
        std::vector<int> labels(pop.task.num_labels);
        std::iota(labels.begin(), labels.end(), 0);
        stream.shuffle(labels);
        std::vector<int> bucket_of_label(pop.task.num_labels);
        for (int i = 0; i < pop.task.num_labels; ++i)
            bucket_of_label[labels[i]] = i % num_buckets;

        std::vector<Bucket> buckets(num_buckets);
        for (int b = 0; b < num_buckets; ++b)
            buckets[b].nominal = static_cast<long>(b - warm) * rounds_between;
        const std::vector<int> ids = nonshared_ids(cl);
        for (int id : ids) buckets[bucket_of_label[cl.pool[id].label]].ids.push_back(id);
        for (const Bucket& b : buckets)
            emit_bucket_events(trace, cl.client_id, b, retention_rounds);
    }
    sort_events(trace);
    return trace;
}

DriftTrace build_static_trace(const Population& pop, long horizon_rounds) {
    DriftTrace trace;
    trace.retention_rounds = 0;
    trace.warmup_rounds_of_data = 0;
    trace.horizon_rounds = horizon_rounds;
    for (const SimClient& cl : pop.clients) {
        emit_shared_arrival(trace, cl);
        Bucket all;
        all.ids = nonshared_ids(cl);
        emit_bucket_events(trace, cl.client_id, all, 0);
    }
    sort_events(trace);
    return trace;
}

void build_concept_drift_events(DriftTrace& trace, const Population& pop, double fraction,
                                std::span<const long> at_rounds, std::uint64_t seed) {
    if (fraction <= 0.0 || at_rounds.empty()) return;
    if (pop.task.num_labels < 2)
        throw InputError("build_concept_drift_events: need at least two labels to swap");
    const int n_clients = static_cast<int>(pop.clients.size());
    const long n_pick = std::min<long>(n_clients, std::llround(fraction * n_clients));

    for (long round : at_rounds) {
        auto stream = rng::make_stream(seed, "concept_drift", static_cast<std::uint64_t>(round));
        std::vector<int> order(n_clients);
        std::iota(order.begin(), order.end(), 0);
        stream.shuffle(order);
        for (long i = 0; i < n_pick; ++i) {
            TraceEvent ev;
            ev.round = round;
            ev.client_id = order[i];
            ev.kind = TraceEventKind::SwapLabels;
            ev.label_a = static_cast<int>(stream.next_below(pop.task.num_labels));
            ev.label_b = static_cast<int>(stream.next_below(pop.task.num_labels - 1));
            if (ev.label_b >= ev.label_a) ++ev.label_b;
            trace.events.push_back(std::move(ev));
        }
    }
    sort_events(trace);
}

void apply_malicious(DriftTrace& trace, const Population& pop, double fraction,
                     std::uint64_t seed) {
    if (fraction <= 0.0) return;
    if (pop.task.num_labels < 2)
        throw InputError("apply_malicious: need at least two labels to permute");
    const int n_clients = static_cast<int>(pop.clients.size());
    const long n_pick = std::min<long>(n_clients, std::llround(fraction * n_clients));

    auto stream = rng::make_stream(seed, "malicious");
    std::vector<int> order(n_clients);
    std::iota(order.begin(), order.end(), 0);
    stream.shuffle(order);
    for (long i = 0; i < n_pick; ++i) {
        std::vector<int> perm(pop.task.num_labels);
        std::iota(perm.begin(), perm.end(), 0);
        stream.shuffle(perm);
        bool identity = true;
        for (int l = 0; l < pop.task.num_labels; ++l)
            if (perm[l] != l) { identity = false; break; }
        if (identity) std::rotate(perm.begin(), perm.begin() + 1, perm.end());
        TraceEvent ev;
        ev.round = 0;
        ev.client_id = order[i];
        ev.kind = TraceEventKind::PermuteReportedHistogram;
        ev.permutation = std::move(perm);
        trace.events.push_back(std::move(ev));
    }
    sort_events(trace);
}

SharedLevel shared_level_from_string(const std::string& s) {
    if (s == "none") return SharedLevel::None;
    if (s == "half") return SharedLevel::Half;
    if (s == "one") return SharedLevel::One;
    if (s == "two") return SharedLevel::Two;
    throw InputError("unknown shared-dataset level: " + s);
}

std::string to_string(SharedLevel l) {
    switch (l) {
        case SharedLevel::None: return "none";
        case SharedLevel::Half: return "half";
        case SharedLevel::One: return "one";
        default: return "two";
    }
}

void inject_shared_dataset(Population& pop, SharedLevel level, std::uint64_t seed) {
    if (level == SharedLevel::None) return;
    const int L = pop.task.num_labels;
    if (L < 1) throw InputError("inject_shared_dataset: task has no labels");

    // One canonical per-label sample set, identical for every client.
    auto stream = rng::make_stream(seed, "shared_dataset");
    std::vector<std::array<Sample, 2>> canonical(L);
    for (int l = 0; l < L; ++l) {
        for (int j = 0; j < 2; ++j) {
            Sample s;
            s.label = l;
            s.x.resize(pop.task.input_dim);
            for (int d = 0; d < pop.task.input_dim; ++d)
                s.x[d] = pop.task.blob_means[l][d] + pop.task.blob_sigma * stream.next_normal();
            canonical[l][j] = std::move(s);
        }
    }

    for (SimClient& cl : pop.clients) {
        std::vector<int> labels_to_add;
        if (level == SharedLevel::Half) {
            std::vector<long> counts(L, 0);
            for (const Sample& s : cl.pool) ++counts[s.label];
            std::vector<int> order(L);
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                if (counts[a] != counts[b]) return counts[a] < counts[b];
                return a < b;
            });
            labels_to_add.assign(order.begin(), order.begin() + L / 2);
        } else {
            labels_to_add.resize(L);
            std::iota(labels_to_add.begin(), labels_to_add.end(), 0);
        }
        const int copies = level == SharedLevel::Two ? 2 : 1;
        for (int l : labels_to_add) {
            for (int j = 0; j < copies; ++j) {
                cl.shared_ids.push_back(static_cast<int>(cl.pool.size()));
                cl.pool.push_back(canonical[l][j]);
            }
        }
        cl.profile.data_size = static_cast<long>(cl.pool.size());
    }
}

double expected_client_time(const ClientProfile& p, const DeviceTimeModel& tm,
                            int local_steps, int batch_size) {
    if (p.device_speed <= 0.0 || p.bw_up <= 0.0 || p.bw_down <= 0.0)
        throw InputError("expected_client_time: device rates must be positive");
    const double compute = static_cast<double>(local_steps) * batch_size / p.device_speed;
    return tm.model_bytes / p.bw_down + compute + tm.model_bytes / p.bw_up;
}

RoundTime simulate_round_time(std::span<const ClientProfile* const> selected,
                              const DeviceTimeModel& tm, int local_steps, int batch_size) {
    RoundTime rt;
    for (const ClientProfile* p : selected) {
        const double t = expected_client_time(*p, tm, local_steps, batch_size);
        if (tm.round_deadline_s > 0.0 && t > tm.round_deadline_s)
            rt.dropped.push_back(p->client_id);
        rt.round_time_s = std::max(rt.round_time_s, t);
    }
    if (tm.round_deadline_s > 0.0)
        rt.round_time_s = std::min(rt.round_time_s, tm.round_deadline_s);
    return rt;
}

std::optional<double> time_to_accuracy(std::span<const AccuracyPoint> records,
                                       double target_accuracy) {
    std::size_t idx = records.size();
    for (std::size_t i = records.size(); i-- > 0;) {
        if (records[i].accuracy >= target_accuracy)
            idx = i;
        else
            break;
    }
    if (idx == records.size()) return std::nullopt;
    return records[idx].sim_time_s;
}

std::vector<ClientProfile> load_device_profiles(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("load_device_profiles: cannot open " + path);
    std::vector<ClientProfile> out;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty() || line.front() == '#') continue;
        std::istringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (first) {
            first = false;
            if (!fields.empty() && fields[0].find_first_not_of("0123456789 \t") !=
                                       std::string::npos)
                continue;  // header row
        }
        if (fields.size() != 4)
            throw InputError("load_device_profiles: expected 4 columns, got line: " + line);
        ClientProfile p;
        try {
            p.client_id = std::stoi(fields[0]);
            p.device_speed = std::stod(fields[1]);
            p.bw_up = std::stod(fields[2]);
            p.bw_down = std::stod(fields[3]);
        } catch (const std::exception&) {
            throw InputError("load_device_profiles: malformed row: " + line);
        }
        if (p.device_speed <= 0.0 || p.bw_up <= 0.0 || p.bw_down <= 0.0)
            throw InputError("load_device_profiles: rates must be positive: " + line);
        out.push_back(p);
    }
    return out;
}

}  // namespace cflsim
