#include <algorithm>
#include <cmath>
#include <vector>

#include "cflsim/errors.hpp"
#include "cflsim/rng.hpp"
#include "cflsim/training.hpp"
#include "doctest.h"

using namespace cflsim;

namespace {

std::vector<Sample> random_samples(rng::Stream& s, int n, int input_dim, int num_labels) {
    std::vector<Sample> out(n);
    for (Sample& smp : out) {
        smp.x.resize(input_dim);
        for (double& v : smp.x) v = s.next_normal();
        smp.label = static_cast<int>(s.next_below(num_labels));
    }
    return out;
}

ModelParams params(std::vector<double> v) {
    ModelParams p;
    p.values = std::move(v);
    return p;
}

Representation hist(std::vector<double> probs, int client_id) {
    Representation r;
    r.payload = LabelHistogram{std::move(probs), 10};
    r.client_id = client_id;
    return r;
}

}  // namespace

TEST_CASE("a single local step is one explicit gradient step") {
    TaskModel model(ModelKind::Softmax, 3, 2);
    rng::Stream gen(1);
    const auto data = random_samples(gen, 1, 2, 3);
    TrainingConfig cfg;
    cfg.eta = 0.1;
    cfg.local_steps = 1;
    cfg.batch_size = 4;  // with one sample every batch is that sample
    ModelParams start = model.zero_params();
    for (double& v : start.values) v = 0.2 * gen.next_normal();

    auto stream = rng::make_stream(7, "local", 0, 0);
    const ModelParams got = local_update(start, data, cfg, model, stream, 0, 0);

    std::vector<double> grad;
    model.loss_and_grad(start.values, data, grad);
    for (std::size_t d = 0; d < start.values.size(); ++d)
        CHECK(got.values[d] ==
              doctest::Approx(start.values[d] - 0.1 * grad[d]).epsilon(1e-12));
}

TEST_CASE("FedProx with zero mu matches the plain local step") {
    TaskModel model(ModelKind::Softmax, 4, 3);
    rng::Stream gen(2);
    const auto data = random_samples(gen, 30, 3, 4);
    const ModelParams start = model.zero_params();

    TrainingConfig avg;
    avg.aggregation = Aggregation::FedAvg;
    avg.local_steps = 5;
    avg.batch_size = 8;
    TrainingConfig prox = avg;
    prox.aggregation = Aggregation::FedProx;
    prox.mu_prox = 0.0;

    auto s1 = rng::make_stream(9, "local", 3, 1);
    auto s2 = rng::make_stream(9, "local", 3, 1);
    const ModelParams a = local_update(start, data, avg, model, s1, 1, 3);
    const ModelParams b = local_update(start, data, prox, model, s2, 1, 3);
    CHECK(a.values == b.values);
}

TEST_CASE("local_update matches a step-by-step reference recurrence") {
    TaskModel model(ModelKind::Softmax, 4, 3);
    rng::Stream gen(9);
    const auto data = random_samples(gen, 100, 3, 4);
    TrainingConfig cfg;
    cfg.eta = 0.05;
    cfg.local_steps = 20;
    cfg.batch_size = 20;
    const ModelParams start = model.zero_params();

    auto stream = rng::make_stream(11, "local", 5, 2);
    const ModelParams got = local_update(start, data, cfg, model, stream, 2, 5);

    auto ref_stream = rng::make_stream(11, "local", 5, 2);
    std::vector<double> x = start.values;
    std::vector<double> grad;
    for (int step = 0; step < cfg.local_steps; ++step) {
        std::vector<Sample> batch;
        for (int b = 0; b < cfg.batch_size; ++b)
            batch.push_back(data[ref_stream.next_below(data.size())]);
        model.loss_and_grad(x, batch, grad);
        for (std::size_t d = 0; d < x.size(); ++d) x[d] -= cfg.eta * grad[d];
    }
    CHECK(got.values == x);
}

TEST_CASE("local_update requires data") {
    TaskModel model(ModelKind::Softmax, 3, 2);
    TrainingConfig cfg;
    auto stream = rng::make_stream(1, "local", 0, 0);
    std::vector<Sample> none;
    CHECK_THROWS_AS(local_update(model.zero_params(), none, cfg, model, stream, 0, 0),
                    InputError);
}

TEST_CASE("FedAvg aggregation is the unweighted mean") {
    TrainingConfig cfg;
    cfg.aggregation = Aggregation::FedAvg;
    AggregatorState st;
    const std::vector<ModelParams> clients = {params({1, 3}), params({3, 1})};
    const ModelParams out = aggregate(params({0, 0}), clients, {}, cfg, st);
    CHECK(out.values == std::vector<double>{2, 2});
}

TEST_CASE("aggregate validates inputs") {
    TrainingConfig cfg;
    AggregatorState st;
    const std::vector<ModelParams> none;
    CHECK_THROWS_AS(aggregate(params({0, 0}), none, {}, cfg, st), InputError);
    const std::vector<ModelParams> bad = {params({1, 2, 3})};
    CHECK_THROWS_AS(aggregate(params({0, 0}), bad, {}, cfg, st), InputError);
    cfg.aggregation = Aggregation::QFedAvg;
    const std::vector<ModelParams> one = {params({1, 2})};
    CHECK_THROWS_AS(aggregate(params({0, 0}), one, {}, cfg, st), InputError);
}

TEST_CASE("FedYogi leaves the model alone when deltas are zero") {
    TrainingConfig cfg;
    cfg.aggregation = Aggregation::FedYogi;
    AggregatorState st;
    const ModelParams cluster = params({0.5, -0.5});
    const std::vector<ModelParams> clients = {cluster, cluster};
    const ModelParams out = aggregate(cluster, clients, {}, cfg, st);
    CHECK(out.values[0] == doctest::Approx(0.5));
    CHECK(out.values[1] == doctest::Approx(-0.5));
}

TEST_CASE("FedYogi with zero server rate is a fixed point") {
    TrainingConfig cfg;
    cfg.aggregation = Aggregation::FedYogi;
    cfg.yogi_eta_server = 0.0;
    AggregatorState st;
    const ModelParams cluster = params({1.0, 2.0});
    const std::vector<ModelParams> clients = {params({0.0, 0.0}), params({4.0, 2.0})};
    const ModelParams out = aggregate(cluster, clients, {}, cfg, st);
    CHECK(out.values == cluster.values);
}

TEST_CASE("FedYogi moves toward the client mean") {
    TrainingConfig cfg;
    cfg.aggregation = Aggregation::FedYogi;
    AggregatorState st;
    const ModelParams cluster = params({0.0, 0.0});
    const std::vector<ModelParams> clients = {params({1.0, -1.0})};
    const ModelParams out = aggregate(cluster, clients, {}, cfg, st);
    CHECK(out.values[0] > 0.0);
    CHECK(out.values[1] < 0.0);
}

TEST_CASE("q-FedAvg at q=0 reduces exactly to FedAvg") {
    TrainingConfig q0;
    q0.aggregation = Aggregation::QFedAvg;
    q0.qfedavg_q = 0.0;
    q0.eta = 0.05;
    TrainingConfig avg;
    avg.aggregation = Aggregation::FedAvg;
    AggregatorState s1, s2;
    const ModelParams cluster = params({0.4, -0.2, 1.0});
    const std::vector<ModelParams> clients = {params({1.0, 0.0, 0.5}),
                                              params({0.0, 0.5, 1.5}),
                                              params({-1.0, 1.0, 1.0})};
    const std::vector<double> losses = {2.0, 0.5, 1.0};
    const ModelParams a = aggregate(cluster, clients, losses, q0, s1);
    const ModelParams b = aggregate(cluster, clients, losses, avg, s2);
    for (std::size_t d = 0; d < a.values.size(); ++d)
        CHECK(a.values[d] == doctest::Approx(b.values[d]).epsilon(1e-12));
}

TEST_CASE("q-FedAvg weights high-loss clients more as q grows") {
    TrainingConfig cfg;
    cfg.aggregation = Aggregation::QFedAvg;
    cfg.qfedavg_q = 2.0;
    cfg.eta = 0.1;
    AggregatorState st;
    const ModelParams cluster = params({0.0});
    const std::vector<ModelParams> clients = {params({1.0}), params({-1.0})};
    const std::vector<double> losses = {4.0, 0.25};
    const ModelParams out = aggregate(cluster, clients, losses, cfg, st);
    CHECK(out.values[0] > 0.0);  // pulled toward the lossy client's model
}

TEST_CASE("round budgets floor at one and favor large clusters") {
    CHECK(round_budgets(std::vector<long>{5, 5, 5}, 10) == std::vector<int>{4, 3, 3});
    CHECK(round_budgets(std::vector<long>{10, 30, 20}, 20) == std::vector<int>{6, 7, 7});
    CHECK(round_budgets(std::vector<long>{4, 4, 4}, 2) == std::vector<int>{1, 1, 1});
    CHECK(round_budgets(std::vector<long>{}, 10).empty());
    CHECK(round_budgets(std::vector<long>{7}, 10) == std::vector<int>{10});
}

namespace {

struct MiniWorld {
    TaskModel model{ModelKind::Softmax, 3, 2};
    std::vector<std::vector<Sample>> data;
    std::vector<ClientProfile> profiles;
    std::vector<Representation> reps;
    ClusterState state;
    DeviceTimeModel tm{50000.0, 1e9};

    MiniWorld(int n, int samples_each, std::uint64_t seed) {
        rng::Stream s(seed);
        for (int i = 0; i < n; ++i) {
            data.push_back(random_samples(s, samples_each, 2, 3));
            ClientProfile p;
            p.client_id = i;
            p.data_size = samples_each;
            p.last_loss = 1.0;
            profiles.push_back(p);
            reps.push_back(hist({0.4, 0.3, 0.3}, i));
            state.assignment.client_to_cluster[i] = 0;
        }
        state.assignment.K = 1;
        state.assignment.centers = {{0.4, 0.3, 0.3}};
        state.models = {model.zero_params()};
    }

    std::vector<ClientView> members() const {
        std::vector<ClientView> out;
        for (std::size_t i = 0; i < data.size(); ++i)
            out.push_back(ClientView{static_cast<int>(i), data[i], &profiles[i], &reps[i]});
        return out;
    }
};

}  // namespace

TEST_CASE("a singleton cluster always trains its only member") {
    MiniWorld w(1, 10, 3);
    TrainingConfig cfg;
    cfg.local_steps = 2;
    cfg.batch_size = 4;
    SelectorContext sel;
    AggregatorState agg;
    const auto members = w.members();
    const ModelParams start = w.state.models[0];
    const RoundFragment frag = run_cluster_round(0, w.state, members, 1, cfg, w.model, sel,
                                                 w.tm, agg, 99, 0);
    CHECK(frag.selected == std::vector<int>{0});
    auto stream = rng::make_stream(99, "local", 0, 0);
    const ModelParams want = local_update(start, w.data[0], cfg, w.model, stream, 0, 0);
    CHECK(w.state.models[0].values == want.values);
}

TEST_CASE("identical single-sample clients aggregate to any one client's update") {
    MiniWorld w(4, 1, 5);
    for (int i = 1; i < 4; ++i) w.data[i] = w.data[0];
    TrainingConfig cfg;
    cfg.local_steps = 3;
    cfg.batch_size = 2;
    SelectorContext sel;
    AggregatorState agg;
    const auto members = w.members();
    const ModelParams start = w.state.models[0];
    run_cluster_round(0, w.state, members, 4, cfg, w.model, sel, w.tm, agg, 1, 0);
    auto stream = rng::make_stream(1, "local", 0, 0);
    const ModelParams want = local_update(start, w.data[0], cfg, w.model, stream, 0, 0);
    for (std::size_t d = 0; d < want.values.size(); ++d)
        CHECK(w.state.models[0].values[d] == doctest::Approx(want.values[d]).epsilon(1e-12));
}

TEST_CASE("selection replays identically for a fixed seed") {
    MiniWorld w1(5, 8, 7), w2(5, 8, 7);
    TrainingConfig cfg;
    cfg.local_steps = 1;
    cfg.batch_size = 4;
    SelectorContext sel;
    AggregatorState a1, a2;
    const RoundFragment f1 = run_cluster_round(0, w1.state, w1.members(), 2, cfg, w1.model,
                                               sel, w1.tm, a1, 42, 6);
    const RoundFragment f2 = run_cluster_round(0, w2.state, w2.members(), 2, cfg, w2.model,
                                               sel, w2.tm, a2, 42, 6);
    CHECK(f1.selected == f2.selected);
    CHECK(f1.selected.size() == 2);
    CHECK(w1.state.models[0].values == w2.state.models[0].values);
}

TEST_CASE("stragglers past the deadline are dropped from aggregation") {
    MiniWorld w(2, 10, 8);
    w.profiles[1].device_speed = 1e-6;  // hours per sample
    w.tm.round_deadline_s = 5.0;
    TrainingConfig cfg;
    cfg.local_steps = 2;
    cfg.batch_size = 4;
    SelectorContext sel;
    AggregatorState agg;
    const ModelParams start = w.state.models[0];
    const RoundFragment frag = run_cluster_round(0, w.state, w.members(), 2, cfg, w.model,
                                                 sel, w.tm, agg, 4, 0);
    CHECK(frag.dropped == std::vector<int>{1});
    CHECK(frag.round_time_s == doctest::Approx(5.0));
    auto stream = rng::make_stream(4, "local", 0, 0);
    const ModelParams want = local_update(start, w.data[0], cfg, w.model, stream, 0, 0);
    CHECK(w.state.models[0].values == want.values);
}

TEST_CASE("diverging clients are excluded and reported") {
    MiniWorld w(2, 1, 9);
    for (Sample& s : w.data[1])
        for (double& v : s.x) v = 1e200;
    TrainingConfig cfg;
    cfg.eta = 1.0;
    cfg.local_steps = 3;
    cfg.batch_size = 1;
    SelectorContext sel;
    AggregatorState agg;
    const ModelParams start = w.state.models[0];
    const RoundFragment frag = run_cluster_round(0, w.state, w.members(), 2, cfg, w.model,
                                                 sel, w.tm, agg, 12, 0);
    CHECK(frag.diverged == std::vector<int>{1});
    auto stream = rng::make_stream(12, "local", 0, 0);
    const ModelParams want = local_update(start, w.data[0], cfg, w.model, stream, 0, 0);
    CHECK(w.state.models[0].values == want.values);
}

TEST_CASE("run_event_block executes R rounds with one aggregation each") {
    MiniWorld w(3, 6, 10);
    TrainingConfig cfg;
    cfg.local_steps = 1;
    cfg.batch_size = 3;
    cfg.participants_per_round = 3;
    SelectorContext sel;
    std::vector<AggregatorState> aggs;
    int hook_calls = 0;
    auto members_fn = [&](int) { return w.members(); };
    run_event_block(w.state, members_fn, cfg, w.model, sel, w.tm, aggs, 77, 3,
                    [&](long, std::span<const RoundFragment> frags) {
                        ++hook_calls;
                        CHECK(frags.size() == 1);
                    });
    CHECK(hook_calls == 3);
    CHECK(w.state.round == 3);
    CHECK(w.state.sim_time > 0.0);

    const ClusterState before = w.state;
    run_event_block(w.state, members_fn, cfg, w.model, sel, w.tm, aggs, 77, 0, nullptr);
    CHECK(w.state.round == before.round);
    CHECK(w.state.models[0].values == before.models[0].values);
}

TEST_CASE("training loss trends down on an easy task") {
    // separable data: one-hot inputs matching the label
    MiniWorld w(6, 0, 11);
    rng::Stream s(11);
    for (int i = 0; i < 6; ++i) {
        w.data[i].clear();
        for (int n = 0; n < 20; ++n) {
            Sample smp;
            smp.label = static_cast<int>(s.next_below(3));
            smp.x = {smp.label == 1 ? 1.0 : 0.0, smp.label == 2 ? 1.0 : 0.0};
            w.data[i].push_back(smp);
        }
    }
    TrainingConfig cfg;
    cfg.eta = 0.2;
    cfg.local_steps = 5;
    cfg.batch_size = 10;
    cfg.participants_per_round = 6;
    SelectorContext sel;
    std::vector<AggregatorState> aggs;
    std::vector<double> round_loss;
    auto members_fn = [&](int) { return w.members(); };
    run_event_block(w.state, members_fn, cfg, w.model, sel, w.tm, aggs, 5, 30,
                    [&](long, std::span<const RoundFragment> frags) {
                        double sum = 0.0;
                        int n = 0;
                        for (const auto& [cid, loss] : frags[0].client_losses) {
                            sum += loss;
                            ++n;
                        }
                        round_loss.push_back(sum / n);
                    });
    REQUIRE(round_loss.size() == 30);
    double early = 0.0, late = 0.0;
    for (int r = 0; r < 10; ++r) early += round_loss[r];
    for (int r = 20; r < 30; ++r) late += round_loss[r];
    CHECK(late < early);
}

TEST_CASE("aggregation names round-trip") {
    for (Aggregation a : {Aggregation::FedAvg, Aggregation::FedProx, Aggregation::FedYogi,
                          Aggregation::QFedAvg}) {
        CHECK(aggregation_from_string(to_string(a)) == a);
    }
    CHECK_THROWS_AS(aggregation_from_string("sgd"), InputError);
}
