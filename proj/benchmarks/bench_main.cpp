#include <benchmark/benchmark.h>

#include <vector>

#include "cflsim/clustering.hpp"
#include "cflsim/representation.hpp"
#include "cflsim/rng.hpp"
#include "cflsim/simulation.hpp"
#include "cflsim/training.hpp"

namespace {

using namespace cflsim;

std::vector<Representation> random_histograms(int n, int labels, std::uint64_t seed) {
    auto stream = rng::make_stream(seed, "bench_reps");
    std::vector<Representation> reps(n);
    for (int i = 0; i < n; ++i) {
        LabelHistogram h;
        h.probs.resize(labels);
        double total = 0.0;
        for (double& p : h.probs) {
            p = stream.next_double() + 1e-3;
            total += p;
        }
        for (double& p : h.probs) p /= total;
        h.count = 100;
        reps[i].payload = std::move(h);
        reps[i].client_id = i;
    }
    return reps;
}

void BM_Distance(benchmark::State& state) {
    const Metric metric = static_cast<Metric>(state.range(0));
    const auto reps = random_histograms(2, 64, 11);
    for (auto _ : state)
        benchmark::DoNotOptimize(distance(reps[0], reps[1], metric));
}
BENCHMARK(BM_Distance)->Arg(0)->Arg(1)->Arg(2);

void BM_Kmeans(benchmark::State& state) {
    const auto reps = random_histograms(static_cast<int>(state.range(0)), 16, 13);
    for (auto _ : state)
        benchmark::DoNotOptimize(kmeans(reps, 4, Metric::L1, 17));
}
BENCHMARK(BM_Kmeans)->Arg(100)->Arg(400);

void BM_ChooseK(benchmark::State& state) {
    const auto reps = random_histograms(static_cast<int>(state.range(0)), 16, 13);
    const KRange kr = default_k_range(reps.size());
    for (auto _ : state)
        benchmark::DoNotOptimize(choose_k(reps, Metric::L1, kr.k_min, kr.k_max, 17));
}
BENCHMARK(BM_ChooseK)->Arg(100)->Arg(200);

void BM_ClusterRound(benchmark::State& state) {
    const SyntheticTask task = make_synthetic_task(10, 32, 4, 8.0, 1.0, 0.35, 0.0, 5);
    Population pop = generate_population(task, 40, 120, 0.5, 5);
    const TaskModel model(ModelKind::Softmax, 10, 32);
    TrainingConfig cfg;
    cfg.participants_per_round = 10;

    ClusterState st;
    st.assignment.K = 1;
    std::vector<double> center(10, 0.1);
    st.assignment.centers.push_back(center);
    std::vector<ClientView> members;
    std::vector<Representation> reps = random_histograms(40, 10, 23);
    for (int i = 0; i < 40; ++i) {
        st.assignment.client_to_cluster[i] = 0;
        ClientView v;
        v.client_id = i;
        v.train = pop.clients[i].pool;
        v.profile = &pop.clients[i].profile;
        v.rep = &reps[i];
        members.push_back(v);
    }
    st.models.push_back(model.zero_params());
    SelectorContext sel;
    DeviceTimeModel tm{50000.0, 30.0};
    AggregatorState agg;

    for (auto _ : state) {
        ClusterState local = st;
        benchmark::DoNotOptimize(
            run_cluster_round(0, local, members, 10, cfg, model, sel, tm, agg, 7, 0));
    }
}
BENCHMARK(BM_ClusterRound);

}  // namespace

BENCHMARK_MAIN();
