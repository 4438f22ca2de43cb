#include <benchmark/benchmark.h>

#include <random>

#include "xgs/online_vq.hpp"

using namespace xgs;

namespace {

std::vector<Eigen::VectorXd> random_batch(int n, int D, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::vector<Eigen::VectorXd> out(static_cast<std::size_t>(n), Eigen::VectorXd(D));
    for (auto& x : out)
        for (int d = 0; d < D; ++d) x(d) = g(rng);
    return out;
}

}  // namespace

static void BM_Accumulate(benchmark::State& state) {
    VqConfig cfg;
    cfg.K = static_cast<int>(state.range(0));
    const Codebook cb = cfg.make_codebook(16);
    const auto batch = random_batch(1024, 16, 1);
    for (auto _ : state) benchmark::DoNotOptimize(accumulate(batch, cb));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}
BENCHMARK(BM_Accumulate)->Arg(64)->Arg(256);

static void BM_OnlineObserve(benchmark::State& state) {
    VqConfig cfg;
    const auto batch = random_batch(1024, 16, 2);
    OnlineQuantizer q(cfg, 16);
    q.observe(batch);
    for (auto _ : state) benchmark::DoNotOptimize(q.observe(batch));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}
BENCHMARK(BM_OnlineObserve);

BENCHMARK_MAIN();
