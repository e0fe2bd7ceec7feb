#include <benchmark/benchmark.h>

#include "neurophys/fhn.hpp"
#include "neurophys/trainer.hpp"

using namespace neurophys;

namespace {

PipelineConfig small_cfg() {
    PipelineConfig cfg;
    cfg.pinn.f1 = 8;
    cfg.pinn.f2 = 16;
    cfg.pinn.hidden_dim = 64;
    cfg.pinn.layers = 1;
    cfg.pinn.heads = 4;
    cfg.pinn.dropout = 0.25;
    cfg.featx.latent_dim = 32;
    return cfg;
}

PreprocessedSet bench_set(std::size_t trials) {
    SynthSpec spec;
    spec.n_trials = trials;
    spec.n_channels = 4;
    spec.classes = 2;
    spec.seed = 11;
    spec.n_samples = 256;
    spec.sample_rate_hz = 128.0;
    return preprocess_set(synthesize_trialset(spec), small_cfg());
}

}  // namespace

static void BM_RK4StepsPerSecond(benchmark::State& state) {
    FhnParams params;
    CouplingMatrix coupling = build_coupling_matrix(8, 0.1);
    std::vector<double> v0(8, 0.1), w0(8, 0.0);
    for (auto _ : state) {
        StatePair traj = integrate_rk4(v0, w0, params, &coupling, 10.0, 1e-3);
        benchmark::DoNotOptimize(traj.v.data());
    }
    state.SetItemsProcessed(state.iterations() * 10000);
}
BENCHMARK(BM_RK4StepsPerSecond);

static void BM_PhysicsLoss(benchmark::State& state) {
    FhnParams params;
    CouplingMatrix coupling = build_coupling_matrix(4, 0.1);
    StatePair s{Tensor({16, 3, 4, 25}), Tensor({16, 3, 4, 25}), 1.0 / 128.0};
    RandomSource rng(12);
    for (std::size_t i = 0; i < s.v.size(); ++i) {
        s.v[i] = rng.uniform(-1.0, 1.0);
        s.w[i] = rng.uniform(-1.0, 1.0);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(physics_loss(s, params, &coupling));
    }
}
BENCHMARK(BM_PhysicsLoss);

static void BM_TrainEpoch(benchmark::State& state) {
    PreprocessedSet data = bench_set(32);
    Pipeline pipe =
        build_pipeline(small_cfg(), geometry_of(data), data.sample_rate_hz, 2, 13);
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 16;
    tc.seed = 13;
    for (auto _ : state) {
        MetricsLog log = train(pipe, data, data, tc);
        benchmark::DoNotOptimize(log.epochs[0].loss_total);
    }
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

static void BM_EvalBatch(benchmark::State& state) {
    PreprocessedSet data = bench_set(32);
    Pipeline pipe =
        build_pipeline(small_cfg(), geometry_of(data), data.sample_rate_hz, 2, 14);
    for (auto _ : state) {
        EvalResult res = evaluate(pipe, data);
        benchmark::DoNotOptimize(res.accuracy);
    }
    state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_EvalBatch)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
