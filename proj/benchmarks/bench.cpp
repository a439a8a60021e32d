#include <benchmark/benchmark.h>

#include <vector>

#include "qfuse/calibration.hpp"
#include "qfuse/fusion.hpp"
#include "qfuse/metrics.hpp"
#include "qfuse/probit.hpp"
#include "qfuse/rng.hpp"
#include "qfuse/synthetic.hpp"

using namespace qfuse;

namespace {

void gaussian_pools(int n, std::vector<double>& genuine, std::vector<double>& impostor) {
    CounterRng rng(7, 0);
    genuine.resize(static_cast<size_t>(n));
    impostor.resize(static_cast<size_t>(n));
    for (auto& s : genuine) s = rng.normal(1.0, 1.0);
    for (auto& s : impostor) s = rng.normal(-1.0, 1.0);
}

void BM_Probit(benchmark::State& state) {
    double p = 1e-6;
    for (auto _ : state) {
        benchmark::DoNotOptimize(probit(p));
        p += 1e-7;
        if (p >= 1.0 - 1e-6) p = 1e-6;
    }
}
BENCHMARK(BM_Probit);

void BM_Eer(benchmark::State& state) {
    std::vector<double> genuine, impostor;
    gaussian_pools(static_cast<int>(state.range(0)), genuine, impostor);
    for (auto _ : state) benchmark::DoNotOptimize(eer(genuine, impostor).eer);
    state.SetItemsProcessed(state.iterations() * 2 * state.range(0));
}
BENCHMARK(BM_Eer)->Range(1 << 10, 1 << 17);

void BM_TrainCalibrator(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    CounterRng rng(8, 0);
    Eigen::MatrixXd t(n, 1), f(n, 1);
    for (int i = 0; i < n; ++i) {
        t(i, 0) = rng.normal(1.0, 1.0);
        f(i, 0) = rng.normal(-1.0, 1.0);
    }
    for (auto _ : state) benchmark::DoNotOptimize(train_calibrator(t, f, {}).intercept);
    state.SetItemsProcessed(state.iterations() * 2 * n);
}
BENCHMARK(BM_TrainCalibrator)->Range(1 << 10, 1 << 16);

void BM_RunPipeline(benchmark::State& state) {
    SynthSpec spec;
    spec.accesses_per_mixture = 250;
    const GeneratedData data = gen_dataset(spec);
    const ModelSet models = fit_model_set(data.training, {}, FeatureSelection{{8}},
                                          FeatureSelection{{2}}, nullptr);
    PipelineConfig cfg;
    size_t i = 0;
    for (auto _ : state) {
        const Access& a = data.evaluation.accesses[i % data.evaluation.accesses.size()];
        benchmark::DoNotOptimize(run_pipeline(a, cfg, models).fused);
        ++i;
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_RunPipeline);

void BM_GenDataset(benchmark::State& state) {
    SynthSpec spec;
    spec.accesses_per_mixture = static_cast<int>(state.range(0));
    for (auto _ : state)
        benchmark::DoNotOptimize(gen_dataset(spec).training.accesses.size());
    state.SetItemsProcessed(state.iterations() * 8 * state.range(0));
}
BENCHMARK(BM_GenDataset)->Range(64, 1024);

}  // namespace

BENCHMARK_MAIN();
