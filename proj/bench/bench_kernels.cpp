// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include "couplegen/metric.hpp"
#include "couplegen/numerics.hpp"
#include "couplegen/pipeline.hpp"

using namespace couplegen;

namespace {

void BM_MatmulReference(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    const Matrix a = random_uniform(n, n, -1, 1, rng), b = random_uniform(n, n, -1, 1, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(reference::matmul(a, b));
    }
}

void BM_MatmulParallel(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    const Matrix a = random_uniform(n, n, -1, 1, rng), b = random_uniform(n, n, -1, 1, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(matmul(a, b));
    }
}

void BM_SoftmaxReference(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(2);
    const Matrix m = random_uniform(n, n, -5, 5, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(reference::softmax_rows(m));
    }
}

void BM_SoftmaxParallel(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(2);
    const Matrix m = random_uniform(n, n, -5, 5, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(softmax_rows(m));
    }
}

struct MetricInput {
    std::vector<ImageGrid> images;
    MaskGrid region;
};

MetricInput metric_input(std::size_t side)
{
    Rng rng(3);
    MetricInput in;
    for (int i = 0; i < 6; ++i) {
        ImageGrid img(side, side, 3);
        for (double& p : img.pixels) {
            p = rng.next_unit_real();
        }
        in.images.push_back(std::move(img));
    }
    in.region = MaskGrid(side, side);
    for (std::size_t y = 0; y < side / 3; ++y)
        for (std::size_t x = 0; x < side; ++x)
            in.region.set(y, x, true);
    return in;
}

void BM_BackgroundSimilarityReference(benchmark::State& state)
{
    const auto in = metric_input(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(reference::background_similarity(in.images, in.region));
    }
}

void BM_BackgroundSimilarityParallel(benchmark::State& state)
{
    const auto in = metric_input(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(background_similarity(in.images, in.region));
    }
}

void run_sample(benchmark::State& state, bool parallel)
{
    PipelineConfig cfg;
    const Pipeline p = init_pipeline(cfg);
    const PromptBundle bundle{"a cozy room", {"a cat", "a dog", "a bird", "a fox"}};
    const auto schedule = make_schedule({FamilyKind::arctan, 4.0, 1.0}, cfg.steps);
    SampleOptions opts;
    opts.parallel = parallel;
    for (auto _ : state) {
        benchmark::DoNotOptimize(sample(p, bundle, schedule, 0, opts));
    }
}

void BM_SampleSerial(benchmark::State& state) { run_sample(state, false); }
void BM_SampleParallel(benchmark::State& state) { run_sample(state, true); }

} // namespace

BENCHMARK(BM_MatmulReference)->Arg(64)->Arg(256);
BENCHMARK(BM_MatmulParallel)->Arg(64)->Arg(256);
BENCHMARK(BM_SoftmaxReference)->Arg(256)->Arg(1024);
BENCHMARK(BM_SoftmaxParallel)->Arg(256)->Arg(1024);
BENCHMARK(BM_BackgroundSimilarityReference)->Arg(128)->Arg(512);
BENCHMARK(BM_BackgroundSimilarityParallel)->Arg(128)->Arg(512);
BENCHMARK(BM_SampleSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SampleParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
