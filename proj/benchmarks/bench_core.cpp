#include <benchmark/benchmark.h>

#include "hope/evaluation.hpp"
#include "hope/matrix.hpp"
#include "hope/model.hpp"
#include "hope/rng.hpp"
#include "hope/tape.hpp"

using namespace hope;

namespace {

CompositionDataset bench_dataset() {
    GeneratorSpec gs;
    gs.num_attributes = 8;
    gs.num_objects = 10;
    gs.dimension = 32;
    gs.samples_per_composition = 20;
    gs.seen_fraction = 0.6;
    gs.noise_sigma = 0.1;
    gs.seed = 7;
    return generate(gs);
}

void BM_matmul(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(1);
    Matrix a = Matrix::gaussian(n, n, rng);
    Matrix b = Matrix::gaussian(n, n, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(matmul(a, b));
    }
    state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}
BENCHMARK(BM_matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_softmax_rows(benchmark::State& state) {
    Rng rng(2);
    Matrix m = Matrix::gaussian(64, 64, rng, 5.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(softmax_rows(m));
    }
}
BENCHMARK(BM_softmax_rows);

void BM_sample_forward(benchmark::State& state) {
    CompositionDataset ds = bench_dataset();
    TrainConfig cfg;
    cfg.seed = 7;
    ModelState model = init_model(ds, cfg);
    Tape t;
    for (auto _ : state) {
        t.clear();
        BoundModel bound = bind_model(t, model, TrainableGroups::none());
        benchmark::DoNotOptimize(forward_sample(t, bound, ds.test[0].embedding));
    }
}
BENCHMARK(BM_sample_forward);

void BM_train_step(benchmark::State& state) {
    CompositionDataset ds = bench_dataset();
    TrainConfig cfg;
    cfg.seed = 7;
    ModelState model = init_model(ds, cfg);
    std::vector<int> idx;
    for (int i = 0; i < 64; ++i) idx.push_back(i);
    const Batch batch = make_batch(ds.train, idx);
    for (auto _ : state) {
        Tape t;
        BoundModel bound = bind_model(t, model, TrainableGroups::all());
        BuiltLosses built = build_losses(t, bound, batch, 3);
        t.backward(built.total);
        benchmark::DoNotOptimize(t.gradient(bound.theta));
    }
}
BENCHMARK(BM_train_step);

void BM_closed_world_eval(benchmark::State& state) {
    CompositionDataset ds = bench_dataset();
    TrainConfig cfg;
    cfg.seed = 7;
    ModelState model = init_model(ds, cfg);
    for (auto _ : state) {
        benchmark::DoNotOptimize(evaluate(model, ds, World::closed));
    }
}
BENCHMARK(BM_closed_world_eval);

}  // namespace

BENCHMARK_MAIN();
