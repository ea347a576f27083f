// Microbenchmarks for the training hot path: forward/backward passes at the
// default desk-scale shape, Beta sampling, and mixed-batch construction.

#include <benchmark/benchmark.h>

#include "selectmix/crossval.hpp"
#include "selectmix/dataset.hpp"
#include "selectmix/mixing.hpp"
#include "selectmix/net.hpp"
#include "selectmix/rng.hpp"

namespace {

using namespace selectmix;

NetworkSpec default_spec() {
    NetworkSpec spec;
    spec.layer_widths = {784, 128, 10};
    spec.weight_decay = 1e-4;
    return spec;
}

Matrix random_batch(int rows, int cols, Rng& rng) {
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            m(i, j) = rng.uniform();
        }
    }
    return m;
}

void BM_Forward(benchmark::State& state) {
    const NetworkSpec spec = default_spec();
    Rng rng(1);
    const NetworkState net = init_network(spec, rng);
    const Matrix inputs = random_batch(128, 784, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward(spec, net, inputs));
    }
    state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_Forward);

void BM_Backward(benchmark::State& state) {
    const NetworkSpec spec = default_spec();
    Rng rng(2);
    const NetworkState net = init_network(spec, rng);
    const Matrix inputs = random_batch(128, 784, rng);
    Matrix targets = Matrix::Zero(128, 10);
    for (int i = 0; i < 128; ++i) {
        targets(i, static_cast<int>(rng.below(10))) = 1.0;
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(gradients(spec, net, inputs, targets));
    }
    state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_Backward);

void BM_BetaSample(benchmark::State& state) {
    Rng rng(3);
    const double alpha = static_cast<double>(state.range(0)) / 10.0;
    double sink = 0.0;
    for (auto _ : state) {
        sink += sample_lambda(alpha, rng);
    }
    benchmark::DoNotOptimize(sink);
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_BetaSample)->Arg(1)->Arg(10)->Arg(40);

void BM_BuildMixedBatch(benchmark::State& state) {
    SyntheticSpec spec = make_blob_spec(10, 32, 200, 1.0, 8.0, 7);
    const Dataset ds = gen_gaussian(spec, 7);
    OofPredictions oof;
    oof.probs = Matrix::Constant(ds.size(), 10, 0.1);
    oof.pred_labels = ds.noisy_labels;
    oof.confidence.assign(ds.size(), 0.1);
    // Flag every fourth sample as a mismatch so the selectmix path exercises
    // partner selection.
    std::vector<int> mismatch;
    for (int i = 0; i < ds.size(); i += 4) {
        mismatch.push_back(i);
    }
    const auto flags = mismatch_flags(mismatch, ds.size());
    const auto cls = class_index(oof.pred_labels, 10);
    MixStrategy strat;
    strat.kind = StrategyKind::kSelectMix;
    std::vector<int> batch(128);
    Rng pick(11);
    for (int& b : batch) {
        b = static_cast<int>(pick.below(static_cast<std::uint64_t>(ds.size())));
    }
    std::uint64_t step = 0;
    for (auto _ : state) {
        Rng rng(step++, {stream::kMix});
        benchmark::DoNotOptimize(build_mixed_batch(batch, ds, &oof, &flags, &cls, strat, rng));
    }
    state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_BuildMixedBatch);

}  // namespace

BENCHMARK_MAIN();
