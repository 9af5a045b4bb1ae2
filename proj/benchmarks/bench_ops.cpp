#include <random>

#include "benchmark/benchmark.h"
#include "hoi/attention.hpp"
#include "hoi/context_appearance.hpp"
#include "hoi/pipeline.hpp"
#include "hoi/training.hpp"

using namespace hoi;

namespace {

TensorF rand_tensor(std::mt19937& rng, std::vector<int> dims) {
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    TensorF t(std::move(dims));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = d(rng);
    return t;
}

void BM_Conv2d(benchmark::State& state) {
    std::mt19937 rng(0);
    const int hw = static_cast<int>(state.range(0));
    const int c = static_cast<int>(state.range(1));
    const TensorF input = rand_tensor(rng, {hw, hw, c});
    const ConvWeights<float> w{rand_tensor(rng, {3, 3, c, c}), rand_tensor(rng, {c})};
    for (auto _ : state) {
        benchmark::DoNotOptimize(conv2d(input, w));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(hw) * hw * c * c * 9);
}
BENCHMARK(BM_Conv2d)->Args({16, 16})->Args({32, 32})->Args({64, 16});

void BM_ContextAggregate(benchmark::State& state) {
    std::mt19937 rng(1);
    const int k = static_cast<int>(state.range(0));
    const int c = 16;
    ContextAggWeights<float> w;
    w.a_col = ConvWeights<float>{rand_tensor(rng, {k, 1, c, c}), rand_tensor(rng, {c})};
    w.a_row = ConvWeights<float>{rand_tensor(rng, {1, k, c, c}), rand_tensor(rng, {c})};
    w.b_row = ConvWeights<float>{rand_tensor(rng, {1, k, c, c}), rand_tensor(rng, {c})};
    w.b_col = ConvWeights<float>{rand_tensor(rng, {k, 1, c, c}), rand_tensor(rng, {c})};
    const TensorF input = rand_tensor(rng, {24, 24, c});
    for (auto _ : state) {
        benchmark::DoNotOptimize(context_aggregate(input, w));
    }
}
BENCHMARK(BM_ContextAggregate)->Arg(3)->Arg(7)->Arg(15);

void BM_PsRoiAlign(benchmark::State& state) {
    std::mt19937 rng(2);
    const int grid = static_cast<int>(state.range(0));
    const int e = 8;
    const TensorF maps = rand_tensor(rng, {24, 24, grid * grid * e});
    const BBox box{2.3, 3.1, 19.8, 21.2};
    for (auto _ : state) {
        benchmark::DoNotOptimize(ps_roi_align(maps, box, grid, 2));
    }
}
BENCHMARK(BM_PsRoiAlign)->Arg(3)->Arg(7);

void BM_AttentionChain(benchmark::State& state) {
    std::mt19937 rng(3);
    const int d = static_cast<int>(state.range(0));
    AttentionWeights<float> w;
    w.heatmap_conv = init_conv<float>(rng, 1, 1, d, 1);
    w.se_reduce = init_conv<float>(rng, 1, 1, d, std::max(1, d / 16));
    w.se_expand = init_conv<float>(rng, 1, 1, std::max(1, d / 16), d);
    w.head_fc1 = init_conv<float>(rng, 1, 1, 2 * d, d);
    w.head_fc2 = init_conv<float>(rng, 1, 1, d, 26);
    const TensorF A = rand_tensor(rng, {24, 24, d});
    const TensorF f_app = rand_tensor(rng, {d});
    for (auto _ : state) {
        const auto tr = attention_forward(f_app, A, w);
        benchmark::DoNotOptimize(action_head(f_app, tr.f_r, w));
    }
}
BENCHMARK(BM_AttentionChain)->Arg(64)->Arg(512);

void BM_PairwiseStream(benchmark::State& state) {
    std::mt19937 rng(4);
    PairwiseWeights<float> w;
    w.conv1 = init_conv<float>(rng, 5, 5, 2, 16);
    w.conv2 = init_conv<float>(rng, 5, 5, 16, 32);
    w.fc = init_conv<float>(rng, 1, 1, 16 * 16 * 32, 26);
    const TensorF pattern = interaction_pattern<float>(BBox{4, 4, 40, 44}, BBox{30, 20, 64, 58});
    for (auto _ : state) {
        benchmark::DoNotOptimize(pairwise_stream(pattern, w));
    }
}
BENCHMARK(BM_PairwiseStream);

}  // namespace

BENCHMARK_MAIN();
