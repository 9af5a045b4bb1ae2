#include <random>

#include "benchmark/benchmark.h"
#include "hoi/evaluation.hpp"

using namespace hoi;

namespace {

struct EvalData {
    std::vector<GroundTruthTriplet> gts;
    std::vector<HOITriplet> dets;
    EvalConfig cfg;
};

EvalData make_data(int images, int gts_per_image, int dets_per_gt) {
    EvalData data;
    std::mt19937 rng(0);
    std::uniform_real_distribution<double> pos(10.0, 200.0), len(10.0, 60.0), jit(-6.0, 6.0), score(0.0, 1.0);
    for (int a = 0; a < 4; ++a) {
        for (int r = 0; r < 2; ++r) data.cfg.categories.push_back({a, r, "", a});
    }
    for (int i = 0; i < images; ++i) {
        const std::string id = "img" + std::to_string(i);
        for (int g = 0; g < gts_per_image; ++g) {
            const double x = pos(rng), y = pos(rng), w = len(rng), h = len(rng);
            GroundTruthTriplet gt;
            gt.image_id = id;
            gt.human = {x, y, x + w, y + h};
            gt.object = BBox{x + 10, y + 5, x + w + 10, y + h + 5};
            gt.action_id = static_cast<int>(rng() % 4);
            gt.role_id = static_cast<int>(rng() % 2);
            data.gts.push_back(gt);
            for (int d = 0; d < dets_per_gt; ++d) {
                HOITriplet det;
                det.image_id = id;
                det.human = {gt.human.x1 + jit(rng), gt.human.y1 + jit(rng), gt.human.x2 + jit(rng),
                             gt.human.y2 + jit(rng)};
                det.object = BBox{gt.object->x1 + jit(rng), gt.object->y1 + jit(rng), gt.object->x2 + jit(rng),
                                  gt.object->y2 + jit(rng)};
                det.action_id = gt.action_id;
                det.role_id = gt.role_id;
                det.score = score(rng);
                data.dets.push_back(det);
            }
        }
    }
    return data;
}

void BM_Evaluate(benchmark::State& state) {
    const EvalData data = make_data(static_cast<int>(state.range(0)), 4, 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(evaluate(data.dets, data.gts, data.cfg));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.dets.size()));
}
BENCHMARK(BM_Evaluate)->Arg(20)->Arg(100);

void BM_ThresholdSweep(benchmark::State& state) {
    const EvalData data = make_data(30, 4, 3);
    const std::vector<double> thresholds = {0.1, 0.3, 0.5, 0.7, 0.9};
    for (auto _ : state) {
        benchmark::DoNotOptimize(threshold_sweep(data.dets, data.gts, data.cfg, thresholds));
    }
}
BENCHMARK(BM_ThresholdSweep);

}  // namespace

BENCHMARK_MAIN();
