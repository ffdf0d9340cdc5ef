#include "cyclemae/adapt_eval.hpp"
#include "cyclemae/metrics.hpp"
#include "cyclemae/objective.hpp"
#include "cyclemae/video.hpp"

#include <benchmark/benchmark.h>

using namespace cyclemae;

namespace {

video::VideoClip desk_clip() {
    video::SyntheticSpec spec;  // 32 x 64 x 64
    return video::generate_periodic_clip(spec, 1);
}

void BM_Patchify(benchmark::State& state) {
    const video::VideoClip clip = desk_clip();
    const tokenizer::PatchConfig cfg{16, 16, 4, 64};
    for (auto _ : state) {
        benchmark::DoNotOptimize(tokenizer::patchify(clip, cfg));
    }
}
BENCHMARK(BM_Patchify);

void BM_MineTriplets(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(3);
    Mat z(n, 64);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = standard_normal(rng);
    for (auto _ : state) {
        const Mat S = objective::self_similarity(z);
        benchmark::DoNotOptimize(objective::mine_triplets(S, 1, rng));
    }
}
BENCHMARK(BM_MineTriplets)->Arg(8)->Arg(16)->Arg(64);

void BM_Encode(benchmark::State& state) {
    const backbone::ModelConfig cfg;
    const backbone::Model model = backbone::Model::init(cfg, 1);
    const tokenizer::PatchGrid grid = tokenizer::patchify(desk_clip(), cfg.patch);
    const masking::MaskPlan plan = masking::full_visibility(grid.groups, grid.positions);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            backbone::encode(model, masking::apply_mask(backbone::embed(model, grid), plan)));
    }
}
BENCHMARK(BM_Encode)->Unit(benchmark::kMillisecond);

void BM_TrainingStep(benchmark::State& state) {
    const backbone::ModelConfig cfg;
    const backbone::Model model = backbone::Model::init(cfg, 1);
    const tokenizer::PatchGrid grid = tokenizer::patchify(desk_clip(), cfg.patch);
    objective::ObjectiveConfig ocfg;
    ocfg.enable_contrastive = state.range(0) != 0;
    Rng rng(5);
    Gradients g(model.params());
    for (auto _ : state) {
        benchmark::DoNotOptimize(objective::training_step(model, grid, ocfg, rng, &g));
    }
}
BENCHMARK(BM_TrainingStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_SurfaceMetrics(benchmark::State& state) {
    video::SyntheticSpec spec;
    const video::LabelMap a = video::generate_periodic_mask(spec, 1);
    spec.phase_offset = 0.5;
    const video::LabelMap b = video::generate_periodic_mask(spec, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(metrics::surface_metrics(a, b, 1));
    }
}
BENCHMARK(BM_SurfaceMetrics)->Unit(benchmark::kMillisecond);

void BM_Augment(benchmark::State& state) {
    const adapt::LabeledClip s{desk_clip(), std::nullopt,
                               video::generate_periodic_mask(video::SyntheticSpec{}, 1)};
    const adapt::AugmentConfig cfg;
    Rng rng(2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(adapt::augment(s, cfg, rng));
    }
}
BENCHMARK(BM_Augment)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
