#include <benchmark/benchmark.h>

#include "xgs/rasterizer.hpp"
#include "xgs/slam.hpp"
#include "xgs/synthetic.hpp"

using namespace xgs;

namespace {

struct Fixture {
    SceneRecipe recipe;
    GeneratedScene scene;
    std::vector<CameraPose> poses;
    std::vector<CameraFrame> frames;

    Fixture() {
        recipe.frames = 4;
        scene = generate_scene(recipe);
        poses = generate_trajectory(recipe);
        frames = render_ground_truth(scene, poses, recipe, SensorMode::Rgbd);
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

}  // namespace

static void BM_Render(benchmark::State& state) {
    const Fixture& f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(render(f.scene.field, f.poses[0], f.recipe.intrinsics()));
}
BENCHMARK(BM_Render);

static void BM_RenderBackward(benchmark::State& state) {
    const Fixture& f = fixture();
    const CameraIntrinsics k = f.recipe.intrinsics();
    const Tensor3 gc(3, k.height, k.width, 1.0), gd(1, k.height, k.width, 1.0);
    RadianceGradients grads(f.scene.field.size());
    for (auto _ : state) {
        render_backward(f.scene.field, f.poses[0], k, gc, gd, grads);
        benchmark::DoNotOptimize(grads);
    }
}
BENCHMARK(BM_RenderBackward);

// Grid-sampled feature rendering; the argument is the stride.
static void BM_FeatureGrid(benchmark::State& state) {
    const Fixture& f = fixture();
    const CameraIntrinsics k = f.recipe.intrinsics();
    const int s = static_cast<int>(state.range(0));
    const GridSpec grid(k.height, k.width, s, 0, 0);
    RenderStats stats;
    for (auto _ : state)
        benchmark::DoNotOptimize(render_features_grid(f.scene.field, f.scene.codebook, f.poses[0], k, grid, {}, &stats));
    state.counters["blend_steps/iter"] =
        benchmark::Counter(static_cast<double>(stats.blend_steps), benchmark::Counter::kAvgIterations);
}
BENCHMARK(BM_FeatureGrid)->Arg(1)->Arg(2)->Arg(4);

// Whole semantic phase (50 steps) with prefetched targets; the argument is the stride.
static void BM_SemanticPhase(benchmark::State& state) {
    const Fixture& f = fixture();
    const int s = static_cast<int>(state.range(0));
    KeyframeWindow w(8);
    for (std::size_t i = 0; i < f.frames.size(); ++i) w.push({f.frames[i], f.poses[i]});
    TargetCache cache;
    for (const CameraFrame& fr : f.frames) prefetch_targets(cache, fr, s, SemanticSource::Discrete);
    SemanticConfig cfg;
    cfg.stride = s;
    for (auto _ : state) {
        GaussianField field = f.scene.field;
        std::uint64_t step = 0;
        benchmark::DoNotOptimize(semantic_phase(field, f.scene.codebook, w, f.recipe.intrinsics(), cache, step, cfg));
    }
}
BENCHMARK(BM_SemanticPhase)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
