#include <benchmark/benchmark.h>

#include "u2ad/components.hpp"
#include "u2ad/model.hpp"
#include "u2ad/patching.hpp"
#include "u2ad/phantom.hpp"
#include "u2ad/uncertainty.hpp"

namespace {

struct Fixture {
  u2ad::CaseRecord rec = u2ad::generate_phantom(7, {});
  u2ad::PatchGrid grid = u2ad::build_patch_grid(rec.roi_mask, 8);
  u2ad::ModelConfig cfg;
  u2ad::Network<float> net{cfg};
  u2ad::ModelParams params;

  Fixture() {
    u2ad::Rng rng(1);
    params = u2ad::init_model(cfg, rng);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

void BM_Forward(benchmark::State& state) {
  auto& f = fixture();
  u2ad::Rng rng(3);
  const auto plan = u2ad::random_mask_plan(f.grid, 0.75, rng);
  const auto sample = u2ad::gather_sample<float>(u2ad::roi_image(f.rec.image, f.rec.roi_mask), f.grid, plan, false);
  for (auto _ : state) benchmark::DoNotOptimize(f.net.predict(f.params.values, sample));
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  auto& f = fixture();
  u2ad::Rng rng(4);
  const auto plan = u2ad::random_mask_plan(f.grid, 0.75, rng);
  const auto sample = u2ad::gather_sample<float>(u2ad::roi_image(f.rec.image, f.rec.roi_mask), f.grid, plan, true);
  std::vector<float> grad(f.params.values.size());
  for (auto _ : state) {
    benchmark::DoNotOptimize(f.net.loss_and_grad(f.params.values, sample, 0.1, grad));
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_McSample(benchmark::State& state) {
  auto& f = fixture();
  const auto predict = u2ad::make_predictor(f.net, f.params, f.rec.image, f.rec.roi_mask, f.grid);
  const int k = static_cast<int>(state.range(0));
  for (auto _ : state) {
    u2ad::Rng rng(5);
    benchmark::DoNotOptimize(u2ad::mc_sample(predict, f.grid, 0.75, k, rng));
  }
}
BENCHMARK(BM_McSample)->Arg(3)->Arg(10)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_CcLabel(benchmark::State& state) {
  u2ad::Image map(256, 256, 0.0);
  u2ad::Rng rng(6);
  for (std::size_t i = 0; i < map.size(); ++i) map[i] = u2ad::uniform(rng, 0.0, 1.0) > 0.6 ? 1.0 : 0.0;
  for (auto _ : state) benchmark::DoNotOptimize(u2ad::cc_label(map, 8));
}
BENCHMARK(BM_CcLabel)->Unit(benchmark::kMicrosecond);

void BM_Sobel(benchmark::State& state) {
  const u2ad::MatrixT<float> patch = u2ad::MatrixT<float>::Random(8, 8);
  for (auto _ : state) benchmark::DoNotOptimize(u2ad::sobel<float>(patch));
}
BENCHMARK(BM_Sobel);

}  // namespace
BENCHMARK_MAIN();
