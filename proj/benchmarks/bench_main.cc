#include <benchmark/benchmark.h>

#include "cdiff/envgen.h"
#include "cdiff/mlp.h"
#include "cdiff/planner.h"
#include "cdiff/training.h"

namespace cdiff {
namespace {

const OfflineDataset& bench_dataset() {
  static const OfflineDataset ds =
      generate_mixture(PointMazeDesk(), MixSpec{BehaviorKind::kRandom, 0.1, 100}, 3);
  return ds;
}

void BM_MlpForwardBackward(benchmark::State& state) {
  Rng rng(1);
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  const Mlp net({40, 128, 128, 32}, Activation::kLinear, rng);
  Tensor x({batch, 40});
  for (auto& v : x.data) v = rng.normal();
  Tensor g({batch, 32});
  for (auto& v : g.data) v = rng.normal();
  for (auto _ : state) {
    auto [y, tape] = mlp_forward(net, x);
    benchmark::DoNotOptimize(mlp_backward(tape, g));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_MlpForwardBackward)->Arg(1)->Arg(32);

void BM_TrainStep(benchmark::State& state) {
  const auto& ds = bench_dataset();
  Rng rng(2);
  const ModelConfig mc;
  ContrastiveConfig cc;
  auto models = ModelBundle::init(mc, ds.norm(), rng);
  const auto index = ContrastiveIndex::build(ds, cc, rng);
  const auto windows = make_window_set(ds, mc.horizon);
  TrainConfig tc;
  tc.ablation = state.range(0) ? Ablation::kFull : Ablation::kNoContrast;
  auto opt = OptimizerState::init(models, tc.learning_rate);
  std::uint64_t step = 0;
  for (auto _ : state) {
    const auto batch = draw_batch(windows, tc.batch_size, rng);
    benchmark::DoNotOptimize(
        train_step(models, opt, batch, tc, state.range(0) ? &index : nullptr, rng, ++step));
  }
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Plan(benchmark::State& state) {
  const auto& ds = bench_dataset();
  Rng rng(3);
  const auto models = ModelBundle::init(ModelConfig{}, ds.norm(), rng);
  const std::vector<double> obs{0.15, 0.15};
  PlannerConfig pc;
  pc.rho = static_cast<double>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(plan(models, obs, pc, rng));
}
BENCHMARK(BM_Plan)->Arg(0)->Arg(10)->Unit(benchmark::kMicrosecond);

void BM_Rollout(benchmark::State& state) {
  const PointMazeDesk env;
  BehaviorPolicy policy(BehaviorKind::kExpert, env.layout());
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(rollout(env, policy, 0, ++seed, 0.99));
}
BENCHMARK(BM_Rollout);

}  // namespace
}  // namespace cdiff
BENCHMARK_MAIN();
