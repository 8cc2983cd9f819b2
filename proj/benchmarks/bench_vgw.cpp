#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "vgw/curriculum.hpp"
#include "vgw/evalmetrics.hpp"
#include "vgw/flowformer.hpp"
#include "vgw/flowmatch.hpp"
#include "vgw/graph.hpp"
#include "vgw/rng.hpp"
#include "vgw/rollout.hpp"
#include "vgw/tensor.hpp"
#include "vgw/toyworld.hpp"

namespace {

using namespace vgw;

WorldConfig bench_world(int d) {
  WorldConfig wc;
  wc.d = d;
  wc.n_patch = 4;
  wc.seed = 13;
  return wc;
}

ModelConfig bench_model(int d) {
  ModelConfig mc;
  mc.d_model = d;
  mc.n_heads = 4;
  mc.L_d = 1;
  mc.L_s = 1;
  mc.mlp_ratio = 2;
  mc.k = 2;
  mc.m = 2;
  return mc;
}

// Everything a forward or training step needs, built once per benchmark.
struct ModelFixture {
  explicit ModelFixture(int d)
      : world(bench_world(d)),
        former(bench_model(d), TokenLayout{bench_world(d).n_special, bench_world(d).n_patch}),
        params(former.init_params(3)),
        data(make_dataset(world, 2, 8, 0xbe1)) {}

  World world;
  Former former;
  ParamSet params;
  Dataset data;
  TrainConfig cfg;
};

PointCloud bench_cloud(int n, uint64_t seed) {
  Rng rng(seed);
  PointCloud c;
  for (int i = 0; i < n; ++i) {
    c.points.push_back({rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)});
  }
  return c;
}

void BM_MatmulValue(benchmark::State& state) {
  const int64_t n = state.range(0);
  Rng rng(1);
  const Tensor a = Tensor::gaussian({n, n}, rng, 1.0);
  const Tensor b = Tensor::gaussian({n, n}, rng, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(matmul_value(a, b));
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_MatmulValue)->Arg(64)->Arg(256);

void BM_MatmulBackward(benchmark::State& state) {
  const int64_t n = state.range(0);
  Rng rng(2);
  const Tensor a = Tensor::gaussian({n, n}, rng, 1.0);
  const Tensor b = Tensor::gaussian({n, n}, rng, 1.0);
  for (auto _ : state) {
    Graph g;
    const NodeId pa = g.leaf(&a, "a", true);
    const NodeId pb = g.leaf(&b, "b", true);
    benchmark::DoNotOptimize(g.backward(g.sum_sq(g.matmul(pa, pb))));
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(64)->Arg(256);

void BM_FormerForward(benchmark::State& state) {
  const ModelFixture fx(static_cast<int>(state.range(0)));
  Rng rng(3);
  const Stage1Item item = sample_stage1(fx.data, fx.former.config(), rng);
  const FlowSample fs = corrupt(item.chunk, item.eps, item.tau);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fx.former.forward_value(fx.params, fs.z_tau, item.tau, item.cond,
                                                     item.cond_frames, item.chunk_frames));
  }
}
BENCHMARK(BM_FormerForward)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_Stage1Step(benchmark::State& state) {
  const ModelFixture fx(static_cast<int>(state.range(0)));
  Rng rng(4);
  const std::vector<Stage1Item> batch = sample_stage1_batch(fx.data, fx.former.config(), rng, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(stage1_batch_eval(fx.former, fx.params, batch, fx.cfg, true));
  }
}
BENCHMARK(BM_Stage1Step)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_RolloutChunk(benchmark::State& state) {
  const ModelFixture fx(64);
  const Trajectory episode = fx.world.generate(0xbe2, 8);
  const std::vector<GeometryState> context(episode.states.begin(), episode.states.begin() + 2);
  RolloutPlan plan;
  plan.k = 2;
  plan.m = 2;
  plan.horizon = 2;
  plan.solver.steps = static_cast<int>(state.range(0));
  plan.seed = 5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(rollout_model(fx.former, fx.params, context, plan));
  }
}
BENCHMARK(BM_RolloutChunk)->Arg(4)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_JointDecode(benchmark::State& state) {
  const World world(bench_world(static_cast<int>(state.range(0))));
  const Trajectory episode = world.generate(0xbe3, 8);
  for (auto _ : state) benchmark::DoNotOptimize(joint_decode(world, episode.states));
}
BENCHMARK(BM_JointDecode)->Arg(64)->Arg(256);

void BM_Chamfer(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const PointCloud pred = bench_cloud(n, 6);
  const PointCloud gt = bench_cloud(n, 7);
  for (auto _ : state) benchmark::DoNotOptimize(chamfer_acc_comp(pred, gt));
  state.SetItemsProcessed(state.iterations() * int64_t{n} * int64_t{n});
}
BENCHMARK(BM_Chamfer)->Arg(500)->Arg(2000);

void BM_FarthestPointSampling(benchmark::State& state) {
  const PointCloud cloud = bench_cloud(2000, 8);
  const int count = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(farthest_point_sampling(cloud, count, 0));
}
BENCHMARK(BM_FarthestPointSampling)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
