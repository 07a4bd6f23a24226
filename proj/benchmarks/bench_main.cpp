#include <benchmark/benchmark.h>

#include "resbridge/bridge.hpp"
#include "resbridge/optimizer.hpp"
#include "resbridge/spectral.hpp"
#include "resbridge/synth.hpp"

using namespace resbridge;

namespace {

ModelBundle default_bundle(uint64_t seed = 0) {
  RngStream init(seed, "init");
  NormStats norm{Tensor::zeros({2}), Tensor::full({2}, 1.0)};
  return init_bundle(16, 2, 8, {128, 128}, norm, init);
}

void BM_DctForward(benchmark::State& state) {
  const int64_t T = state.range(0);
  RngStream s(0, "data");
  const Tensor x = s.normal_tensor({T, 2});
  for (auto _ : state) benchmark::DoNotOptimize(dct_forward(x));
  state.SetItemsProcessed(state.iterations() * T * 2);
}
BENCHMARK(BM_DctForward)->Arg(16)->Arg(64)->Arg(256);

void BM_Decompose(benchmark::State& state) {
  RngStream s(0, "data");
  const Tensor x = s.normal_tensor({16, 2});
  for (auto _ : state) benchmark::DoNotOptimize(decompose(x, 3));
}
BENCHMARK(BM_Decompose);

void BM_RngNormalTensor(benchmark::State& state) {
  RngStream s(0, "source-noise");
  const int64_t n = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(s.normal_tensor({n}));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_RngNormalTensor)->Arg(1024)->Arg(65536);

void BM_DatasetGeneration(benchmark::State& state) {
  TaskSpec spec;
  spec.sample_count = static_cast<int>(state.range(0));
  for (auto _ : state) {
    RngStream s(0, "data");
    benchmark::DoNotOptimize(generate_dataset(spec, s));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DatasetGeneration)->Arg(1000)->Arg(10000);

void BM_TrainingStep(benchmark::State& state) {
  const int64_t batch = state.range(0);
  ModelBundle bundle = default_bundle();
  RngStream data(1, "data");
  const Tensor conds = data.normal_tensor({batch, 8});
  const Tensor x1 = data.normal_tensor({batch, 32});
  BridgeConfig bc;
  OptimizerConfig oc;
  std::vector<Tensor*> params = bundle.all_params();
  AdamW opt(oc, params);
  RngStream sn(1, "source-noise"), ts(1, "time-sampling");
  for (auto _ : state) {
    Tape tape;
    const LossGraph g = build_training_loss(tape, bundle, conds, x1, bc, sn, ts);
    tape.backward(g.total);
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (Tape::NodeId p : g.anchor_params) grads.push_back(tape.grad(p));
    for (Tape::NodeId p : g.velocity_params) grads.push_back(tape.grad(p));
    opt.step(params, grads);
    benchmark::DoNotOptimize(g.parts.total);
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_TrainingStep)->Arg(16)->Arg(64)->Arg(256);

void BM_SampleBatch(benchmark::State& state) {
  const int nfe = static_cast<int>(state.range(0));
  const ModelBundle bundle = default_bundle();
  RngStream data(2, "data");
  const Tensor conds = data.normal_tensor({64, 8});
  const BridgeConfig bc;
  for (auto _ : state) {
    RngStream s(2, "sample");
    benchmark::DoNotOptimize(sample_batch(bundle, conds, nfe, bc, s));
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_SampleBatch)->Arg(1)->Arg(4)->Arg(16)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
