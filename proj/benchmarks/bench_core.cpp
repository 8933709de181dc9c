// Microbenchmarks for the hot paths: one adjustment step at both update
// rules, the fused candidate-weight product, an optimizer step, and a full
// forward/backward pass at training dimensions (m = 520, u = 100).

#include <benchmark/benchmark.h>

#include "ctxenc/adam.hpp"
#include "ctxenc/model.hpp"
#include "ctxenc/ops.hpp"
#include "ctxenc/rng.hpp"
#include "ctxenc/tensor.hpp"

namespace {

using namespace ctxenc;

constexpr std::size_t kModelDim = 520;
constexpr std::size_t kRank = 100;

ContextualizerModel make_model(std::size_t steps, bool recurrent = true) {
  ModelDims dims;
  dims.model_dim = kModelDim;
  dims.rank = kRank;
  dims.steps = steps;
  dims.recurrent = recurrent;
  Rng rng(2020);
  return ContextualizerModel(dims, rng);
}

void BM_CandidateWeightMatrix(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  ContextualizerModel model = make_model(1);
  Rng rng(7);
  const Tensor x = Tensor::uniform({n, kModelDim}, rng, -1.0, 1.0);
  const Tensor c = Tensor::uniform({kModelDim}, rng, -1.0, 1.0);
  for (auto _ : state) {
    Tensor weights = model.candidate_weight_matrix(x, c, 0);
    benchmark::DoNotOptimize(weights.values().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n));
}
BENCHMARK(BM_CandidateWeightMatrix)->RangeMultiplier(4)->Range(8, 128);

void BM_ContextStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  ContextualizerModel model = make_model(1);
  Rng rng(7);
  const Tensor x = Tensor::uniform({n, kModelDim}, rng, -1.0, 1.0);
  const Tensor c = Tensor::uniform({kModelDim}, rng, -1.0, 1.0);
  for (auto _ : state) {
    auto [c_next, weights] = model.contextualize_step(x, c, 0);
    benchmark::DoNotOptimize(c_next.values().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ContextStep)->RangeMultiplier(2)->Range(8, 256)->Complexity(benchmark::oN);

void BM_TokenWiseForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  ContextualizerModel model = make_model(1);
  Rng rng(7);
  const Tensor x = Tensor::uniform({n, kModelDim}, rng, -1.0, 1.0);
  for (auto _ : state) {
    Tensor logit = model.token_wise_forward_from_matrix(x);
    benchmark::DoNotOptimize(logit.item());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_TokenWiseForward)->RangeMultiplier(2)->Range(8, 64)->Complexity(benchmark::oNSquared);

void BM_AdamStep(benchmark::State& state) {
  ContextualizerModel model = make_model(1);
  Adam optimizer(model.parameters());
  for (auto _ : state) {
    optimizer.step();
    benchmark::DoNotOptimize(optimizer.step_count());
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<int64_t>(model.parameter_count()));
}
BENCHMARK(BM_AdamStep);

void BM_ForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  ContextualizerModel model = make_model(5);
  Rng rng(7);
  const Tensor x = Tensor::uniform({n, kModelDim}, rng, -1.0, 1.0);
  const Tensor c0 = Tensor::ones({kModelDim});
  for (auto _ : state) {
    Tape tape;
    Tensor loss = bce_with_logits(model.forward_from_matrix(x, c0), 1);
    backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ForwardBackward)->RangeMultiplier(2)->Range(8, 64)->Complexity(benchmark::oN);

}  // namespace

int main(int argc, char** argv) {
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
