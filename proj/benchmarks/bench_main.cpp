#include <benchmark/benchmark.h>

#include <vector>

#include "lpaf/factorize.hpp"
#include "lpaf/linalg.hpp"
#include "lpaf/mixedrank.hpp"
#include "lpaf/nn.hpp"
#include "lpaf/prune.hpp"
#include "lpaf/rng.hpp"

using namespace lpaf;

namespace {

void BM_Svd(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Matrix w = Matrix::random_normal(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(svd(w));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Svd)->RangeMultiplier(2)->Range(16, 256)->Unit(benchmark::kMillisecond)->Complexity();

void BM_SparsityAwareFactorize(benchmark::State& state) {
  Rng rng(2);
  Matrix w = Matrix::random_normal(256, 256, rng);
  for (double& v : w.data())
    if (!rng.bernoulli(0.3)) v = 0.0;
  const RowImportance imp = row_importance(Matrix::random_normal(256, 256, rng));
  for (auto _ : state) benchmark::DoNotOptimize(sparsity_aware_factorize(w, imp, 25));
}
BENCHMARK(BM_SparsityAwareFactorize)->Unit(benchmark::kMillisecond);

MlpModel desk_model() {
  return MlpModel::create(64, std::vector<std::size_t>{256, 256}, 10, Task::kClassification, 3);
}

void BM_ForwardBackwardDense(benchmark::State& state) {
  Rng rng(3);
  const MlpModel m = desk_model();
  const Matrix x = Matrix::random_normal(32, 64, rng);
  std::vector<double> y(32);
  for (double& v : y) v = static_cast<double>(rng.below(10));
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grads(m, x, y));
}
BENCHMARK(BM_ForwardBackwardDense)->Unit(benchmark::kMicrosecond);

void BM_ForwardBackwardFactorized(benchmark::State& state) {
  Rng rng(4);
  FactorizeSpec spec;
  spec.k = static_cast<std::size_t>(state.range(0));
  spec.weighting = Weighting::kNone;
  const MlpModel m = factorize_model(desk_model(), spec);
  const Matrix x = Matrix::random_normal(32, 64, rng);
  std::vector<double> y(32);
  for (double& v : y) v = static_cast<double>(rng.below(10));
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grads(m, x, y));
}
BENCHMARK(BM_ForwardBackwardFactorized)->Arg(10)->Arg(25)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_PruneTo(benchmark::State& state) {
  Rng rng(5);
  const Matrix w0 = Matrix::random_normal(256, 256, rng);
  PruneState s = make_prune_state(w0, PruneMethod::kZeroOrder);
  for (auto _ : state) {
    Matrix w = w0;
    prune_to(s, w, 0.1);
    benchmark::DoNotOptimize(w);
  }
}
BENCHMARK(BM_PruneTo)->Unit(benchmark::kMicrosecond);

void BM_ConsistencyLoss(benchmark::State& state) {
  Rng rng(6);
  const Matrix a = Matrix::random_normal(32, 10, rng);
  const Matrix b = Matrix::random_normal(32, 10, rng);
  for (auto _ : state) benchmark::DoNotOptimize(consistency_loss(a, b, Task::kClassification));
}
BENCHMARK(BM_ConsistencyLoss)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
