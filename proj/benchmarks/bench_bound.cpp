// Microbenchmarks on the default synthetic problem.

#include "dpgp/bound.hpp"
#include "dpgp/hypers.hpp"
#include "dpgp/optimizer.hpp"
#include "dpgp/pipeline.hpp"
#include "dpgp/synth.hpp"

#include <benchmark/benchmark.h>

using namespace dpgp;

namespace {

struct Problem {
  SyntheticData synth;
  ModelSpec model;
  Responsibilities resp;
};

const Problem& problem() {
  static const Problem p = [] {
    SyntheticData s = generate(SyntheticSpec{.seed = 0});
    const RunConfig c;
    ModelSpec m = c.resolve_model(s.data);
    Responsibilities r(initial_gamma(s.data.num_groups(), c.k_init, c.seed, c.gamma_init_sd));
    return Problem{std::move(s), std::move(m), std::move(r)};
  }();
  return p;
}

void BM_Bound(benchmark::State& state) {
  const Problem& p = problem();
  for (auto _ : state) benchmark::DoNotOptimize(bound(p.synth.data, p.resp, p.model).total);
}
BENCHMARK(BM_Bound)->Unit(benchmark::kMillisecond);

void BM_GradPhi(benchmark::State& state) {
  const Problem& p = problem();
  for (auto _ : state) benchmark::DoNotOptimize(grad_phi(p.synth.data, p.resp, p.model).data());
}
BENCHMARK(BM_GradPhi)->Unit(benchmark::kMillisecond);

void BM_GradHypers(benchmark::State& state) {
  const Problem& p = problem();
  for (auto _ : state) benchmark::DoNotOptimize(grad_hypers(p.synth.data, p.resp, p.model).data());
}
BENCHMARK(BM_GradHypers)->Unit(benchmark::kMillisecond);

void BM_OptimizeStep(benchmark::State& state) {
  const Problem& p = problem();
  const CollapsedObjective obj(p.synth.data, p.model);
  const auto mode = state.range(0) ? OptimizerMode::Conjugate : OptimizerMode::Steepest;
  for (auto _ : state) {
    benchmark::DoNotOptimize(optimize(obj, p.resp, OptimizerConfig{.mode = mode, .max_iters = 1}).bound);
  }
}
BENCHMARK(BM_OptimizeStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
