#include <benchmark/benchmark.h>

#include <random>

#include "hwgp/hankel.hpp"
#include "hwgp/hyperopt.hpp"
#include "hwgp/implicit_gp.hpp"
#include "hwgp/predict.hpp"

using namespace hwgp;
using Eigen::VectorXd;

namespace {

VectorXd gaussian(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

DataEmbedding embedding(Eigen::Index n) {
  const HWSystem sys = make_hw_system(random_stable_system(2, 1), nonlinearity_from_name("u+sin(u)"),
                                      nonlinearity_from_name("y+sin(y)"), 0.01);
  return build_embedding(simulate_hw(sys, gaussian(n, 1), VectorXd::Zero(2), 2), 2, 4);
}

}  // namespace

static void BM_KernelBlock(benchmark::State& state) {
  const VectorXd x = gaussian(state.range(0), 3);
  const KernelSpec se = KernelSpec::squared_exponential(1.0);
  for (auto _ : state) benchmark::DoNotOptimize(kernel_block(se, x, x));
}
BENCHMARK(BM_KernelBlock)->Arg(100)->Arg(400);

static void BM_ModelAssembly(benchmark::State& state) {
  const DataEmbedding e = embedding(state.range(0));
  const HyperParams h = initial_hyper(e, 1e-3);
  for (auto _ : state) {
    ImplicitGPModel m(e, h);
    benchmark::DoNotOptimize(m.weights().data());
  }
}
BENCHMARK(BM_ModelAssembly)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

static void BM_PosteriorF(benchmark::State& state) {
  const DataEmbedding e = embedding(100);
  const ImplicitGPModel m(e, initial_hyper(e, 1e-3));
  const VectorXd q = gaussian(m.query_dim(), 4);
  for (auto _ : state) benchmark::DoNotOptimize(m.posterior_f(q));
}
BENCHMARK(BM_PosteriorF)->Unit(benchmark::kMicrosecond);

static void BM_Predict(benchmark::State& state) {
  const DataEmbedding e = embedding(100);
  const ImplicitGPModel m(e, initial_hyper(e, 1e-3));
  const VectorXd u = gaussian(6, 5), yp = gaussian(2, 6);
  PredictOptions opt;
  opt.global_search = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(predict(m, u, yp, opt));
}
BENCHMARK(BM_Predict)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_JmapmlGradient(benchmark::State& state) {
  const DataEmbedding e = embedding(100);
  const JmapmlObjective f(e, prior_precision(build_S_gamma(2, 4, Zeta{})));
  VectorXd x = f.theta(initial_hyper(e, 1e-3));
  for (auto _ : state) {
    x(0) += 1e-9;  // defeat the last-evaluation cache
    benchmark::DoNotOptimize(f.gradient(x));
  }
}
BENCHMARK(BM_JmapmlGradient)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
