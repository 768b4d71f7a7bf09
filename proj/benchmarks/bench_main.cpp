// Microbenchmarks for the hot paths: the scan kernel itself, the four-way
// spatial scan, a full state-space block, and the two model forwards.

#include <benchmark/benchmark.h>

#include <vector>

#include "vmudiff/pipeline.hpp"

using namespace vmudiff;

namespace {

void BM_ScanForward(benchmark::State& state) {
  const int L = static_cast<int>(state.range(0)), D = 16, N = 8;
  Rng rng(42);
  std::vector<float> u(static_cast<std::size_t>(L) * D), y(u.size());
  std::vector<float> abar(static_cast<std::size_t>(L) * D * N), h(abar.size());
  std::vector<float> bbar(static_cast<std::size_t>(L) * N), c(bbar.size());
  for (auto& v : u) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (auto& v : abar) v = static_cast<float>(rng.uniform(0.1, 0.95));
  for (auto& v : bbar) v = static_cast<float>(rng.uniform(-0.1, 0.1));
  for (auto& v : c) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (auto _ : state) {
    scan_forward(L, D, N, u.data(), abar.data(), bbar.data(), false, c.data(), 1.0f, h.data(),
                 y.data());
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * L);
}

void BM_Ss2dForward(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  ParamStore ps;
  Rng rng(42);
  Ss2dConfig cfg;
  cfg.d_model = 16;
  Ss2dT<float> op(ps, "b", cfg, rng);
  Tensor x({16, side, side});
  for (auto& v : x.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (auto _ : state) {
    Tensor y = op.forward(x);
    benchmark::DoNotOptimize(y.v.data());
  }
}

void BM_VmssBlock(benchmark::State& state) {
  ParamStore ps;
  Rng rng(42);
  Ss2dConfig scan;
  VmssBlockT<float> block(ps, "b", 32, scan, rng);
  Tensor x({32, 16, 16});
  for (auto& v : x.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (auto _ : state) {
    Tensor y = block.forward(x);
    benchmark::DoNotOptimize(y.v.data());
  }
}

void BM_CoarseForward(benchmark::State& state) {
  RunConfig rc;
  ParamStore ps;
  Rng rng(42);
  VmuNetT<float> net(ps, rc.vmu_config(), rng);
  Tensor radar({rc.n_in, 1, rc.h, rc.w}), sat({rc.n_in, 4, rc.h, rc.w});
  for (auto& v : radar.v) v = static_cast<float>(rng.uniform(0.0, 1.0));
  for (auto& v : sat.v) v = static_cast<float>(rng.uniform(0.0, 1.0));
  for (auto _ : state) {
    Tensor mu = net.forward(radar, sat);
    benchmark::DoNotOptimize(mu.v.data());
  }
}

void BM_DenoiserEps(benchmark::State& state) {
  RunConfig rc;
  ParamStore ps;
  Rng rng(42);
  NoiseSchedule sched = NoiseSchedule::linear(rc.t_diff);
  StdiffT<float> net(ps, rc.stdiff_config(), sched, rng);
  Tensor mu({rc.m_out, rc.h, rc.w});
  Tensor f({rc.stdiff_config().f_channels, rc.stdiff_config().f_h, rc.stdiff_config().f_w});
  Tensor z({rc.m_out, rc.h, rc.w});
  for (auto& v : mu.v) v = static_cast<float>(rng.uniform(0.0, 1.0));
  for (auto& v : f.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (auto& v : z.v) v = static_cast<float>(rng.normal());
  net.build_condition(mu, f);
  for (auto _ : state) {
    Tensor eps = net.forward_eps(z, 500);
    benchmark::DoNotOptimize(eps.v.data());
  }
}

}  // namespace

BENCHMARK(BM_ScanForward)->Arg(256)->Arg(512)->Arg(1024)->Arg(2048);
BENCHMARK(BM_Ss2dForward)->Arg(8)->Arg(16)->Arg(32);
BENCHMARK(BM_VmssBlock);
BENCHMARK(BM_CoarseForward);
BENCHMARK(BM_DenoiserEps);

BENCHMARK_MAIN();
