#include <benchmark/benchmark.h>

#include <memory>

#include "lupa/data.hpp"
#include "lupa/engine.hpp"
#include "lupa/objectives.hpp"

using namespace lupa;

namespace {

std::shared_ptr<const LogisticObjective> logistic(std::size_t dim) {
  auto data = std::make_shared<Dataset>(generate_synthetic_logistic(4096, dim, 1, 0.1));
  return std::make_shared<LogisticObjective>(data, 1e-4, false);
}

void BM_DrawBatch(benchmark::State& state) {
  const auto B = static_cast<std::size_t>(state.range(0));
  std::uint64_t step = 0;
  for (auto _ : state) {
    auto b = draw_batch({7, 3, 11}, step++, 100000, B);
    benchmark::DoNotOptimize(b.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(B));
}
BENCHMARK(BM_DrawBatch)->Arg(1)->Arg(128);

void BM_LogisticStochasticGradient(benchmark::State& state) {
  const auto dim = static_cast<std::size_t>(state.range(0));
  auto obj = logistic(dim);
  const auto batch = draw_batch({1, 0, 0}, 0, 4096, 128);
  Vec x(dim, 0.01), g(dim);
  for (auto _ : state) {
    obj->stochastic_gradient(x, batch, g);
    benchmark::DoNotOptimize(g.data());
  }
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_LogisticStochasticGradient)->Arg(20)->Arg(200);

void BM_LocalStep(benchmark::State& state) {
  auto obj = std::make_shared<PerPointQuadratics>(PerPointQuadratics::gaussian(1000, 50, 1.0, 1));
  const auto batch = draw_batch({1, 0, 0}, 0, 1000, 8);
  WorkerState w{0, Vec(50, 1.0)};
  Vec scratch(50);
  for (auto _ : state) {
    local_step(w, *obj, batch, 1e-6, scratch);
    benchmark::DoNotOptimize(w.x.data());
  }
}
BENCHMARK(BM_LocalStep);

void BM_MeanModel(benchmark::State& state) {
  const auto p = static_cast<std::uint32_t>(state.range(0));
  std::vector<WorkerState> ws;
  for (std::uint32_t j = 0; j < p; ++j) ws.push_back({j, Vec(2000, double(j))});
  Vec out(2000);
  for (auto _ : state) {
    mean_model(ws, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_MeanModel)->Arg(4)->Arg(16);

void BM_Run(benchmark::State& state) {
  RunConfig c;
  c.objective = logistic(20);
  c.p = 4;
  c.B = 32;
  c.T = 500;
  c.lr = LrSchedule::constant(0.01);
  c.sync = SyncSchedule::fixed(static_cast<std::int64_t>(state.range(0)));
  c.x0 = Vec(20, 0.0);
  c.eval_every = c.T;
  for (auto _ : state) {
    auto tr = run(c);
    benchmark::DoNotOptimize(tr.final_x.data());
  }
  state.SetItemsProcessed(state.iterations() * c.T * c.p);
}
BENCHMARK(BM_Run)->Arg(1)->Arg(25)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
