#include <benchmark/benchmark.h>

#include "crowdmac/model.hpp"
#include "crowdmac/simdata.hpp"

namespace {

using namespace crowdmac;

struct Fixture {
  ModelState state;
  DensitySequence seq;
  TokenField tokens;
  MaskPlan plan;
};

// Arg: embedding width; encoder depth 2, decoder depth 1 as in the desk-scale runs.
Fixture make_fixture(int dim) {
  ModelConfig cfg;
  cfg.embed_dim = dim;
  cfg.encoder_depth = 2;
  cfg.decoder_dim = 32;
  cfg.decoder_depth = 1;
  SimConfig sim;
  sim.frames = 20;
  sim.seed = 13;
  Fixture f{init_model(cfg, 1), {}, {}, {}};
  f.seq = rasterize_sequence(window_split(simulate_crowd(sim), 8, 12, 20).front(), 80, 80);
  f.tokens = cubify(f.seq, cfg.grid);
  f.plan = inference_mask(cfg.grid.n_temporal(), cfg.grid.n_spatial(), cfg.obs_slices());
  return f;
}

void BM_Forward(benchmark::State& state) {
  const Fixture f = make_fixture(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(forward(f.seq, f.plan, f.state));
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_LossAndGradient(benchmark::State& state) {
  const Fixture f = make_fixture(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_gradient(f.state, f.tokens, f.plan));
}
BENCHMARK(BM_LossAndGradient)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_PredictFuture(benchmark::State& state) {
  const Fixture f = make_fixture(32);
  DensitySequence observed = f.seq;
  observed.frames.resize(8);
  for (auto _ : state) benchmark::DoNotOptimize(predict_future(observed, f.state));
}
BENCHMARK(BM_PredictFuture)->Unit(benchmark::kMillisecond);

}  // namespace
