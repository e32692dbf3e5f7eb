#include <benchmark/benchmark.h>

#include "diffant/codec.hpp"
#include "diffant/infer.hpp"
#include "diffant/net.hpp"
#include "diffant/rng.hpp"
#include "diffant/schedule.hpp"

using namespace diffant;

namespace {

ModelConfig bench_cfg() {
  ModelConfig c;
  c.input_dim = 32;
  c.enc_dim = 64;
  c.dec_dim = 64;
  c.enc_layers = 2;
  c.dec_layers = 2;
  c.heads = 4;
  c.queries = 8;
  c.classes = 13;
  c.schedule_steps = 100;
  return c;
}

const Model& bench_model() {
  static Model model(bench_cfg(), 1);
  return model;
}

}  // namespace

static void BM_schedule_build(benchmark::State& state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(make_schedule(1000, ScheduleKind::linear, 1e-4, 0.02));
}
BENCHMARK(BM_schedule_build);

static void BM_forward_marginal(benchmark::State& state) {
  const NoiseSchedule sched = make_schedule(1000, ScheduleKind::linear, 1e-4, 0.02);
  RngStream rng(1);
  const LatentSeq z0{rng.gaussian_matrix(8, 64), 0};
  const Eigen::MatrixXd noise = rng.gaussian_matrix(8, 64);
  for (auto _ : state) benchmark::DoNotOptimize(forward_marginal(sched, z0, 500, noise));
}
BENCHMARK(BM_forward_marginal);

static void BM_renoise_deterministic(benchmark::State& state) {
  const NoiseSchedule sched = make_schedule(100, ScheduleKind::sqrt_alpha_bar, 1e-4, 0.02);
  RngStream rng(1);
  const LatentSeq z0_hat{rng.gaussian_matrix(8, 64), 0};
  LatentSeq current{rng.gaussian_matrix(8, 64), 97};
  for (auto _ : state)
    benchmark::DoNotOptimize(
        renoise_from_z0hat(sched, z0_hat, current, 93, Eigen::MatrixXd(), true));
}
BENCHMARK(BM_renoise_deterministic);

static void BM_embed_decode_roundtrip(benchmark::State& state) {
  const CodecParams codec = bench_model().codec();
  ActionSequence a;
  a.classes = {0, 3, 7, 2, 12, 12, 12, 12};
  a.durations = {0.3, 0.3, 0.2, 0.2, 0, 0, 0, 0};
  for (auto _ : state) {
    const LatentSeq z0 = embed_actions(a, codec);
    benchmark::DoNotOptimize(decode_prediction(predict_actions(z0, codec), 12));
  }
}
BENCHMARK(BM_embed_decode_roundtrip);

static void BM_encode(benchmark::State& state) {
  const Model& model = bench_model();
  RngStream rng(2);
  ObservedFeatures obs;
  obs.F = rng.gaussian_matrix(state.range(0), 32);
  for (auto _ : state) benchmark::DoNotOptimize(model.encode(obs));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_encode)->Arg(64)->Arg(128)->Arg(256)->Complexity();

static void BM_denoise_step(benchmark::State& state) {
  const Model& model = bench_model();
  RngStream rng(3);
  ObservedFeatures obs;
  obs.F = rng.gaussian_matrix(128, 32);
  const EncodedObservation enc = model.encode(obs);
  const LatentSeq z{rng.gaussian_matrix(8, 64), 50};
  for (auto _ : state) benchmark::DoNotOptimize(model.denoise(z, enc));
}
BENCHMARK(BM_denoise_step);

static void BM_to_framewise(benchmark::State& state) {
  ActionSequence a;
  a.classes = {0, 3, 7, 2};
  a.durations = {0.3, 0.3, 0.2, 0.2};
  for (auto _ : state) benchmark::DoNotOptimize(to_framewise(a, 500));
}
BENCHMARK(BM_to_framewise);

BENCHMARK_MAIN();
