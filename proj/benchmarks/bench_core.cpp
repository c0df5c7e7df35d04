#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "neuronscope/embedding.hpp"
#include "neuronscope/noise.hpp"
#include "neuronscope/sae.hpp"
#include "neuronscope/train.hpp"

using namespace neuronscope;

namespace {

SaeModel bench_model(std::uint32_t d, std::uint32_t omega, std::uint32_t k) {
  SaeModel m;
  m.d = d;
  m.omega = omega;
  m.k = k;
  m.groups = {omega / 2, omega};
  std::mt19937_64 gen(7);
  std::normal_distribution<float> nd(0.0f, 1.0f / std::sqrt(float(d)));
  const std::size_t wd = std::size_t(omega) * d;
  m.w_enc.resize(wd);
  m.w_dec.resize(wd);
  for (auto& x : m.w_enc) x = nd(gen);
  for (auto& x : m.w_dec) x = nd(gen);
  m.b_enc.assign(omega, 0.0f);
  m.b_dec.assign(d, 0.0f);
  m.normalize_decoder();
  return m;
}

EmbeddingMatrix bench_data(std::size_t count, std::size_t dim) {
  EmbeddingMatrix data;
  data.count = count;
  data.dim = dim;
  data.values.resize(count * dim);
  std::mt19937_64 gen(11);
  std::normal_distribution<float> nd(0.0f, 2.0f);
  for (auto& x : data.values) x = nd(gen);
  return data;
}

}  // namespace

static void BM_EncodeTopK(benchmark::State& state) {
  const auto omega = static_cast<std::uint32_t>(state.range(0));
  const auto model = bench_model(64, omega, 8);
  const auto data = bench_data(1, 64);
  for (auto _ : state) {
    benchmark::DoNotOptimize(encode_topk(model, data.row(0)));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_EncodeTopK)->Arg(512)->Arg(2048)->Arg(8192);

static void BM_EncodeBatchTopK(benchmark::State& state) {
  const auto batch_size = static_cast<std::size_t>(state.range(0));
  const auto model = bench_model(64, 512, 8);
  const auto data = bench_data(batch_size, 64);
  for (auto _ : state) {
    benchmark::DoNotOptimize(encode_batch_topk(model, data));
  }
  state.SetItemsProcessed(state.iterations() * batch_size);
}
BENCHMARK(BM_EncodeBatchTopK)->Arg(64)->Arg(512);

static void BM_Decode(benchmark::State& state) {
  const auto model = bench_model(64, 512, 8);
  const auto data = bench_data(1, 64);
  const auto z = encode_topk(model, data.row(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(decode(model, z));
  }
}
BENCHMARK(BM_Decode);

static void BM_GradLoss(benchmark::State& state) {
  const auto model = bench_model(64, 512, 8);
  const auto data = bench_data(static_cast<std::size_t>(state.range(0)), 64);
  for (auto _ : state) {
    benchmark::DoNotOptimize(grad_loss(model, data));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GradLoss)->Arg(64)->Arg(512);

static void BM_Perturb(benchmark::State& state) {
  const auto schedule = default_schedule();
  const auto data = bench_data(1, 1024);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(perturb(data.row(0), 500, schedule, ++seed));
  }
}
BENCHMARK(BM_Perturb);

BENCHMARK_MAIN();
