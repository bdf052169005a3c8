#include <benchmark/benchmark.h>

#include "fat/adam.hpp"
#include "fat/nn.hpp"
#include "fat/rng.hpp"
#include "fat/trainer.hpp"
#include "fat/vat.hpp"

namespace {

fat::DenseMatrix random_batch(std::size_t n, std::size_t d, std::uint64_t seed) {
  fat::Rng rng(seed);
  fat::DenseMatrix x(n, d);
  for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
  return x;
}

void bm_forward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  fat::MlpModel model = fat::he_init({784, 256, 128, 10}, fat::Activation::Relu, 1);
  const fat::DenseMatrix x = random_batch(n, 784, 2);
  for (auto _ : state) {
    auto r = fat::forward_eval(model, x);
    benchmark::DoNotOptimize(r.logits.data.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(n));
}
BENCHMARK(bm_forward)->Arg(32)->Arg(128);

void bm_backprop(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  fat::MlpModel model = fat::he_init({784, 256, 128, 10}, fat::Activation::Relu, 1);
  const fat::DenseMatrix x = random_batch(n, 784, 3);
  const fat::DenseMatrix dl = random_batch(n, 10, 4);
  const auto fr = fat::forward_eval(model, x);
  for (auto _ : state) {
    auto g = fat::backprop(model, fr.cache, dl);
    benchmark::DoNotOptimize(g.input_grads.data.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(n));
}
BENCHMARK(bm_backprop)->Arg(32)->Arg(128);

void bm_adversarial_directions(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  fat::MlpModel model = fat::he_init({784, 256, 128, 10}, fat::Activation::Relu, 1);
  const fat::DenseMatrix x = random_batch(n, 784, 5);
  fat::VatHyper hy;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto adv = fat::adversarial_directions(model, x, hy, ++seed);
    benchmark::DoNotOptimize(adv.directions.data.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(n));
}
BENCHMARK(bm_adversarial_directions)->Arg(32)->Arg(128);

void bm_fat_step(benchmark::State& state) {
  fat::FatConfig cfg;
  cfg.hidden = {256, 128};
  cfg.vat.epsilon = 1.5;
  fat::MlpModel model = fat::he_init({784, 256, 128, 10}, fat::Activation::Relu, 7);
  fat::AdamState adam = fat::init_adam(model);
  const fat::DenseMatrix xl = random_batch(32, 784, 11);
  std::vector<int> yl(32);
  for (std::size_t i = 0; i < yl.size(); ++i) yl[i] = static_cast<int>(i % 10);
  const fat::DenseMatrix xu = random_batch(100, 784, 13);
  std::uint64_t seed = 0;
  for (auto _ : state)
    fat::fat_step(model, adam, xl, yl, xu, 1.0, cfg, ++seed);
}
BENCHMARK(bm_fat_step);

}  // namespace

BENCHMARK_MAIN();
