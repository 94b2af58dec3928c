// Microbenchmarks for the hot paths: blur, TV descent, network forward and
// backward, AUC ranking, inpainting.

#include <benchmark/benchmark.h>

#include <vector>

#include "cxr/denoise.hpp"
#include "cxr/image.hpp"
#include "cxr/metrics.hpp"
#include "cxr/network.hpp"
#include "cxr/rng.hpp"
#include "cxr/tensor.hpp"

namespace {

cxr::GrayImage noisy_image(int side, std::uint64_t seed) {
  cxr::GrayImage img(side, side, 128.0);
  cxr::Rng rng(seed);
  for (double& v : img.data) {
    v = std::min(255.0, std::max(0.0, v + 40.0 * rng.normal()));
  }
  return img;
}

void bm_gaussian_blur(benchmark::State& state) {
  const cxr::GrayImage img = noisy_image(256, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cxr::gaussian_blur(img, 1.5));
  }
}
BENCHMARK(bm_gaussian_blur);

void bm_tv_denoise_steps(benchmark::State& state) {
  const cxr::GrayImage img = noisy_image(128, 2);
  cxr::TVParams p;
  p.max_iters = static_cast<int>(state.range(0));
  p.tol = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(cxr::tv_denoise(img, p));
  }
}
BENCHMARK(bm_tv_denoise_steps)->Arg(10);

void bm_inpaint(benchmark::State& state) {
  const cxr::GrayImage img = noisy_image(256, 3);
  cxr::BinaryMask mask(img.width, img.height);
  for (int y = 20; y < 40; ++y) {
    for (int x = 20; x < 120; ++x) mask.set(x, y, true);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(cxr::inpaint(img, mask));
  }
}
BENCHMARK(bm_inpaint);

cxr::NetworkSpec small_spec() {
  cxr::NetworkSpec spec;
  spec.block_channels = {8, 16};
  spec.dense_units = 32;
  spec.num_classes = 2;
  spec.in_channels = 3;
  spec.in_height = 64;
  spec.in_width = 64;
  return spec;
}

void bm_forward(benchmark::State& state) {
  const cxr::Network net = cxr::build_baseline(small_spec(), 7);
  cxr::Tensor batch(static_cast<int>(state.range(0)), 3, 64, 64);
  cxr::Rng rng(4);
  for (double& v : batch.data) v = rng.uniform();
  for (auto _ : state) {
    benchmark::DoNotOptimize(cxr::forward(net, batch));
  }
}
BENCHMARK(bm_forward)->Arg(10);

void bm_forward_backward(benchmark::State& state) {
  cxr::Network net = cxr::build_baseline(small_spec(), 7);
  const int n = static_cast<int>(state.range(0));
  cxr::Tensor batch(n, 3, 64, 64);
  cxr::Rng rng(5);
  for (double& v : batch.data) v = rng.uniform();
  std::vector<int> targets(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = i % 2;
  const std::vector<double> weights{1.0, 1.0};
  for (auto _ : state) {
    cxr::ForwardCache cache;
    cxr::forward(net, batch, &cache);
    benchmark::DoNotOptimize(cxr::backward(net, cache, targets, weights));
  }
}
BENCHMARK(bm_forward_backward)->Arg(10);

void bm_roc_auc(benchmark::State& state) {
  const int n = 10000;
  cxr::Rng rng(6);
  std::vector<int> truths(n);
  std::vector<std::vector<double>> scores(n, std::vector<double>(2));
  for (int i = 0; i < n; ++i) {
    truths[i] = rng.uniform() < 0.3 ? 1 : 0;
    const double s = 0.3 * rng.normal() + (truths[i] ? 0.7 : 0.3);
    scores[i][1] = s;
    scores[i][0] = 1.0 - s;
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(cxr::roc_auc(truths, scores, 2));
  }
}
BENCHMARK(bm_roc_auc);

}  // namespace

BENCHMARK_MAIN();
