#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cxr/denoise.hpp"
#include "cxr/error.hpp"
#include "cxr/image.hpp"
#include "cxr/rng.hpp"

using namespace cxr;

namespace {

GrayImage step_image(int side, double lo, double hi) {
  GrayImage img(side, side, lo);
  for (int y = 0; y < side; ++y) {
    for (int x = side / 2; x < side; ++x) img.at(x, y) = hi;
  }
  return img;
}

GrayImage add_noise(const GrayImage& img, double sigma, std::uint64_t seed) {
  GrayImage out = img;
  Rng rng(seed);
  for (double& v : out.data) {
    v = std::min(255.0, std::max(0.0, v + sigma * rng.normal()));
  }
  return out;
}

}  // namespace

TEST_CASE("gaussian blur preserves constant images") {
  GrayImage img(16, 12, 100.0);
  const GrayImage out = gaussian_blur(img, 2.0);
  for (double v : out.data) CHECK(v == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("gaussian blur spreads an impulse symmetrically") {
  GrayImage img(15, 15, 0.0);
  img.at(7, 7) = 255.0;
  const GrayImage out = gaussian_blur(img, 1.5);
  CHECK(out.at(7, 7) > out.at(8, 7));
  CHECK(out.at(6, 7) == doctest::Approx(out.at(8, 7)));
  CHECK(out.at(7, 6) == doctest::Approx(out.at(7, 8)));
  CHECK(out.at(6, 7) == doctest::Approx(out.at(7, 6)));
}

TEST_CASE("gradient magnitude of a constant image equals eps") {
  GrayImage img(8, 8, 42.0);
  const GrayImage mag = grad_magnitude(img, 1e-3);
  for (double v : mag.data) CHECK(v == doctest::Approx(1e-3));
}

TEST_CASE("gradient magnitude sees the ramp slope") {
  GrayImage img(6, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 6; ++x) img.at(x, y) = 10.0 * x;
  }
  const GrayImage mag = grad_magnitude(img, 0.0);
  CHECK(mag.at(2, 1) == doctest::Approx(10.0));
  // One-sided zero difference on the last column.
  CHECK(mag.at(5, 1) == doctest::Approx(0.0));
}

TEST_CASE("edge weights are in (0, 1] and dip at edges") {
  const GrayImage img = step_image(32, 40.0, 200.0);
  TVParams p;
  const WeightField omega = edge_weight(img, p);
  double at_edge = 1.0, flat = 0.0;
  for (int y = 0; y < 32; ++y) {
    at_edge = std::min(at_edge, omega.data[y * 32 + 15]);
    flat = std::max(flat, omega.data[y * 32 + 2]);
  }
  for (double w : omega.data) {
    CHECK(w > 0.0);
    CHECK(w <= 1.0);
  }
  CHECK(at_edge < flat);
}

TEST_CASE("energy of a 1x1 image matches the closed form") {
  GrayImage u(1, 1, std::exp(1.0));
  GrayImage f(1, 1, 1.0);
  WeightField omega{1, 1, {1.0}};
  // u - f*ln u = e - 1; gradient term = eps with zero differences.
  CHECK(tv_energy(u, f, omega, 1e-3) ==
        doctest::Approx(std::exp(1.0) - 1.0 + 1e-3).epsilon(1e-12));
}

TEST_CASE("energy rejects non-positive u") {
  GrayImage u(2, 1, 1.0);
  u.at(1, 0) = 0.0;
  GrayImage f(2, 1, 1.0);
  WeightField omega{2, 1, {1.0, 1.0}};
  CHECK_THROWS_AS(tv_energy(u, f, omega, 1e-3), NonPositiveU);
}

TEST_CASE("analytic energy gradient matches finite differences") {
  const int w = 6, h = 5;
  GrayImage u(w, h), f(w, h);
  Rng rng(99);
  for (double& v : u.data) v = rng.uniform(50.0, 200.0);
  for (double& v : f.data) v = rng.uniform(50.0, 200.0);
  TVParams p;
  const WeightField omega = edge_weight(f, p);

  const std::vector<double> grad = tv_energy_gradient(u, f, omega, p.eps);
  const double h_step = 1e-4;
  for (std::size_t i = 0; i < u.data.size(); ++i) {
    GrayImage up = u, dn = u;
    up.data[i] += h_step;
    dn.data[i] -= h_step;
    const double fd =
        (tv_energy(up, f, omega, p.eps) - tv_energy(dn, f, omega, p.eps)) /
        (2.0 * h_step);
    const double denom = std::max({std::abs(grad[i]), std::abs(fd), 1e-8});
    CHECK(std::abs(grad[i] - fd) / denom < 1e-6);
  }
}

TEST_CASE("denoising yields a non-increasing energy trace") {
  const GrayImage noisy = add_noise(step_image(48, 60.0, 180.0), 15.0, 5);
  TVParams p;
  p.max_iters = 60;
  const DenoiseResult res = tv_denoise(noisy, p);
  REQUIRE(res.energy_trace.size() >= 2);
  for (std::size_t i = 1; i < res.energy_trace.size(); ++i) {
    CHECK(res.energy_trace[i] <= res.energy_trace[i - 1]);
  }
  for (double v : res.image.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 255.0);
  }
}

TEST_CASE("denoising improves psnr on a noisy step image") {
  const GrayImage clean = step_image(64, 60.0, 180.0);
  const GrayImage noisy = add_noise(clean, 15.0, 6);
  const DenoiseResult res = tv_denoise(noisy, TVParams{});
  const double before = psnr(clean, noisy);
  const double after = psnr(clean, res.image);
  CHECK(after - before >= 0.5);
}

TEST_CASE("denoising is deterministic") {
  const GrayImage noisy = add_noise(step_image(32, 60.0, 180.0), 15.0, 7);
  TVParams p;
  p.max_iters = 40;
  const DenoiseResult a = tv_denoise(noisy, p);
  const DenoiseResult b = tv_denoise(noisy, p);
  REQUIRE(a.energy_trace.size() == b.energy_trace.size());
  for (std::size_t i = 0; i < a.image.data.size(); ++i) {
    CHECK(a.image.data[i] == b.image.data[i]);
  }
}

TEST_CASE("a hopeless step size raises Diverged") {
  const GrayImage noisy = add_noise(step_image(16, 60.0, 180.0), 15.0, 8);
  TVParams p;
  p.step = 1e9;
  CHECK_THROWS_AS(tv_denoise(noisy, p), Diverged);
}

TEST_CASE("an almost-flat image converges quickly to itself") {
  GrayImage img(16, 16, 120.0);
  TVParams p;
  const DenoiseResult res = tv_denoise(img, p);
  for (double v : res.image.data) CHECK(v == doctest::Approx(120.0).epsilon(0.01));
}
