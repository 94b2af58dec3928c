#include "cxr/denoise.hpp"

#include <algorithm>
#include <cmath>

#include "cxr/error.hpp"

namespace cxr {

namespace {

// Folds an arbitrary index into [0, n) by half-sample symmetric reflection
// (-1 -> 0, -2 -> 1, n -> n-1, ...). Handles radii larger than n.
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    k[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
    sum += k[t + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

void check_params(const TVParams& p) {
  if (p.k <= 0 || p.sigma <= 0 || p.step <= 0 || p.eps <= 0) {
    throw Error("TVParams: k, sigma, step and eps must all be > 0");
  }
}

}  // namespace

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  if (sigma <= 0) throw Error("gaussian_blur: sigma must be > 0");
  const std::vector<double> k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  const int w = img.width, h = img.height;

  GrayImage tmp(w, h);
  tmp.bit_depth = img.bit_depth;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) {
        acc += k[t + radius] * img.at(reflect_index(x + t, w), y);
      }
      tmp.at(x, y) = acc;
    }
  }
  GrayImage out(w, h);
  out.bit_depth = img.bit_depth;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) {
        acc += k[t + radius] * tmp.at(x, reflect_index(y + t, h));
      }
      out.at(x, y) = std::clamp(acc, 0.0, 255.0);
    }
  }
  return out;
}

GrayImage grad_magnitude(const GrayImage& img, double eps) {
  if (eps < 0) throw Error("grad_magnitude: eps must be >= 0");
  const int w = img.width, h = img.height;
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double ux = x < w - 1 ? img.at(x + 1, y) - img.at(x, y) : 0.0;
      const double uy = y < h - 1 ? img.at(x, y + 1) - img.at(x, y) : 0.0;
      out.at(x, y) = std::sqrt(ux * ux + uy * uy + eps * eps);
    }
  }
  return out;
}

WeightField edge_weight(const GrayImage& img, const TVParams& p) {
  check_params(p);
  const GrayImage mag = grad_magnitude(gaussian_blur(img, p.sigma), 0.0);
  WeightField omega;
  omega.width = img.width;
  omega.height = img.height;
  omega.data.resize(img.size());
  for (std::size_t i = 0; i < mag.data.size(); ++i) {
    omega.data[i] = 1.0 / (1.0 + p.k * mag.data[i]);
  }
  return omega;
}

namespace {

void check_same_dims(const GrayImage& u, const GrayImage& f, const WeightField& omega) {
  if (u.width != f.width || u.height != f.height ||
      u.width != omega.width || u.height != omega.height) {
    throw ShapeMismatch("tv_energy: u, f and omega must share dimensions");
  }
}

}  // namespace

double tv_energy(const GrayImage& u, const GrayImage& f,
                 const WeightField& omega, double eps) {
  check_same_dims(u, f, omega);
  const int w = u.width, h = u.height;
  double energy = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double uv = u.at(x, y);
      if (uv <= 0.0) throw NonPositiveU("tv_energy: u must be strictly positive");
      energy += uv - f.at(x, y) * std::log(uv);
      const double ux = x < w - 1 ? u.at(x + 1, y) - uv : 0.0;
      const double uy = y < h - 1 ? u.at(x, y + 1) - uv : 0.0;
      energy += omega.data[static_cast<std::size_t>(y) * w + x] *
                std::sqrt(ux * ux + uy * uy + eps * eps);
    }
  }
  return energy;
}

std::vector<double> tv_energy_gradient(const GrayImage& u, const GrayImage& f,
                                       const WeightField& omega, double eps) {
  check_same_dims(u, f, omega);
  const int w = u.width, h = u.height;
  const std::size_t n = u.size();

  // Flux per pixel: omega * (ux, uy) / |grad u|_eps with forward differences.
  std::vector<double> fx(n, 0.0), fy(n, 0.0), grad(n, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double uv = u.data[i];
      if (uv <= 0.0) throw NonPositiveU("tv_energy_gradient: u must be strictly positive");
      const double ux = x < w - 1 ? u.data[i + 1] - uv : 0.0;
      const double uy = y < h - 1 ? u.data[i + w] - uv : 0.0;
      const double mag = std::sqrt(ux * ux + uy * uy + eps * eps);
      const double c = omega.data[i] / mag;
      if (x < w - 1) fx[i] = c * ux;
      if (y < h - 1) fy[i] = c * uy;
      grad[i] = 1.0 - f.data[i] / uv;
    }
  }
  // Divergence as the negative adjoint of the forward difference.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      grad[i] -= fx[i] + fy[i];
      if (x > 0) grad[i] += fx[i - 1];
      if (y > 0) grad[i] += fy[i - w];
    }
  }
  return grad;
}

DenoiseResult tv_denoise(const GrayImage& f, const TVParams& p) {
  check_params(p);
  const std::size_t n = f.size();

  // Internal domain [1, 256]: ln u needs u > 0.
  GrayImage fi = f;
  for (double& v : fi.data) v += 1.0;

  const WeightField omega = edge_weight(f, p);  // lagged weight, fixed from f

  GrayImage u = fi;
  for (double& v : u.data) v = std::max(v, 1.0);

  DenoiseResult result;
  double energy = tv_energy(u, fi, omega, p.eps);
  result.energy_trace.push_back(energy);

  double step = p.step;
  int consecutive_increases = 0;
  constexpr double kPositiveFloor = 1e-6;

  for (int iter = 0; iter < p.max_iters; ++iter) {
    const std::vector<double> grad = tv_energy_gradient(u, fi, omega, p.eps);
    GrayImage trial = u;
    for (std::size_t i = 0; i < n; ++i) {
      trial.data[i] = std::max(u.data[i] - step * grad[i], kPositiveFloor);
    }
    const double trial_energy = tv_energy(trial, fi, omega, p.eps);
    if (trial_energy > energy) {
      // Step too large for this iterate: reject and halve.
      if (++consecutive_increases >= 5) {
        throw Diverged("tv_denoise: energy increased for 5 consecutive iterations");
      }
      step *= 0.5;
      continue;
    }
    consecutive_increases = 0;
    const double rel_change = std::abs(energy - trial_energy) /
                              std::max(std::abs(energy), 1.0);
    u = std::move(trial);
    energy = trial_energy;
    result.energy_trace.push_back(energy);
    if (rel_change < p.tol) break;
  }

  result.image = GrayImage(f.width, f.height);
  result.image.bit_depth = f.bit_depth;
  for (std::size_t i = 0; i < n; ++i) {
    result.image.data[i] = std::clamp(u.data[i] - 1.0, 0.0, 255.0);
  }
  return result;
}

}  // namespace cxr
