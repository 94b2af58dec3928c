#pragma once

#include <vector>

#include "cxr/image.hpp"

namespace cxr {

/// Knobs for the adaptive TV denoiser. The energy minimized is
///   E(u) = sum(u - f*ln u) + sum(omega * |grad u|_eps)
/// with omega(x) = 1 / (1 + k*|G_sigma * grad f|) computed once from the
/// observed image and held fixed during descent.
struct TVParams {
  double k = 0.05;      // contrast parameter, > 0
  double sigma = 1.5;   // Gaussian std-dev in pixels, > 0
  double step = 0.05;   // descent step size, > 0
  double eps = 1e-3;    // gradient-magnitude regularizer, > 0
  double tol = 1e-6;    // relative energy-change stopping threshold
  int max_iters = 500;
};

/// Per-pixel edge-stopping weights, each in (0, 1].
struct WeightField {
  int width = 0;
  int height = 0;
  std::vector<double> data;
};

struct DenoiseResult {
  GrayImage image;                  // mapped back to [0, 255]
  std::vector<double> energy_trace; // energy at init and after each accepted step
};

/// Separable Gaussian blur, kernel radius ceil(3*sigma), renormalized to sum
/// 1, half-sample symmetric reflection at borders (preserves total mass).
GrayImage gaussian_blur(const GrayImage& img, double sigma);

/// Per-pixel sqrt(ux^2 + uy^2 + eps^2) with forward differences; the last
/// row/column use a one-sided zero difference.
GrayImage grad_magnitude(const GrayImage& img, double eps);

/// omega = 1 / (1 + k * |grad(G_sigma * img)|).
WeightField edge_weight(const GrayImage& img, const TVParams& p);

/// Discrete energy sum(u - f*ln u) + sum(omega * |grad u|_eps).
/// Throws NonPositiveU if any u pixel <= 0.
double tv_energy(const GrayImage& u, const GrayImage& f,
                 const WeightField& omega, double eps);

/// Analytic gradient of tv_energy w.r.t. u (forward differences, divergence
/// as their negative adjoint). Exposed so tests can check it against finite
/// differences of tv_energy.
std::vector<double> tv_energy_gradient(const GrayImage& u, const GrayImage& f,
                                       const WeightField& omega, double eps);

/// Gradient descent on the energy above. Works internally on intensities
/// shifted to [1, 256] so the log fidelity is well-posed; the returned image
/// is mapped back to [0, 255]. A trial step that would increase the energy
/// is rejected and the step size halved; five consecutive rejections throw
/// Diverged. The trace therefore holds a non-increasing energy sequence.
DenoiseResult tv_denoise(const GrayImage& f, const TVParams& p);

}  // namespace cxr
