#include "cxr/image.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <limits>

#include "cxr/error.hpp"

namespace cxr {

void validate(const GrayImage& img) {
  if (img.width <= 0 || img.height <= 0) {
    throw Error("image has non-positive dimensions");
  }
  if (img.data.size() != static_cast<std::size_t>(img.width) * img.height) {
    throw Error("image data length does not match width*height");
  }
  for (double v : img.data) {
    if (!std::isfinite(v) || v < 0.0 || v > 255.0) {
      throw Error("image intensity outside [0,255]");
    }
  }
}

BinaryMask threshold_mask(const GrayImage& img, const ThresholdParams& p) {
  BinaryMask mask(img.width, img.height);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    mask.data[i] = img.data[i] >= p.min_th ? 1 : 0;
  }
  return mask;
}

GrayImage render_mask(const BinaryMask& mask, const ThresholdParams& p) {
  GrayImage out(mask.width, mask.height, 0.0);
  for (std::size_t i = 0; i < mask.data.size(); ++i) {
    if (mask.data[i]) out.data[i] = p.max_th;
  }
  return out;
}

GrayImage inpaint(const GrayImage& img, const BinaryMask& mask,
                  int max_iters, double tol) {
  if (img.width != mask.width || img.height != mask.height) {
    throw ShapeMismatch("inpaint: image and mask dimensions differ");
  }
  const int w = img.width, h = img.height;

  // Seed value for masked pixels: mean of the unmasked set. Starting inside
  // the unmasked range keeps every Jacobi iterate inside it too (each update
  // is a convex combination), which is the discrete maximum principle.
  double sum = 0.0;
  std::size_t n_unmasked = 0;
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    if (!mask.data[i]) {
      sum += img.data[i];
      ++n_unmasked;
    }
  }
  if (n_unmasked == 0) {
    throw AllMasked("inpaint: every pixel is masked");
  }
  const double seed = sum / static_cast<double>(n_unmasked);

  GrayImage u = img;
  std::vector<std::size_t> masked;
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    if (mask.data[i]) {
      u.data[i] = seed;
      masked.push_back(i);
    }
  }
  if (masked.empty()) return u;

  std::vector<double> next(masked.size());
  for (int iter = 0; iter < max_iters; ++iter) {
    double max_update = 0.0;
    for (std::size_t m = 0; m < masked.size(); ++m) {
      const std::size_t i = masked[m];
      const int x = static_cast<int>(i % w);
      const int y = static_cast<int>(i / w);
      double acc = 0.0;
      int cnt = 0;
      if (x > 0)     { acc += u.data[i - 1]; ++cnt; }
      if (x < w - 1) { acc += u.data[i + 1]; ++cnt; }
      if (y > 0)     { acc += u.data[i - w]; ++cnt; }
      if (y < h - 1) { acc += u.data[i + w]; ++cnt; }
      next[m] = acc / cnt;
      max_update = std::max(max_update, std::abs(next[m] - u.data[i]));
    }
    for (std::size_t m = 0; m < masked.size(); ++m) u.data[masked[m]] = next[m];
    if (max_update < tol) break;
  }
  return u;
}

GrayImage resize_bilinear(const GrayImage& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) {
    throw ZeroDimension("resize_bilinear: target dimensions must be >= 1");
  }
  if (out_w == img.width && out_h == img.height) return img;

  GrayImage out(out_w, out_h);
  out.bit_depth = img.bit_depth;
  // Corner-aligned: output corners sample input corners exactly. A size-1
  // axis samples the input midpoint.
  const double sx = out_w > 1 ? double(img.width - 1) / (out_w - 1) : 0.0;
  const double sy = out_h > 1 ? double(img.height - 1) / (out_h - 1) : 0.0;
  const double ox = out_w > 1 ? 0.0 : (img.width - 1) / 2.0;
  const double oy = out_h > 1 ? 0.0 : (img.height - 1) / 2.0;

  for (int y = 0; y < out_h; ++y) {
    const double fy = oy + sy * y;
    const int y0 = std::min(static_cast<int>(fy), img.height - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = ox + sx * x;
      const int x0 = std::min(static_cast<int>(fx), img.width - 1);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      const double top = (1.0 - wx) * img.at(x0, y0) + wx * img.at(x1, y0);
      const double bot = (1.0 - wx) * img.at(x0, y1) + wx * img.at(x1, y1);
      out.at(x, y) = std::clamp((1.0 - wy) * top + wy * bot, 0.0, 255.0);
    }
  }
  return out;
}

Histogram histogram(const GrayImage& img, int bins) {
  if (bins < 1) throw Error("histogram: bins must be >= 1");
  Histogram hist;
  hist.bin_count = bins;
  hist.counts.assign(bins, 0);
  hist.bin_edges.resize(bins + 1);
  for (int i = 0; i <= bins; ++i) {
    hist.bin_edges[i] = 255.0 * i / bins;
  }
  const double width = 255.0 / bins;
  for (double v : img.data) {
    int b = static_cast<int>(v / width);
    if (b >= bins) b = bins - 1;  // top edge inclusive
    ++hist.counts[b];
  }
  return hist;
}

std::uint8_t quantize_intensity(double v) {
  v = std::clamp(v, 0.0, 255.0);
  // nearbyint under the default FE_TONEAREST mode rounds half to even.
  return static_cast<std::uint8_t>(std::nearbyint(v));
}

double psnr(const GrayImage& reference, const GrayImage& img) {
  if (reference.width != img.width || reference.height != img.height) {
    throw ShapeMismatch("psnr: dimensions differ");
  }
  double mse = 0.0;
  for (std::size_t i = 0; i < reference.data.size(); ++i) {
    const double d = reference.data[i] - img.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(reference.data.size());
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace cxr
