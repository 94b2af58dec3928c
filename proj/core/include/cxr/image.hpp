#pragma once

#include <cstdint>
#include <vector>

namespace cxr {

/// 2-D grayscale raster. Intensities are kept as doubles in [0, 255] across
/// the whole pipeline regardless of the source file's bit depth, so no
/// quantization loss accumulates between stages.
struct GrayImage {
  int width = 0;
  int height = 0;
  int bit_depth = 8;  // bit depth of the source file; metadata only
  std::vector<double> data;  // row-major, height*width

  GrayImage() = default;
  GrayImage(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return data.size(); }
};

/// Throws cxr::Error if dimensions and data disagree or any value is
/// non-finite / outside [0, 255].
void validate(const GrayImage& img);

/// Boolean artifact mask; true marks a pixel to be inpainted.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0) {}

  bool at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { data[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t size() const { return data.size(); }
};

struct ThresholdParams {
  double min_th = 0.0;   // mask pixels with intensity >= min_th
  double max_th = 255.0; // intensity used when rendering the mask as an image
};

struct Histogram {
  int bin_count = 0;
  std::vector<std::int64_t> counts;
  std::vector<double> bin_edges;  // bin_count + 1, ascending, spans [0, 255]
};

/// Mask is true exactly where intensity >= min_th (inclusive).
BinaryMask threshold_mask(const GrayImage& img, const ThresholdParams& p);

/// Mask rendered as an image: max_th where true, 0 elsewhere.
GrayImage render_mask(const BinaryMask& mask, const ThresholdParams& p);

/// Harmonic inpainting: masked pixels are replaced by the discrete Laplace
/// interpolation of their surroundings (Jacobi relaxation). Unmasked pixels
/// are returned bit-identical; masked results obey the discrete maximum
/// principle (they lie within [min, max] of the unmasked set). The input's
/// masked values are ignored entirely, which makes the operation exactly
/// idempotent.
GrayImage inpaint(const GrayImage& img, const BinaryMask& mask,
                  int max_iters = 10000, double tol = 0.01);

/// Corner-aligned bilinear resize; output stays within [0, 255].
GrayImage resize_bilinear(const GrayImage& img, int out_w, int out_h);

/// Equal-width histogram over [0, 255]; the top edge is inclusive so 255
/// lands in the last bin.
Histogram histogram(const GrayImage& img, int bins);

/// Round half-to-even and clamp to [0, 255]; the write-side quantizer.
std::uint8_t quantize_intensity(double v);

/// Peak signal-to-noise ratio in dB against a reference, peak 255.
double psnr(const GrayImage& reference, const GrayImage& img);

}  // namespace cxr
