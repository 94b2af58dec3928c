#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cxr/image.hpp"

namespace cxr {

/// Interleaved 8-bit RGB raster, used only for overlay rendering output.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // row-major, 3 bytes per pixel

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}
};

/// Reads a grayscale image from PNG or PGM (binary P5), detected by magic
/// bytes. Color PNGs are converted with luma weights 0.299/0.587/0.114;
/// 16-bit sources are rescaled into [0, 255] and flagged via bit_depth.
GrayImage read_image(const std::string& path);

/// Writes 8-bit output, format chosen by extension (.png or .pgm).
/// Intensities are rounded half-to-even and clamped to [0, 255].
void write_image(const GrayImage& img, const std::string& path);

void write_pgm(const GrayImage& img, const std::string& path);
void write_png_gray(const GrayImage& img, const std::string& path);
void write_png_rgb(const RgbImage& img, const std::string& path);

}  // namespace cxr
