#include "cxr/image_io.hpp"

#include <png.h>

#include <cctype>
#include <cstdio>
#include <cstring>
#include <memory>

#include "cxr/error.hpp"

namespace cxr {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path);
  return f;
}

// --- PGM (binary P5) ---

int pgm_next_token(std::FILE* f) {
  // Skips whitespace and '#' comment lines, returns the next integer.
  int c = std::fgetc(f);
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = std::fgetc(f);
    } else if (!std::isspace(c)) {
      break;
    }
    c = std::fgetc(f);
  }
  if (c == EOF || !std::isdigit(c)) throw IoError("malformed PGM header");
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = std::fgetc(f);
  }
  return value;
}

GrayImage read_pgm(std::FILE* f, const std::string& path) {
  const int w = pgm_next_token(f);
  const int h = pgm_next_token(f);
  const int maxval = pgm_next_token(f);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
    throw IoError("invalid PGM header in " + path);
  }
  GrayImage img(w, h);
  img.bit_depth = maxval > 255 ? 16 : 8;
  const std::size_t n = img.size();
  if (maxval > 255) {
    std::vector<std::uint8_t> raw(n * 2);
    if (std::fread(raw.data(), 1, raw.size(), f) != raw.size()) {
      throw IoError("truncated PGM data in " + path);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const int v = (raw[2 * i] << 8) | raw[2 * i + 1];  // PGM is big-endian
      img.data[i] = 255.0 * v / maxval;
    }
  } else {
    std::vector<std::uint8_t> raw(n);
    if (std::fread(raw.data(), 1, raw.size(), f) != raw.size()) {
      throw IoError("truncated PGM data in " + path);
    }
    for (std::size_t i = 0; i < n; ++i) {
      img.data[i] = 255.0 * raw[i] / maxval;
    }
  }
  return img;
}

// --- PNG via libpng ---

GrayImage read_png(std::FILE* f, const std::string& path) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  std::vector<std::uint8_t> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed to decode PNG " + path);
  }
  png_init_io(png, f);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int src_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);

  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && src_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int depth = png_get_bit_depth(png, info);
  const int channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);

  buffer.resize(stride * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = buffer.data() + y * stride;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  GrayImage img(static_cast<int>(w), static_cast<int>(h));
  img.bit_depth = depth;
  const double maxval = depth == 16 ? 65535.0 : 255.0;
  for (png_uint_32 y = 0; y < h; ++y) {
    const std::uint8_t* row = buffer.data() + y * stride;
    for (png_uint_32 x = 0; x < w; ++x) {
      double px[4] = {0, 0, 0, 0};
      for (int c = 0; c < channels; ++c) {
        if (depth == 16) {
          px[c] = (row[(x * channels + c) * 2] << 8) | row[(x * channels + c) * 2 + 1];
        } else {
          px[c] = row[x * channels + c];
        }
      }
      double gray = channels >= 3 ? 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]
                                  : px[0];
      img.at(static_cast<int>(x), static_cast<int>(y)) = 255.0 * gray / maxval;
    }
  }
  return img;
}

bool has_suffix(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  std::string tail = s.substr(s.size() - suffix.size());
  for (char& c : tail) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return tail == suffix;
}

}  // namespace

GrayImage read_image(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  unsigned char magic[8] = {0};
  if (std::fread(magic, 1, sizeof magic, f.get()) != sizeof magic) {
    throw IoError("file too short: " + path);
  }
  std::rewind(f.get());
  if (magic[0] == 'P' && magic[1] == '5') {
    std::fseek(f.get(), 2, SEEK_SET);
    return read_pgm(f.get(), path);
  }
  if (png_sig_cmp(magic, 0, 8) == 0) {
    return read_png(f.get(), path);
  }
  throw IoError("unsupported image format: " + path);
}

void write_pgm(const GrayImage& img, const std::string& path) {
  FilePtr f = open_file(path, "wb");
  std::fprintf(f.get(), "P5\n%d %d\n255\n", img.width, img.height);
  std::vector<std::uint8_t> raw(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) raw[i] = quantize_intensity(img.data[i]);
  if (std::fwrite(raw.data(), 1, raw.size(), f.get()) != raw.size()) {
    throw IoError("failed to write " + path);
  }
}

namespace {

void write_png_impl(const std::string& path, int w, int h, int color_type,
                    const std::vector<std::uint8_t>& raw, std::size_t stride) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to encode PNG " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, w, h, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y) {
    png_write_row(png, const_cast<png_bytep>(raw.data() + y * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_gray(const GrayImage& img, const std::string& path) {
  std::vector<std::uint8_t> raw(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) raw[i] = quantize_intensity(img.data[i]);
  write_png_impl(path, img.width, img.height, PNG_COLOR_TYPE_GRAY, raw,
                 static_cast<std::size_t>(img.width));
}

void write_png_rgb(const RgbImage& img, const std::string& path) {
  write_png_impl(path, img.width, img.height, PNG_COLOR_TYPE_RGB, img.data,
                 static_cast<std::size_t>(img.width) * 3);
}

void write_image(const GrayImage& img, const std::string& path) {
  if (has_suffix(path, ".pgm")) {
    write_pgm(img, path);
  } else if (has_suffix(path, ".png")) {
    write_png_gray(img, path);
  } else {
    throw IoError("unsupported output extension: " + path);
  }
}

}  // namespace cxr
