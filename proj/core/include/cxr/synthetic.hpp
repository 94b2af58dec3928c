#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cxr/dataset.hpp"
#include "cxr/image.hpp"
#include "cxr/rng.hpp"

namespace cxr {

// Two-class stand-in imagery: a single disc on a noisy gray background,
// bright for one class and dark for the other. Intensity alone separates
// the classes, so a small network must reach high accuracy quickly.
struct DiscSpec {
  int width = 64;
  int height = 64;
  int train_bright = 60;
  int train_dark = 140;
  int val_bright = 20;
  int val_dark = 20;
  int test_bright = 20;
  int test_dark = 20;
  double bright_value = 190.0;
  double dark_value = 40.0;
  double background_mean = 110.0;
  double background_sigma = 6.0;
  int radius_min = 10;
  int radius_max = 16;
  std::uint64_t seed = 0;
};

struct DiscSample {
  SampleRecord record;
  int cx = 0;
  int cy = 0;
  int radius = 0;
  bool bright = false;
};

struct DiscDataset {
  Manifest manifest;  // paths relative to the directory given to generate
  std::vector<DiscSample> samples;
};

GrayImage render_disc(const DiscSpec& spec, int cx, int cy, int radius,
                      bool bright, Rng& rng);

// Writes one PGM per sample into root_dir and returns the manifest plus the
// disc geometry of every sample. Bright discs are labeled COVID19, dark
// discs Normal; splits are assigned directly from the spec counts.
// Deterministic for a fixed spec.
DiscDataset generate_disc_dataset(const DiscSpec& spec,
                                  const std::string& root_dir);

}  // namespace cxr
