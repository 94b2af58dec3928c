#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cxr/dataset.hpp"
#include "cxr/image.hpp"
#include "cxr/rng.hpp"

namespace cxr {

// Inverse-frequency class weights: w(c) = constant_c * total / (N * count_c).
// With all constants 1, sum_c count_c * w(c) == total.
struct ClassWeightTable {
  std::vector<double> weights;
  std::vector<double> constants;
  std::vector<int> counts;
  int num_classes = 0;
};

ClassWeightTable class_weights(const std::vector<int>& counts,
                               const std::vector<double>& constants = {});

struct AugmentSpec {
  double rotation_deg = 10.0;  // angle drawn from [-rotation_deg, rotation_deg]
  double scale_lo = 0.9;
  double scale_hi = 1.1;
  double shift_px = 12.0;  // per-axis shift drawn from [-shift_px, shift_px]
  double fill = 0.0;
  std::uint64_t seed = 0;
};

std::string augment_spec_to_json(const AugmentSpec& spec);
AugmentSpec augment_spec_from_json(const std::string& json_text);
AugmentSpec read_augment_spec(const std::string& path);

// Rotates by angle_deg, scales about the image center, then shifts by
// (dx, dy) pixels. Bilinear sampling; out-of-frame pixels take fill.
GrayImage affine_transform(const GrayImage& img, double angle_deg,
                           double scale, double dx, double dy, double fill);

// Draws (angle, scale, dx, dy) uniformly from spec ranges and applies them.
GrayImage transform_sample(const GrayImage& img, const AugmentSpec& spec,
                           Rng& rng);

// Augments Train records of minority classes until every class reaches
// `target` (-1 = size of the largest class). Synthesized images are written
// under out_dir and appended as SYNTHETIC records; Val/Test are untouched.
// Deterministic: each synthesized record gets a seed derived from
// (spec.seed, running index).
Manifest oversample(const Manifest& manifest, LabelScheme scheme,
                    const AugmentSpec& spec, int target,
                    const std::string& image_root, const std::string& out_dir);

}  // namespace cxr
