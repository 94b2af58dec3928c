#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cxr/image.hpp"
#include "cxr/metrics.hpp"
#include "cxr/network.hpp"

namespace cxr {

// Saliency raster at input resolution. Values are min-max normalized to
// [0, 1]; a constant map normalizes to all zeros.
struct Heatmap {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  double at(int x, int y) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
};

// Gradient-weighted class activation map: per-channel weights are the
// spatial mean of the target logit's gradient on the last block's output,
// the map is the ReLU of the weighted activation sum, bilinearly upsampled
// to input size. channel_weights, when given, receives the per-channel
// weights. Throws ShapeMismatch if img does not match the network input.
Heatmap grad_cam(const Network& net, const GrayImage& img, int target_class,
                 std::vector<double>* channel_weights = nullptr);

// Probability of the explained class for one image.
using PredictFn = std::function<double(const GrayImage&)>;

PredictFn network_predictor(const Network& net, int target_class);

enum class LimeFill { Zero, Mean };

struct LimeOptions {
  int rows = 8;
  int cols = 8;
  int num_perturbations = 200;
  std::uint64_t seed = 0;
  LimeFill fill = LimeFill::Zero;
};

struct LimeExplanation {
  int rows = 0;
  int cols = 0;
  std::vector<double> segment_weights;  // row-major grid order
  double intercept = 0.0;
  MetricValue r2;  // undefined when the model response is constant
  int num_perturbations = 0;
  std::uint64_t seed = 0;
};

// Grid-superpixel LIME: perturbations switch segments off (replaced by the
// fill value), the model is queried per perturbation, and a weighted ridge
// least-squares fit of response on the on/off vector yields per-segment
// weights. Kernel: exp(-(d/width)^2) on Hamming distance d with
// width = sqrt(segments) * 0.75. The first perturbation is always all-on.
// Throws TooFewPerturbations when num_perturbations < segments + 1.
LimeExplanation lime_explain(const PredictFn& predict, const GrayImage& img,
                             const LimeOptions& options);
LimeExplanation lime_explain(const Network& net, const GrayImage& img,
                             int target_class, const LimeOptions& options);

std::string lime_to_json(const LimeExplanation& e);

// Grayscale underlay with the heatmap's colormap at 50% alpha.
void render_cam_overlay(const GrayImage& img, const Heatmap& map,
                        const std::string& out_path);

// Green tint for positive segment weights, red for negative, opacity
// proportional to |weight| / max |weight|.
void render_lime_overlay(const GrayImage& img, const LimeExplanation& e,
                         const std::string& out_path);

}  // namespace cxr
