#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <vector>

#include "cxr/error.hpp"
#include "cxr/explain.hpp"
#include "cxr/image_io.hpp"
#include "cxr/network.hpp"
#include "cxr/rng.hpp"

namespace fs = std::filesystem;
using namespace cxr;

namespace {

fs::path test_dir() {
  const fs::path dir = fs::temp_directory_path() / "cxr_test_explain";
  fs::create_directories(dir);
  return dir;
}

NetworkSpec tiny_spec() {
  NetworkSpec spec;
  spec.block_channels = {3, 4};
  spec.dense_units = 8;
  spec.num_classes = 3;
  spec.in_channels = 3;
  spec.in_height = 16;
  spec.in_width = 16;
  return spec;
}

GrayImage noisy_image(int side, std::uint64_t seed) {
  GrayImage img(side, side);
  Rng rng(seed);
  for (double& v : img.data) v = 40.0 + 170.0 * rng.uniform();
  return img;
}

// Mean intensity of one grid cell, scaled to [0, 1]. Depends on exactly one
// segment when the fill value is zero.
PredictFn segment_mean_predictor(int side, int rows, int cols, int row,
                                 int col) {
  return [=](const GrayImage& img) {
    const int y0 = row * side / rows, y1 = (row + 1) * side / rows;
    const int x0 = col * side / cols, x1 = (col + 1) * side / cols;
    double acc = 0.0;
    int count = 0;
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        acc += img.at(x, y);
        ++count;
      }
    }
    return acc / (255.0 * count);
  };
}

}  // namespace

TEST_CASE("grad_cam emits an input-sized map in the unit interval") {
  const NetworkSpec spec = tiny_spec();
  const Network net = build_baseline(spec, 3);
  const GrayImage img = noisy_image(16, 5);
  std::vector<double> weights;
  const Heatmap map = grad_cam(net, img, 1, &weights);
  CHECK(map.width == 16);
  CHECK(map.height == 16);
  REQUIRE(map.values.size() == img.size());
  double lo = 1.0, hi = 0.0;
  for (double v : map.values) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  // A non-degenerate map spans the full interval after normalization.
  CHECK(lo == 0.0);
  CHECK(hi == 1.0);
  CHECK(weights.size() ==
        static_cast<std::size_t>(channels_after_block(
            spec, static_cast<int>(spec.block_channels.size()) - 1)));
}

TEST_CASE("grad_cam of a constant logit is all zeros") {
  const NetworkSpec spec = tiny_spec();
  Network net = build_baseline(spec, 3);
  const int target = 2;
  for (int u = 0; u < net.fc2.in_units; ++u) {
    net.fc2.w.data[net.fc2.w.index(target, u, 0, 0)] = 0.0;
  }
  std::vector<double> weights;
  const Heatmap map = grad_cam(net, noisy_image(16, 7), target, &weights);
  for (double v : map.values) CHECK(v == 0.0);
  for (double w : weights) CHECK(w == 0.0);
}

TEST_CASE("grad_cam weights ignore logit bias shifts") {
  const NetworkSpec spec = tiny_spec();
  Network net = build_baseline(spec, 9);
  const GrayImage img = noisy_image(16, 11);
  std::vector<double> before;
  grad_cam(net, img, 0, &before);
  net.fc2.b.data[0] += 5.0;
  std::vector<double> after;
  grad_cam(net, img, 0, &after);
  CHECK(before == after);
}

TEST_CASE("grad_cam validates inputs") {
  const Network net = build_baseline(tiny_spec(), 3);
  CHECK_THROWS_AS(grad_cam(net, noisy_image(8, 3), 0), ShapeMismatch);
  CHECK_THROWS_AS(network_predictor(net, 3), LabelOutOfRange);
  CHECK_THROWS_AS(network_predictor(net, -1), LabelOutOfRange);
}

TEST_CASE("lime recovers a predictor that reads one segment") {
  const int side = 32, rows = 4, cols = 4;
  const GrayImage img = noisy_image(side, 13);
  const PredictFn predict = segment_mean_predictor(side, rows, cols, 1, 2);
  LimeOptions options;
  options.rows = rows;
  options.cols = cols;
  options.num_perturbations = 80;
  options.seed = 9;
  const LimeExplanation e = lime_explain(predict, img, options);

  REQUIRE(e.segment_weights.size() == 16);
  const int target = 1 * cols + 2;
  const double target_weight = e.segment_weights[target];
  const double expected = predict(img);
  CHECK(target_weight == doctest::Approx(expected).epsilon(0.05));
  double max_other = 0.0;
  for (int s = 0; s < 16; ++s) {
    if (s != target) {
      max_other = std::max(max_other, std::abs(e.segment_weights[s]));
    }
  }
  CHECK(target_weight >= 10.0 * max_other);
  CHECK(std::abs(e.intercept) < 0.05);
  REQUIRE(e.r2.defined);
  CHECK(e.r2.value > 0.99);
}

TEST_CASE("lime on a constant predictor gives undefined fit quality") {
  const GrayImage img = noisy_image(16, 15);
  const PredictFn predict = [](const GrayImage&) { return 0.42; };
  LimeOptions options;
  options.rows = 2;
  options.cols = 2;
  options.num_perturbations = 40;
  const LimeExplanation e = lime_explain(predict, img, options);
  CHECK_FALSE(e.r2.defined);
  CHECK(e.intercept == doctest::Approx(0.42).epsilon(1e-6));
  for (double w : e.segment_weights) CHECK(std::abs(w) <= 1e-6);
}

TEST_CASE("lime surrogate stays close to the model at the original image") {
  const NetworkSpec spec = tiny_spec();
  const Network net = build_baseline(spec, 21);
  const GrayImage img = noisy_image(16, 23);
  const int target = 1;
  LimeOptions options;
  options.rows = 4;
  options.cols = 4;
  options.num_perturbations = 120;
  options.seed = 31;
  const LimeExplanation e = lime_explain(net, img, target, options);
  double fit = e.intercept;
  for (double w : e.segment_weights) fit += w;
  const double truth = network_predictor(net, target)(img);
  CHECK(std::abs(fit - truth) <= 0.2);
}

TEST_CASE("lime validates its options") {
  const GrayImage img = noisy_image(16, 33);
  const PredictFn predict = [](const GrayImage&) { return 0.5; };
  LimeOptions options;
  options.rows = 4;
  options.cols = 4;
  options.num_perturbations = 16;  // needs 17
  CHECK_THROWS_AS(lime_explain(predict, img, options), TooFewPerturbations);
  options.num_perturbations = 100;
  options.rows = 17;  // taller than the image
  CHECK_THROWS_AS(lime_explain(predict, img, options), Error);
  options.rows = 0;
  CHECK_THROWS_AS(lime_explain(predict, img, options), Error);
}

TEST_CASE("lime is seed-deterministic") {
  const NetworkSpec spec = tiny_spec();
  const Network net = build_baseline(spec, 3);
  const GrayImage img = noisy_image(16, 35);
  LimeOptions options;
  options.rows = 4;
  options.cols = 4;
  options.num_perturbations = 60;
  options.seed = 7;
  const LimeExplanation a = lime_explain(net, img, 0, options);
  const LimeExplanation b = lime_explain(net, img, 0, options);
  CHECK(a.segment_weights == b.segment_weights);
  CHECK(a.intercept == b.intercept);
  options.seed = 8;
  const LimeExplanation c = lime_explain(net, img, 0, options);
  CHECK(a.segment_weights != c.segment_weights);
}

TEST_CASE("lime json carries the fit and nulls an undefined r2") {
  LimeExplanation e;
  e.rows = 2;
  e.cols = 2;
  e.segment_weights = {0.5, -0.25, 0.0, 0.125};
  e.intercept = 0.3;
  e.r2 = {0.0, false};
  e.num_perturbations = 40;
  e.seed = 11;
  const nlohmann::json j = nlohmann::json::parse(lime_to_json(e));
  CHECK(j.at("rows") == 2);
  CHECK(j.at("cols") == 2);
  CHECK(j.at("segment_weights").size() == 4);
  CHECK(j.at("segment_weights")[1] == -0.25);
  CHECK(j.at("intercept") == 0.3);
  CHECK(j.at("r2").is_null());
  CHECK(j.at("num_perturbations") == 40);
  CHECK(j.at("seed") == 11);
  e.r2 = {0.875, true};
  const nlohmann::json k = nlohmann::json::parse(lime_to_json(e));
  CHECK(k.at("r2") == 0.875);
}

TEST_CASE("overlays render to readable png files") {
  const fs::path dir = test_dir();
  const NetworkSpec spec = tiny_spec();
  const Network net = build_baseline(spec, 3);
  const GrayImage img = noisy_image(16, 37);

  const Heatmap map = grad_cam(net, img, 0);
  const fs::path cam_path = dir / "cam.png";
  render_cam_overlay(img, map, cam_path.string());
  const GrayImage cam_back = read_image(cam_path.string());
  CHECK(cam_back.width == 16);
  CHECK(cam_back.height == 16);

  LimeOptions options;
  options.rows = 2;
  options.cols = 2;
  options.num_perturbations = 20;
  const LimeExplanation e = lime_explain(net, img, 0, options);
  const fs::path lime_path = dir / "lime.png";
  render_lime_overlay(img, e, lime_path.string());
  const GrayImage lime_back = read_image(lime_path.string());
  CHECK(lime_back.width == 16);
  CHECK(lime_back.height == 16);

  Heatmap wrong;
  wrong.width = 8;
  wrong.height = 8;
  wrong.values.assign(64, 0.0);
  CHECK_THROWS_AS(render_cam_overlay(img, wrong, (dir / "x.png").string()),
                  ShapeMismatch);
  LimeExplanation malformed;
  malformed.rows = 2;
  malformed.cols = 2;
  malformed.segment_weights = {1.0};
  CHECK_THROWS_AS(
      render_lime_overlay(img, malformed, (dir / "y.png").string()),
      ShapeMismatch);
}
